"""Rule-based PII redaction with a pluggable recognizer hook for NER services."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

MAX_PASSES = 8


class Category(str, enum.Enum):
    NAME = "Name"
    ADDRESS = "Address"
    CONTACT = "Contact"

    @property
    def placeholder(self) -> str:
        return PLACEHOLDERS[self]


PLACEHOLDERS = {
    Category.NAME: "<NAME>",
    Category.ADDRESS: "<ADDRESS>",
    Category.CONTACT: "<CONTACT>",
}

# entity labels of common NER models, folded into the three categories
NER_LABEL_MAP = {
    "PERSON": Category.NAME,
    "LOC": Category.NAME,
    "ORG": Category.NAME,
    "GPE": Category.ADDRESS,
    "FAC": Category.ADDRESS,
    "PHONE": Category.CONTACT,
    "EMAIL": Category.CONTACT,
}


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    category: Category

    def __len__(self) -> int:
        return self.end - self.start


class Recognizer(Protocol):
    def find(self, text: str) -> list[Span]: ...


@dataclass(frozen=True)
class AnonymizationRule:
    """One matcher bound to a category.

    ``matcher`` is either a regex string or a recognizer id registered with
    :func:`register_recognizer`. ``min_digits`` drops regex hits with fewer
    digits, which keeps the phone pattern off short numbers such as doses.
    """

    category: Category
    matcher: str
    kind: str = "regex"
    min_digits: int = 0
    flags: int = 0

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if self.kind not in ("regex", "recognizer"):
            raise ValueError(f"rule kind must be regex or recognizer, got {self.kind!r}")
        if self.kind == "regex":
            re.compile(self.matcher, self.flags)

    @property
    def placeholder(self) -> str:
        return self.category.placeholder

    def find(self, text: str) -> list[Span]:
        if self.kind == "recognizer":
            return list(_recognizer(self.matcher).find(text))
        spans = []
        for m in re.finditer(self.matcher, text, self.flags):
            if m.end() == m.start():
                continue
            if self.min_digits and sum(c.isdigit() for c in m.group()) < self.min_digits:
                continue
            spans.append(Span(m.start(), m.end(), self.category))
        return spans

    def to_dict(self) -> dict:
        d = {"category": self.category.value, self.kind: self.matcher}
        if self.min_digits:
            d["min_digits"] = self.min_digits
        if self.flags & re.IGNORECASE:
            d["ignore_case"] = True
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnonymizationRule":
        flags = re.IGNORECASE if d.get("ignore_case") else 0
        if "recognizer" in d:
            return cls(Category(d["category"]), d["recognizer"], "recognizer")
        return cls(Category(d["category"]), d["regex"], "regex", int(d.get("min_digits", 0)), flags)


_NAME_WORD = r"(?:[A-Z]')?[A-Z][a-z]+(?:-[A-Z][a-z]+)?"
_HONORIFIC = r"\b(?:Dr|Mr|Mrs|Ms|Miss|Prof|Doctor|Nurse)\.?"
_STREET = r"(?:Street|St|Road|Rd|Avenue|Ave|Lane|Ln|Boulevard|Blvd|Drive|Dr|Way|Court|Ct)"

DEFAULT_RULES: tuple[AnonymizationRule, ...] = (
    AnonymizationRule(Category.CONTACT, r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+"),
    AnonymizationRule(
        Category.CONTACT,
        r"(?<![\w+])(?!\d{4}-\d{2}-\d{2}(?!\d))\+?\(?\d{1,4}\)?(?:[ .-]?\(?\d{2,4}\)?){2,5}(?!\w)",
        min_digits=7,
    ),
    AnonymizationRule(Category.NAME, rf"{_HONORIFIC}\s+{_NAME_WORD}(?:\s+{_NAME_WORD}){{0,2}}"),
    AnonymizationRule(Category.ADDRESS, rf"\b\d{{1,5}}\s+(?:{_NAME_WORD}\s+){{1,3}}{_STREET}\b\.?"),
    AnonymizationRule(Category.ADDRESS, rf"\b(?:{_NAME_WORD}\s+){{1,2}}(?:Town|City|County|Village)\b"),
)

_RECOGNIZERS: dict[str, Recognizer] = {}


def register_recognizer(name: str, recognizer: Recognizer) -> None:
    _RECOGNIZERS[name] = recognizer


def _recognizer(name: str) -> Recognizer:
    try:
        return _RECOGNIZERS[name]
    except KeyError:
        raise KeyError(f"no recognizer registered as {name!r}") from None


class HttpNerRecognizer:
    """Client for an external NER service.

    Posts ``{"text": ...}`` and expects ``{"entities": [{"start", "end",
    "label"}]}``. Labels outside :data:`NER_LABEL_MAP` are ignored.
    """

    def __init__(self, url: str, timeout: float = 30.0, transport=None,
                 label_map: Mapping[str, Category] = NER_LABEL_MAP):
        import httpx

        self.url = url
        self.label_map = dict(label_map)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def find(self, text: str) -> list[Span]:
        resp = self._client.post(self.url, json={"text": text})
        resp.raise_for_status()
        spans = []
        for ent in resp.json().get("entities", []):
            cat = self.label_map.get(str(ent.get("label", "")).upper())
            start, end = int(ent["start"]), int(ent["end"])
            if cat is not None and 0 <= start < end <= len(text):
                spans.append(Span(start, end, cat))
        return spans


def select_spans(spans: Iterable[Span]) -> list[Span]:
    """Non-overlapping subset, longest first, ties to the leftmost; returned in text order."""
    chosen: list[Span] = []
    for s in sorted(spans, key=lambda s: (-len(s), s.start)):
        if all(s.end <= c.start or s.start >= c.end for c in chosen):
            chosen.append(s)
    return sorted(chosen, key=lambda s: s.start)


def find_matches(text: str, rules: Sequence[AnonymizationRule] = DEFAULT_RULES) -> list[Span]:
    spans = []
    for rule in rules:
        spans.extend(rule.find(text))
    return select_spans(spans)


def anonymize(text: str, rules: Sequence[AnonymizationRule] = DEFAULT_RULES
              ) -> tuple[str, dict[Category, int]]:
    """Replace every rule match with its category placeholder.

    Passes repeat until nothing matches, so the output has no residual hits and
    a second call is a no-op.
    """
    if not rules:
        raise ValueError("anonymize needs at least one rule")
    counts = {c: 0 for c in Category}
    for _ in range(MAX_PASSES):
        spans = find_matches(text, rules)
        if not spans:
            break
        parts, pos = [], 0
        for s in spans:
            parts.append(text[pos:s.start])
            parts.append(s.category.placeholder)
            counts[s.category] += 1
            pos = s.end
        parts.append(text[pos:])
        text = "".join(parts)
    return text, counts


def load_rules(path) -> tuple[AnonymizationRule, ...]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data["rules"]
    return tuple(AnonymizationRule.from_dict(d) for d in data)


def anonymize_sample(sample, rules: Sequence[AnonymizationRule] = DEFAULT_RULES):
    """Anonymize every text field of a :class:`~hot.corpus.CorpusSample`."""
    from dataclasses import replace

    from .dialogue import DialogueHistory, Turn

    total = {c: 0 for c in Category}

    def run(t: str) -> str:
        out, counts = anonymize(t, rules)
        for c, n in counts.items():
            total[c] += n
        return out

    turns = tuple(Turn(t.role, run(t.text)) for t in sample.dialogue.turns)
    desc = sample.dialogue.description
    dialogue = DialogueHistory(sample.dialogue.sample_id, turns,
                               run(desc) if desc is not None else None)
    out = replace(sample, dialogue=dialogue, reference=run(sample.reference))
    return out, total
