"""Prompt text for every stage, plus the eight diffused-thinking templates."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .dialogue import (
    EN_MARKERS,
    ZH_MARKERS,
    DialogueHistory,
    DiffusedThoughts,
    FocusedSummary,
    MarkerTable,
    MedicalRecordSchema,
    render_dialogue,
)

SECTIONS = ("dialogue", "thoughts", "record")
DEFAULT_FUSION_ORDER = SECTIONS


class PromptError(ValueError):
    pass


class UnknownTemplate(PromptError):
    pass


class UnknownItem(PromptError):
    pass


class EmptyThoughts(PromptError):
    pass


class EmptySummary(PromptError):
    pass


@dataclass(frozen=True)
class TemplateCatalog:
    version: str
    lang: str
    templates: Mapping[int, str]
    diffused_trigger: str
    cot_trigger: str
    cot_answer_suffix: str
    focused_frame: str
    focused_question_pattern: str
    record_frame: str
    thoughts_label: str
    record_label: str
    response_trigger: str
    markers: MarkerTable = EN_MARKERS

    def template(self, template_id: int) -> str:
        try:
            return self.templates[int(template_id)]
        except (KeyError, ValueError, TypeError):
            raise UnknownTemplate(
                f"template #{template_id} not in catalog (ids {sorted(self.templates)})"
            ) from None

    def template_hash(self, template_id: int) -> str:
        return hashlib.sha256(self.template(template_id).encode("utf-8")).hexdigest()[:12]

    @property
    def template_ids(self) -> list[int]:
        return sorted(self.templates)

    @classmethod
    def from_dict(cls, data: dict, lang: str = "en") -> "TemplateCatalog":
        entry = data["languages"][lang]
        return cls(
            version=data["version"],
            lang=lang,
            templates={int(k): v for k, v in entry["templates"].items()},
            diffused_trigger=entry["diffused_trigger"],
            cot_trigger=entry["cot_trigger"],
            cot_answer_suffix=entry["cot_answer_suffix"],
            focused_frame=entry["focused_frame"],
            focused_question_pattern=entry["focused_question_pattern"],
            record_frame=entry["record_frame"],
            thoughts_label=entry["thoughts_label"],
            record_label=entry["record_label"],
            response_trigger=entry["response_trigger"],
            markers=ZH_MARKERS if lang == "zh" else EN_MARKERS,
        )

    @classmethod
    def load(cls, path=None, lang: str = "en") -> "TemplateCatalog":
        if path is None:
            text = resources.files("hot.data").joinpath("catalog.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text), lang)


_DEFAULTS: dict[str, TemplateCatalog] = {}


def default_catalog(lang: str = "en") -> TemplateCatalog:
    lang = "zh" if lang.lower().startswith("zh") else "en"
    if lang not in _DEFAULTS:
        _DEFAULTS[lang] = TemplateCatalog.load(lang=lang)
    return _DEFAULTS[lang]


def _transcript(C: DialogueHistory, catalog: TemplateCatalog) -> str:
    return render_dialogue(C, catalog.markers)


def build_diffused_prompt(C: DialogueHistory, template_id: int = 1,
                          catalog: TemplateCatalog | None = None) -> str:
    catalog = catalog or default_catalog()
    return f"{_transcript(C, catalog)}\n{catalog.template(template_id)}"


def build_direct_prompt(C: DialogueHistory, catalog: TemplateCatalog | None = None) -> str:
    catalog = catalog or default_catalog()
    return f"{_transcript(C, catalog)}\n{catalog.diffused_trigger}"


def build_focused_prompt(C: DialogueHistory, item: str,
                         schema: MedicalRecordSchema | None = None,
                         catalog: TemplateCatalog | None = None) -> str:
    """Per-item question prompt, e.g. ending ``What is the Diagnosis?``."""
    catalog = catalog or default_catalog()
    schema = schema or MedicalRecordSchema()
    if item not in schema:
        raise UnknownItem(f"{item!r} is not an item of the record schema")
    question = catalog.focused_question_pattern.format(item=item)
    return f"{_transcript(C, catalog)}\n{catalog.focused_frame}\n{question}"


def build_record_prompt(C: DialogueHistory, schema: MedicalRecordSchema | None = None,
                        catalog: TemplateCatalog | None = None) -> str:
    """Whole-record prompt listing every item header, for single-call focused thinking."""
    catalog = catalog or default_catalog()
    schema = schema or MedicalRecordSchema()
    sep = "、" if catalog.lang == "zh" else ", "
    frame = catalog.record_frame.format(items=sep.join(schema.items))
    return f"{_transcript(C, catalog)}\n{frame}\n{catalog.record_label}"


def _record_line(item: str, text: str, catalog: TemplateCatalog) -> str:
    colon = "：" if catalog.lang == "zh" else ":"
    return f"{item}{colon} {text}".rstrip()


def fuse_prompt(
    C: DialogueHistory,
    D: DiffusedThoughts | None,
    F: FocusedSummary | None,
    catalog: TemplateCatalog | None = None,
    order: Sequence[str] = DEFAULT_FUSION_ORDER,
) -> str:
    """Response-generation prompt combining the dialogue with both thinking results.

    ``None`` for ``D`` or ``F`` drops that section (ablation variants). The
    response trigger always comes last.
    """
    catalog = catalog or default_catalog()
    order = tuple(order)
    if sorted(order) != sorted(SECTIONS):
        raise PromptError(f"fusion order must be a permutation of {SECTIONS}, got {order}")
    if D is None and F is None:
        raise PromptError("fusion needs thoughts, a record, or both")
    if D is not None and len(D) == 0:
        raise EmptyThoughts("no diffused thoughts to fuse")
    if F is not None and (len(F) == 0 or F.all_empty):
        raise EmptySummary("every record entry is empty")
    blocks = []
    for section in order:
        if section == "dialogue":
            blocks.append(_transcript(C, catalog))
        elif section == "thoughts" and D is not None:
            lines = [catalog.thoughts_label]
            lines += [f"{t.index}. {' '.join(t.text.split())}" for t in D.items]
            blocks.append("\n".join(lines))
        elif section == "record" and F is not None:
            lines = [catalog.record_label]
            lines += [_record_line(e.item, " ".join(e.text.split()), catalog) for e in F.entries]
            blocks.append("\n".join(lines))
    blocks.append(catalog.response_trigger)
    return "\n".join(blocks)


def build_cot_prompts(C: DialogueHistory,
                      catalog: TemplateCatalog | None = None) -> tuple[str, str]:
    """Two-pass chain-of-thought prompts: ``(reasoning prompt, answer suffix)``."""
    catalog = catalog or default_catalog()
    stage1 = f"{_transcript(C, catalog)}\n{catalog.cot_trigger}"
    return stage1, "\n" + catalog.cot_answer_suffix


def cot_answer_prompt(stage1: str, reasoning: str, suffix: str) -> str:
    reasoning = " ".join(reasoning.split())
    return f"{stage1} {reasoning}{suffix}" if reasoning else f"{stage1}{suffix}"
