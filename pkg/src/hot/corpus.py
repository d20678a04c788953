"""Corpus ingestion (canonical JSONL plus dataset-shaped adapters) and few-shot prompts."""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .dialogue import (
    DialogueError,
    DialogueHistory,
    Role,
    Turn,
    markers_for,
    parse_dialogue,
    render_dialogue,
)

FORMATS = ("canonical-jsonl", "meddialog-like", "covid-like", "cmdd-like")


class CorpusError(ValueError):
    pass


class ParseError(CorpusError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(CorpusError):
    pass


class InsufficientTrainData(CorpusError):
    pass


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


class Lang(str, enum.Enum):
    EN = "en"
    ZH = "zh"


@dataclass(frozen=True)
class CorpusSample:
    id: str
    dialogue: DialogueHistory
    reference: str
    split: Split = Split.TEST
    lang: Lang = Lang.EN

    def __post_init__(self):
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "lang", Lang(self.lang))
        if not self.reference.strip():
            raise CorpusError(f"sample {self.id!r} has an empty reference")

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "lang": self.lang.value,
            "split": self.split.value,
            "dialogue": [{"role": t.role.value, "text": t.text} for t in self.dialogue.turns],
        }
        if self.dialogue.description is not None:
            rec["description"] = self.dialogue.description
        rec["reference"] = self.reference
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CorpusSample":
        sid = str(rec["id"])
        turns = tuple(Turn(Role(t["role"]), t["text"]) for t in rec["dialogue"])
        dialogue = DialogueHistory(sid, turns, rec.get("description"))
        return cls(sid, dialogue, rec["reference"], Split(rec.get("split", "test")),
                   Lang(rec.get("lang", "en")))


def _split_last_doctor(turns: list[Turn]) -> tuple[list[Turn], str]:
    if not turns or turns[-1].role is not Role.DOCTOR:
        raise CorpusError("dialogue must end with a doctor turn to serve as the reference")
    return turns[:-1], turns[-1].text


def _from_meddialog(rec: dict) -> CorpusSample:
    # {"id", "description"?, "utterances": ["Patient: ...", "Doctor: ...", ...]}
    lang = Lang(rec.get("lang", "en"))
    markers = markers_for(lang.value)
    turns = []
    for u in rec["utterances"]:
        if u.startswith(markers.patient) or u.lower().startswith("patient:"):
            turns.append(Turn(Role.PATIENT, u.split(":", 1)[1].strip() if ":" in u[:10] else u[len(markers.patient):].strip()))
        elif u.startswith(markers.doctor) or u.lower().startswith("doctor:"):
            turns.append(Turn(Role.DOCTOR, u.split(":", 1)[1].strip() if ":" in u[:10] else u[len(markers.doctor):].strip()))
        else:
            raise CorpusError(f"utterance without role label: {u[:40]!r}")
    history, reference = _split_last_doctor(turns)
    sid = str(rec["id"])
    return CorpusSample(sid, DialogueHistory(sid, tuple(history), rec.get("description")),
                        reference, Split(rec.get("split", "test")), lang)


def _from_covid(rec: dict) -> CorpusSample:
    # {"id", "text": "Patient Description: ...\nPatient: ...\nDoctor: ..."}
    lang = Lang(rec.get("lang", "en"))
    sid = str(rec["id"])
    parsed = parse_dialogue(rec["text"], sid, markers_for(lang.value))
    history, reference = _split_last_doctor(list(parsed.turns))
    return CorpusSample(sid, DialogueHistory(sid, tuple(history), parsed.description),
                        reference, Split(rec.get("split", "test")), lang)


def _from_cmdd(rec: dict) -> CorpusSample:
    # single round: {"id", "description"?, "question", "answer"}
    sid = str(rec["id"])
    dialogue = DialogueHistory(sid, (Turn(Role.PATIENT, rec["question"]),), rec.get("description"))
    return CorpusSample(sid, dialogue, rec["answer"], Split(rec.get("split", "test")),
                        Lang(rec.get("lang", "zh")))


_ADAPTERS = {
    "canonical-jsonl": CorpusSample.from_record,
    "meddialog-like": _from_meddialog,
    "covid-like": _from_covid,
    "cmdd-like": _from_cmdd,
}


def load_corpus(path, format: str = "canonical-jsonl") -> list[CorpusSample]:
    """Read one sample per JSONL line; the adapter named by ``format`` normalizes it."""
    if format not in _ADAPTERS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    adapter = _ADAPTERS[format]
    samples = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                sample = adapter(json.loads(line))
            except (ValueError, KeyError, TypeError, DialogueError) as exc:
                if isinstance(exc, DuplicateId):
                    raise
                raise ParseError(lineno, f"{type(exc).__name__}: {exc}") from exc
            if sample.id in seen:
                raise DuplicateId(f"line {lineno}: duplicate id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    return samples


def save_corpus(samples: Iterable[CorpusSample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def fixture_path(lang: str = "en") -> Path:
    """Path of a bundled synthetic corpus (60 samples, train/test)."""
    return Path(str(resources.files("hot.data").joinpath(f"fixture_{lang}.jsonl")))


def build_fewshot_prompt(train: Sequence[CorpusSample], k: int = 5, seed: int = 0) -> str:
    """Render ``k`` randomly chosen train samples as transcript + gold doctor reply.

    Only samples whose split is Train are eligible. Selection is a seeded
    uniform draw without replacement, so the prefix is stable for a fixed
    (train order, k, seed).
    """
    pool = [s for s in train if s.split is Split.TRAIN]
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(pool):
        raise InsufficientTrainData(f"need {k} train samples, have {len(pool)}")
    if k == 0:
        return ""
    chosen = random.Random(seed).sample(pool, k)
    blocks = []
    for s in chosen:
        markers = markers_for(s.lang.value)
        blocks.append(f"{render_dialogue(s.dialogue, markers)}\n{markers.doctor} {s.reference}")
    return "\n\n".join(blocks)


def fewshot_ids(train: Sequence[CorpusSample], k: int = 5, seed: int = 0) -> list[str]:
    pool = [s for s in train if s.split is Split.TRAIN]
    if k > len(pool):
        raise InsufficientTrainData(f"need {k} train samples, have {len(pool)}")
    return [s.id for s in random.Random(seed).sample(pool, k)] if k else []
