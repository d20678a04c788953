"""Domain types shared by the pipeline: dialogues, thoughts, records, responses."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Role(str, enum.Enum):
    PATIENT = "Patient"
    DOCTOR = "Doctor"


@dataclass(frozen=True)
class MarkerTable:
    """Role markers used when rendering transcripts and filtering outputs."""

    patient: str = "Patient:"
    doctor: str = "Doctor:"
    description: str = "Patient Description:"
    # markers that also terminate an answer but are never rendered
    extra: tuple[str, ...] = ()

    def role_marker(self, role: Role) -> str:
        return self.patient if role is Role.PATIENT else self.doctor

    @property
    def all_markers(self) -> tuple[str, ...]:
        return (self.description, self.patient, self.doctor) + tuple(self.extra)


EN_MARKERS = MarkerTable()
ZH_MARKERS = MarkerTable(
    patient="患者：",
    doctor="医生：",
    description="患者描述：",
    extra=("患者:", "医生:", "患者描述:", "Patient:", "Doctor:"),
)


def markers_for(lang: str) -> MarkerTable:
    return ZH_MARKERS if lang.lower().startswith("zh") else EN_MARKERS


class DialogueError(ValueError):
    pass


@dataclass(frozen=True)
class Turn:
    role: Role
    text: str

    def __post_init__(self):
        if not isinstance(self.role, Role):
            object.__setattr__(self, "role", Role(self.role))
        if not self.text.strip():
            raise DialogueError("turn text must be non-empty")


@dataclass(frozen=True)
class DialogueHistory:
    sample_id: str
    turns: tuple[Turn, ...]
    description: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise DialogueError(f"dialogue {self.sample_id!r} has no turns")

    @classmethod
    def from_pairs(cls, pairs, sample_id: str = "", description: str | None = None):
        return cls(sample_id, tuple(Turn(Role(r), t) for r, t in pairs), description)


def render_dialogue(history: DialogueHistory, markers: MarkerTable = EN_MARKERS) -> str:
    """Serialize a dialogue to its canonical transcript.

    One line per turn, ``"<marker> <text>"``, preceded by a description line
    when present. Line breaks inside a turn are flattened to spaces so the
    transcript parses back unambiguously.
    """
    lines = []
    if history.description:
        lines.append(f"{markers.description} {_flatten(history.description)}")
    for turn in history.turns:
        lines.append(f"{markers.role_marker(turn.role)} {_flatten(turn.text)}")
    return "\n".join(lines)


def parse_dialogue(
    transcript: str, sample_id: str = "", markers: MarkerTable = EN_MARKERS
) -> DialogueHistory:
    """Inverse of :func:`render_dialogue`."""
    description = None
    turns = []
    for lineno, line in enumerate(transcript.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith(markers.description):
            description = line[len(markers.description):].strip()
        elif line.startswith(markers.patient):
            turns.append(Turn(Role.PATIENT, line[len(markers.patient):].strip()))
        elif line.startswith(markers.doctor):
            turns.append(Turn(Role.DOCTOR, line[len(markers.doctor):].strip()))
        else:
            raise DialogueError(f"line {lineno}: no role marker in {line[:40]!r}")
    return DialogueHistory(sample_id, tuple(turns), description)


def _flatten(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class ThoughtContent:
    index: int
    text: str
    raw: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("thought index starts at 1")
        if not self.text:
            raise ValueError("thought text must be non-empty")


@dataclass(frozen=True)
class DiffusedThoughts:
    items: tuple[ThoughtContent, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if [t.index for t in self.items] != list(range(1, len(self.items) + 1)):
            raise ValueError("thought indices must be 1..|D| without gaps")

    def __len__(self):
        return len(self.items)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.items]


DEFAULT_ITEMS = (
    "Chief Complaint",
    "Current Medical History",
    "Auxiliary Examination",
    "Past History",
    "Diagnosis",
    "Suggestion",
)
ZH_ITEMS = ("主诉", "现病史", "辅助检查", "既往史", "诊断", "建议")


@dataclass(frozen=True)
class MedicalRecordSchema:
    items: tuple[str, ...] = DEFAULT_ITEMS

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValueError("schema must have at least one item")
        if any(not i.strip() for i in self.items):
            raise ValueError("schema item names must be non-empty")
        if len(set(self.items)) != len(self.items):
            raise ValueError("schema item names must be unique")

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.items


@dataclass(frozen=True)
class RecordEntry:
    item: str
    text: str
    empty: bool = False


@dataclass(frozen=True)
class FocusedSummary:
    entries: tuple[RecordEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for e in self.entries:
            if not e.text and not e.empty:
                raise ValueError(f"entry {e.item!r} has no text but is not flagged empty")

    @classmethod
    def from_texts(cls, schema: MedicalRecordSchema, texts: dict[str, str]):
        return cls(tuple(
            RecordEntry(item, texts.get(item, ""), empty=not texts.get(item, ""))
            for item in schema.items
        ))

    def matches(self, schema: MedicalRecordSchema) -> bool:
        return tuple(e.item for e in self.entries) == schema.items

    @property
    def all_empty(self) -> bool:
        return all(e.empty for e in self.entries)

    def __len__(self):
        return len(self.entries)

    def as_dict(self) -> dict[str, str]:
        return {e.item: e.text for e in self.entries}


@dataclass(frozen=True)
class Response:
    text: str
    raw: str
    token_count: int = field(default=0)

    def __post_init__(self):
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")
