"""The three-stage HoT procedure and its baseline/ablation variants."""

from __future__ import annotations

import enum
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import Backend, Completion, GenerationParams
from .backends.base import UINT64_MASK
from .dialogue import (
    DialogueHistory,
    DiffusedThoughts,
    FocusedSummary,
    MarkerTable,
    MedicalRecordSchema,
    RecordEntry,
    Response,
    ThoughtContent,
)
from .prompts import (
    DEFAULT_FUSION_ORDER,
    TemplateCatalog,
    build_cot_prompts,
    build_diffused_prompt,
    build_focused_prompt,
    build_record_prompt,
    cot_answer_prompt,
    default_catalog,
    fuse_prompt,
)

RESAMPLE_ATTEMPTS = 2
RESAMPLE_STRIDE = 1000
# offsets keep the seed streams of the three stages disjoint
FOCUSED_SEED_OFFSET = 100_003
RESPONSE_SEED_OFFSET = 200_003


class Method(str, enum.Enum):
    DIRECT = "direct"
    COT = "cot"
    DIFFUSED_ONLY = "diffused"
    FOCUSED_ONLY = "focused"
    HOT = "hot"

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = name.strip().lower().replace("_", "-")
        aliases = {"diffused-only": "diffused", "focused-only": "focused"}
        return cls(aliases.get(key, key))

    @property
    def label(self) -> str:
        return {"direct": "Direct", "cot": "CoT", "diffused": "DiffusedOnly",
                "focused": "FocusedOnly", "hot": "HoT"}[self.value]


class FocusedMode(str, enum.Enum):
    SINGLE_CALL = "single"
    PER_ITEM = "per-item"


class FilterPolicy(str, enum.Enum):
    TRUNCATE = "truncate"
    DISCARD = "discard"


class PipelineError(RuntimeError):
    pass


class AllSamplesEmpty(PipelineError):
    pass


class SummaryParseFailure(PipelineError):
    pass


class EmptyResponse(PipelineError):
    pass


class StageError(PipelineError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class HotConfig:
    d_count: int = 3
    focused_mode: FocusedMode = FocusedMode.SINGLE_CALL
    params: GenerationParams = field(default_factory=GenerationParams)
    template_id: int = 1
    fusion_order: tuple[str, ...] = DEFAULT_FUSION_ORDER
    schema: MedicalRecordSchema = field(default_factory=MedicalRecordSchema)
    catalog: TemplateCatalog = field(default_factory=default_catalog)
    filter_policy: FilterPolicy = FilterPolicy.TRUNCATE
    prefix: str = ""

    def __post_init__(self):
        if self.d_count < 1:
            raise ValueError("d_count (|D|) must be >= 1")
        object.__setattr__(self, "focused_mode", FocusedMode(self.focused_mode))
        object.__setattr__(self, "filter_policy", FilterPolicy(self.filter_policy))
        object.__setattr__(self, "fusion_order", tuple(self.fusion_order))
        self.catalog.template(self.template_id)

    @property
    def markers(self) -> MarkerTable:
        return self.catalog.markers

    @property
    def focused_calls(self) -> int:
        return 1 if self.focused_mode is FocusedMode.SINGLE_CALL else len(self.schema)


def expected_calls(method: Method, cfg: HotConfig) -> int:
    """Decoding passes a method needs when no sample has to be redrawn."""
    method = Method(method)
    return {
        Method.DIRECT: 1,
        Method.COT: 2,
        Method.DIFFUSED_ONLY: cfg.d_count + 1,
        Method.FOCUSED_ONLY: cfg.focused_calls + 1,
        Method.HOT: cfg.d_count + cfg.focused_calls + 1,
    }[method]


def answer_format_filter(raw: str, markers: MarkerTable | None = None,
                         stops: Sequence[str] = (), echoes: Sequence[str] = ()) -> str:
    """Keep only the answer part of a raw completion.

    Leading echoes of the prompt trigger are stripped, then the text is cut
    at the first role or stop marker. Idempotent.
    """
    return _filter(raw, markers, stops, echoes)[0]


def _filter(raw, markers, stops, echoes) -> tuple[str, bool]:
    markers = markers or MarkerTable()
    text = raw.strip()
    heads = sorted({e.strip() for e in (*echoes, markers.doctor) if e.strip()}, key=len, reverse=True)
    stripped = True
    while stripped:
        stripped = False
        for e in heads:
            if text.startswith(e):
                text = text[len(e):].lstrip()
                stripped = True
                break
    cuts = [i for i in (text.find(m) for m in (*markers.all_markers, *stops) if m) if i >= 0]
    truncated = bool(cuts)
    if cuts:
        text = text[: min(cuts)]
    return text.strip(), truncated


@dataclass(frozen=True)
class StageCall:
    stage: str
    prompt: str
    completion: Completion

    def to_dict(self) -> dict:
        return {"stage": self.stage, "prompt": self.prompt, "completion": self.completion.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StageCall":
        return cls(d["stage"], d["prompt"], Completion.from_dict(d["completion"]))


@dataclass
class HotTrace:
    method: Method
    prompts: list[StageCall]
    response: Response
    thoughts: DiffusedThoughts | None = None
    summary: FocusedSummary | None = None
    wall_time: float = 0.0
    resamples: int = 0
    focused_mode: FocusedMode | None = None
    template_id: int = 1
    fusion_order: tuple[str, ...] = DEFAULT_FUSION_ORDER

    @property
    def calls(self) -> int:
        return len(self.prompts)

    @property
    def generated_tokens(self) -> int:
        return sum(len(c.completion.tokens) for c in self.prompts)

    def to_dict(self, include_time: bool = True) -> dict:
        d = {
            "method": self.method.value,
            "calls": self.calls,
            "generated_tokens": self.generated_tokens,
            "resamples": self.resamples,
            "focused_mode": self.focused_mode.value if self.focused_mode else None,
            "template_id": self.template_id,
            "fusion_order": list(self.fusion_order),
            "prompts": [c.to_dict() for c in self.prompts],
            "thoughts": None if self.thoughts is None else [
                {"index": t.index, "text": t.text, "raw": t.raw} for t in self.thoughts.items],
            "summary": None if self.summary is None else [
                {"item": e.item, "text": e.text, "empty": e.empty} for e in self.summary.entries],
            "response": {"text": self.response.text, "raw": self.response.raw,
                         "token_count": self.response.token_count},
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HotTrace":
        thoughts = summary = None
        if d.get("thoughts") is not None:
            thoughts = DiffusedThoughts(tuple(ThoughtContent(**t) for t in d["thoughts"]))
        if d.get("summary") is not None:
            summary = FocusedSummary(tuple(RecordEntry(**e) for e in d["summary"]))
        return cls(
            method=Method(d["method"]),
            prompts=[StageCall.from_dict(c) for c in d["prompts"]],
            response=Response(**d["response"]),
            thoughts=thoughts,
            summary=summary,
            wall_time=d.get("wall_time", 0.0),
            resamples=d.get("resamples", 0),
            focused_mode=FocusedMode(d["focused_mode"]) if d.get("focused_mode") else None,
            template_id=d.get("template_id", 1),
            fusion_order=tuple(d.get("fusion_order", DEFAULT_FUSION_ORDER)),
        )


class _Recorder:
    def __init__(self):
        self.calls: list[StageCall] = []
        self.resamples = 0

    def add(self, stage, prompt, completion):
        self.calls.append(StageCall(stage, prompt, completion))


def _seed(base: int, offset: int) -> int:
    return (base + offset) & UINT64_MASK


def _with_prefix(prompt: str, cfg: HotConfig) -> str:
    return f"{cfg.prefix}\n\n{prompt}" if cfg.prefix else prompt


def _clean(raw: str, cfg: HotConfig, echoes: Sequence[str] = ()) -> str:
    text, truncated = _filter(raw, cfg.markers, cfg.params.stop_markers,
                              (*echoes, cfg.catalog.response_trigger))
    if truncated and cfg.filter_policy is FilterPolicy.DISCARD:
        return ""
    return text


def _map(backend: Backend, fn, items):
    items = list(items)
    workers = min(getattr(backend, "max_concurrency", 1), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def diffused_thinking(C: DialogueHistory, cfg: HotConfig, backend: Backend,
                      recorder: _Recorder | None = None) -> DiffusedThoughts:
    """Sample ``cfg.d_count`` thought contents for the dialogue.

    Slot ``j`` uses seed ``seed + j - 1``; an empty slot is redrawn up to
    twice with ``seed + 1000 * attempt``. Slots still empty after that are
    dropped and the remaining thoughts renumbered.
    """
    rec = recorder if recorder is not None else _Recorder()
    prompt = _with_prefix(build_diffused_prompt(C, cfg.template_id, cfg.catalog), cfg)
    template = cfg.catalog.template(cfg.template_id)
    seeds = [_seed(cfg.params.seed, j) for j in range(cfg.d_count)]
    if backend.supports_n and cfg.d_count > 1:
        completions = backend.generate_many(prompt, cfg.params, seeds)
    else:
        completions = _map(backend, lambda s: backend.generate(prompt, cfg.params.with_seed(s)), seeds)
    raws = []
    for slot_seed, comp in zip(seeds, completions):
        rec.add("diffused", prompt, comp)
        raw, text = comp.text, _clean(comp.text, cfg, (template,))
        for attempt in range(1, RESAMPLE_ATTEMPTS + 1):
            if text:
                break
            comp = backend.generate(prompt, cfg.params.with_seed(_seed(slot_seed, RESAMPLE_STRIDE * attempt)))
            rec.add("diffused", prompt, comp)
            rec.resamples += 1
            raw, text = comp.text, _clean(comp.text, cfg, (template,))
        raws.append((raw, text))
    kept = [(raw, text) for raw, text in raws if text]
    if not kept:
        raise AllSamplesEmpty(f"all {cfg.d_count} diffused samples empty for {C.sample_id!r}")
    return DiffusedThoughts(tuple(ThoughtContent(i, text, raw) for i, (raw, text) in enumerate(kept, 1)))


def _header_pattern(items: Sequence[str]) -> re.Pattern:
    alts = "|".join(re.escape(i) for i in sorted(items, key=len, reverse=True))
    return re.compile(rf"({alts})\s*[:：]", re.IGNORECASE)


def parse_record(text: str, schema: MedicalRecordSchema) -> FocusedSummary:
    """Split single-call record output into schema entries by header matching.

    The first occurrence of each header wins; an item whose header is absent
    (or whose section is blank) is flagged empty.
    """
    canonical = {i.lower(): i for i in schema.items}
    hits: list[tuple[int, int, str]] = []
    seen = set()
    for m in _header_pattern(schema.items).finditer(text):
        item = canonical[m.group(1).lower()]
        if item in seen:
            continue
        seen.add(item)
        hits.append((m.start(), m.end(), item))
    if not hits:
        raise SummaryParseFailure("no record item headers found in focused output")
    texts = {}
    for k, (_, end, item) in enumerate(hits):
        stop = hits[k + 1][0] if k + 1 < len(hits) else len(text)
        texts[item] = " ".join(text[end:stop].split())
    return FocusedSummary.from_texts(schema, texts)


def focused_thinking(C: DialogueHistory, cfg: HotConfig, backend: Backend,
                     recorder: _Recorder | None = None) -> FocusedSummary:
    rec = recorder if recorder is not None else _Recorder()
    base = _seed(cfg.params.seed, FOCUSED_SEED_OFFSET)
    if cfg.focused_mode is FocusedMode.SINGLE_CALL:
        prompt = _with_prefix(build_record_prompt(C, cfg.schema, cfg.catalog), cfg)
        comp = backend.generate(prompt, cfg.params.with_seed(base))
        rec.add("focused", prompt, comp)
        return parse_record(_clean(comp.text, cfg, (cfg.catalog.record_label,)), cfg.schema)

    prompts = [_with_prefix(build_focused_prompt(C, item, cfg.schema, cfg.catalog), cfg)
               for item in cfg.schema.items]
    jobs = [(p, _seed(base, k)) for k, p in enumerate(prompts)]
    comps = _map(backend, lambda job: backend.generate(job[0], cfg.params.with_seed(job[1])), jobs)
    texts = {}
    for item, prompt, comp in zip(cfg.schema.items, prompts, comps):
        rec.add("focused", prompt, comp)
        texts[item] = _clean(comp.text, cfg, (f"{item}:", f"{item}："))
    return FocusedSummary.from_texts(cfg.schema, texts)


def _respond(prompt: str, stage: str, seed: int, cfg: HotConfig, backend: Backend,
             rec: _Recorder) -> Response:
    comp = backend.generate(prompt, cfg.params.with_seed(seed))
    rec.add(stage, prompt, comp)
    text = _clean(comp.text, cfg)
    for attempt in range(1, RESAMPLE_ATTEMPTS + 1):
        if text:
            break
        comp = backend.generate(prompt, cfg.params.with_seed(_seed(seed, RESAMPLE_STRIDE * attempt)))
        rec.add(stage, prompt, comp)
        rec.resamples += 1
        text = _clean(comp.text, cfg)
    if not text:
        raise EmptyResponse(f"{stage} produced no answer after {RESAMPLE_ATTEMPTS} retries")
    return Response(text, comp.text, len(comp.tokens))


def generate_response(C: DialogueHistory, D: DiffusedThoughts | None, F: FocusedSummary | None,
                      cfg: HotConfig, backend: Backend,
                      recorder: _Recorder | None = None) -> Response:
    rec = recorder if recorder is not None else _Recorder()
    prompt = _with_prefix(fuse_prompt(C, D, F, cfg.catalog, cfg.fusion_order), cfg)
    return _respond(prompt, "response", _seed(cfg.params.seed, RESPONSE_SEED_OFFSET), cfg, backend, rec)


def run_method(C: DialogueHistory, method: Method | str, cfg: HotConfig,
               backend: Backend) -> HotTrace:
    """Run one method on one dialogue and return the full trace."""
    method = Method.parse(method) if isinstance(method, str) else method
    rec = _Recorder()
    thoughts = summary = None
    stage = method.value
    start = time.perf_counter()
    try:
        if method is Method.DIRECT:
            prompt = _with_prefix(build_diffused_prompt(C, 1, cfg.catalog), cfg)
            response = _respond(prompt, "direct", cfg.params.seed, cfg, backend, rec)
        elif method is Method.COT:
            stage = "cot-reason"
            stage1, suffix = build_cot_prompts(C, cfg.catalog)
            stage1 = _with_prefix(stage1, cfg)
            comp = backend.generate(stage1, cfg.params)
            rec.add("cot-reason", stage1, comp)
            reasoning = _clean(comp.text, cfg, (cfg.catalog.cot_trigger,))
            stage = "cot-answer"
            response = _respond(cot_answer_prompt(stage1, reasoning, suffix), "cot-answer",
                                _seed(cfg.params.seed, 1), cfg, backend, rec)
        else:
            if method in (Method.DIFFUSED_ONLY, Method.HOT):
                stage = "diffused"
                thoughts = diffused_thinking(C, cfg, backend, rec)
            if method in (Method.FOCUSED_ONLY, Method.HOT):
                stage = "focused"
                summary = focused_thinking(C, cfg, backend, rec)
            stage = "response"
            response = generate_response(C, thoughts, summary, cfg, backend, rec)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return HotTrace(
        method=method,
        prompts=rec.calls,
        response=response,
        thoughts=thoughts,
        summary=summary,
        wall_time=time.perf_counter() - start,
        resamples=rec.resamples,
        focused_mode=cfg.focused_mode if method in (Method.FOCUSED_ONLY, Method.HOT) else None,
        template_id=cfg.template_id,
        fusion_order=cfg.fusion_order,
    )


def check_call_law(trace: HotTrace, cfg: HotConfig) -> bool:
    return trace.calls == expected_calls(trace.method, cfg) + trace.resamples



def record_responder(langs: Sequence[str] = ("en", "zh")):
    """Mock responder that answers whole-record prompts with one babbled line per item.

    Lets an unscripted :class:`~hot.backends.mock.MockBackend` run the
    focused stage; any other prompt returns ``None`` and falls through to
    the mock's default reply.
    """
    from .backends.mock import babble
    from .dialogue import DEFAULT_ITEMS, ZH_ITEMS

    shapes = []
    for lang in langs:
        cat = default_catalog(lang)
        items = ZH_ITEMS if cat.lang == "zh" else DEFAULT_ITEMS
        colon = "：" if cat.lang == "zh" else ":"
        shapes.append((cat.record_label, items, colon))

    def respond(prompt: str, params: GenerationParams) -> str | None:
        tail = prompt.rstrip()
        for label, items, colon in shapes:
            if tail.endswith(label):
                return "\n".join(
                    f"{item}{colon} {babble(f'{prompt}|{item}', params)}" for item in items)
        return None

    return respond
