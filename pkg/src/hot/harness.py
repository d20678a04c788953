"""Experiment runs over a corpus: repetitions, ablations, sweeps and report files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

from .backends.base import UINT64_MASK, Backend, BackendError, GenerationParams
from .corpus import CorpusError, CorpusSample, Split, build_fewshot_prompt, fewshot_ids, load_corpus
from .dialogue import DEFAULT_ITEMS, ZH_ITEMS, MedicalRecordSchema
from .metrics import METRIC_LABELS, METRIC_NAMES, LangMode, MetricVector, mean_vector, score_pair, std_vector
from .pipeline import (
    FilterPolicy,
    FocusedMode,
    HotConfig,
    Method,
    PipelineError,
    run_method,
)
from .prompts import PromptError, default_catalog

log = logging.getLogger(__name__)

ABORT_FRACTION = 0.5
ABLATION_METHODS = (Method.DIRECT, Method.DIFFUSED_ONLY, Method.FOCUSED_ONLY, Method.HOT)
CSV_HEADER = ("method", *METRIC_NAMES, "calls", "tokens")
PUBLISHED_BACKENDS = ("code-davinci-001", "code-davinci-002", "GLM-130B")
PROVENANCE_NOTE = (
    "Provenance: scores were produced by backend `{backend}`, not by the models behind the "
    "published tables (code-davinci-001/002, GLM-130B); compare orderings, not absolute values."
)
STATUS_OK = "ok"
STATUS_FAILED = "failed"


class HarnessError(RuntimeError):
    pass


class AbortThreshold(HarnessError):
    pass


# --- configuration -----------------------------------------------------------


def hot_config_to_dict(cfg: HotConfig) -> dict:
    return {
        "d_count": cfg.d_count,
        "focused_mode": cfg.focused_mode.value,
        "temperature": cfg.params.temperature,
        "max_tokens": cfg.params.max_tokens,
        "stop_markers": list(cfg.params.stop_markers),
        "template_id": cfg.template_id,
        "fusion_order": list(cfg.fusion_order),
        "items": list(cfg.schema.items),
        "filter_policy": cfg.filter_policy.value,
        "lang": cfg.catalog.lang,
        "catalog_version": cfg.catalog.version,
    }


def hot_config_from_dict(d: dict) -> HotConfig:
    lang = d.get("lang", "en")
    default_items = ZH_ITEMS if lang == "zh" else DEFAULT_ITEMS
    return HotConfig(
        d_count=int(d.get("d_count", 3)),
        focused_mode=FocusedMode(d.get("focused_mode", FocusedMode.SINGLE_CALL.value)),
        params=GenerationParams(
            temperature=float(d.get("temperature", 0.5)),
            max_tokens=int(d.get("max_tokens", 168)),
            stop_markers=tuple(d.get("stop_markers", ())),
        ),
        template_id=int(d.get("template_id", 1)),
        fusion_order=tuple(d.get("fusion_order", ("dialogue", "thoughts", "record"))),
        schema=MedicalRecordSchema(tuple(d.get("items", default_items))),
        catalog=default_catalog(lang),
        filter_policy=FilterPolicy(d.get("filter_policy", FilterPolicy.TRUNCATE.value)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str
    methods: tuple[Method, ...] = (Method.DIRECT, Method.HOT)
    hot: HotConfig = field(default_factory=HotConfig)
    repetitions: int = 3
    seed: int = 0
    lang_mode: LangMode | None = None
    fewshot_k: int = 0
    formats: tuple[str, ...] = ("csv", "markdown", "json")
    corpus_format: str = "canonical-jsonl"
    split: str | None = "test"
    limit: int | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.fewshot_k not in (0, 5):
            raise ValueError("fewshot_k must be 0 or 5")
        bad = set(self.formats) - {"csv", "markdown", "json"}
        if bad:
            raise ValueError(f"unknown report formats {sorted(bad)}")
        object.__setattr__(self, "methods", tuple(
            m if isinstance(m, Method) else Method.parse(m) for m in self.methods))
        if self.lang_mode is not None:
            object.__setattr__(self, "lang_mode", LangMode(self.lang_mode))

    def to_dict(self) -> dict:
        return {
            "corpus": str(self.corpus),
            "corpus_format": self.corpus_format,
            "methods": [m.value for m in self.methods],
            "hot": hot_config_to_dict(self.hot),
            "repetitions": self.repetitions,
            "seed": self.seed,
            "lang_mode": self.lang_mode.value if self.lang_mode else None,
            "fewshot_k": self.fewshot_k,
            "formats": list(self.formats),
            "split": self.split,
            "limit": self.limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            corpus=d["corpus"],
            methods=tuple(d.get("methods", ("direct", "hot"))),
            hot=hot_config_from_dict(d.get("hot", {})),
            repetitions=int(d.get("repetitions", 3)),
            seed=int(d.get("seed", 0)),
            lang_mode=d.get("lang_mode"),
            fewshot_k=int(d.get("fewshot_k", 0)),
            formats=tuple(d.get("formats", ("csv", "markdown", "json"))),
            corpus_format=d.get("corpus_format", "canonical-jsonl"),
            split=d.get("split", "test"),
            limit=d.get("limit"),
        )

    def config_hash(self, extra: dict | None = None) -> str:
        payload = {"config": self.to_dict(), "extra": extra or {}}
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def row_seed(base: int, sample_id: str, method: Method | str, rep: int) -> int:
    """base XOR a 64-bit hash of (id, method, rep)."""
    method = method.value if isinstance(method, Method) else str(method)
    digest = hashlib.sha256(f"{sample_id}|{method}|{rep}".encode("utf-8")).digest()
    return (base ^ int.from_bytes(digest[:8], "big")) & UINT64_MASK


# --- report types ------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    group: str
    id: str
    method: Method
    rep: int
    seed: int
    response: str = ""
    metrics: MetricVector | None = None
    calls: int = 0
    tokens: int = 0
    status: str = STATUS_OK
    error: str = ""

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.group, self.id, self.rep)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "id": self.id,
            "method": self.method.value,
            "rep": self.rep,
            "seed": self.seed,
            "response": self.response,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "calls": self.calls,
            "tokens": self.tokens,
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Row":
        m = d.get("metrics")
        return cls(d["group"], d["id"], Method(d["method"]), int(d["rep"]), int(d["seed"]),
                   d.get("response", ""), None if m is None else MetricVector.from_dict(m),
                   int(d.get("calls", 0)), int(d.get("tokens", 0)),
                   d.get("status", STATUS_OK), d.get("error", ""))


@dataclass(frozen=True)
class Aggregate:
    group: str
    method: Method
    n: int
    mean: MetricVector | None
    std: MetricVector | None
    calls: float
    tokens: float
    failed: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "method": self.method.value,
            "n": self.n,
            "mean": None if self.mean is None else self.mean.to_dict(),
            "std": None if self.std is None else self.std.to_dict(),
            "calls": self.calls,
            "tokens": self.tokens,
            "failed": self.failed,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Aggregate":
        mean, std = d.get("mean"), d.get("std")
        return cls(d["group"], Method(d["method"]), int(d["n"]),
                   None if mean is None else MetricVector.from_dict(mean),
                   None if std is None else MetricVector.from_dict(std),
                   float(d["calls"]), float(d["tokens"]), int(d.get("failed", 0)),
                   dict(d.get("extra", {})))


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    rows: tuple[Row, ...]
    aggregates: tuple[Aggregate, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def failed(self) -> int:
        return sum(not r.ok for r in self.rows)

    def aggregate(self, group: str) -> Aggregate:
        for a in self.aggregates:
            if a.group == group:
                return a
        raise KeyError(group)

    def best(self) -> dict[str, str]:
        """Group with the highest mean for each metric column (first wins ties)."""
        out = {}
        scored = [a for a in self.aggregates if a.mean is not None]
        for name in METRIC_NAMES:
            if scored:
                out[name] = max(scored, key=lambda a: getattr(a.mean, name)).group
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "metadata": self.metadata,
            "best": self.best(),
            "aggregates": [a.to_dict() for a in self.aggregates],
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["kind"], tuple(Row.from_dict(r) for r in d["rows"]),
                   tuple(Aggregate.from_dict(a) for a in d["aggregates"]),
                   dict(d.get("metadata", {})))


# --- execution ---------------------------------------------------------------


@dataclass(frozen=True)
class _Group:
    name: str
    method: Method
    hot: HotConfig
    extra: dict = field(default_factory=dict)


def _load_samples(cfg: ExperimentConfig) -> tuple[list[CorpusSample], list[CorpusSample]]:
    samples = load_corpus(cfg.corpus, cfg.corpus_format)
    train = [s for s in samples if s.split is Split.TRAIN]
    rows = [s for s in samples if cfg.split is None or s.split is Split(cfg.split)]
    if cfg.limit is not None:
        rows = rows[: cfg.limit]
    if not rows:
        raise CorpusError(f"no {cfg.split or 'any'}-split samples in {cfg.corpus}")
    return train, rows


def _for_lang(hot: HotConfig, lang: str) -> HotConfig:
    """Swap in the catalog (and default record items) of the sample's language."""
    if hot.catalog.lang == lang:
        return hot
    schema = hot.schema
    if schema.items in (DEFAULT_ITEMS, ZH_ITEMS):
        schema = MedicalRecordSchema(ZH_ITEMS if lang == "zh" else DEFAULT_ITEMS)
    return replace(hot, catalog=default_catalog(lang), schema=schema)


def _run_row(group: _Group, sample: CorpusSample, rep: int, cfg: ExperimentConfig,
             backend: Backend, prefix: str) -> Row:
    seed = row_seed(cfg.seed, sample.id, group.method, rep)
    hot = _for_lang(group.hot, sample.lang.value)
    hot = replace(hot, params=hot.params.with_seed(seed), prefix=prefix)
    try:
        trace = run_method(sample.dialogue, group.method, hot, backend)
    except (PipelineError, BackendError, PromptError) as exc:
        log.warning("row %s/%s/%d failed: %s", group.name, sample.id, rep, exc)
        return Row(group.name, sample.id, group.method, rep, seed,
                   status=STATUS_FAILED, error=f"{type(exc).__name__}: {exc}")
    mode = cfg.lang_mode or LangMode.for_lang(sample.lang.value)
    metrics = score_pair(trace.response.text, sample.reference, mode)
    return Row(group.name, sample.id, group.method, rep, seed, trace.response.text, metrics,
               trace.calls, trace.generated_tokens)


def _aggregate(group: _Group, rows: Sequence[Row], reps: int) -> Aggregate:
    ok = [r for r in rows if r.ok]
    failed = len(rows) - len(ok)
    if not ok:
        return Aggregate(group.name, group.method, 0, None, None, 0.0, 0.0, failed, dict(group.extra))
    mean = mean_vector([r.metrics for r in ok])
    rep_means = [mean_vector([r.metrics for r in ok if r.rep == k])
                 for k in range(reps) if any(r.rep == k for r in ok)]
    n = len(ok)
    return Aggregate(group.name, group.method, n, mean, std_vector(rep_means),
                     sum(r.calls for r in ok) / n, sum(r.tokens for r in ok) / n,
                     failed, dict(group.extra))


def _write_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _row_line(row: Row) -> str:
    return json.dumps(row.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"


def _execute(kind: str, groups: Sequence[_Group], cfg: ExperimentConfig, backend: Backend,
             out_dir=None, extra_meta: dict | None = None) -> ExperimentReport:
    started = time.time()
    train, samples = _load_samples(cfg)
    prefix, exemplars = "", []
    if cfg.fewshot_k:
        prefix = build_fewshot_prompt(train, cfg.fewshot_k, cfg.seed)
        exemplars = fewshot_ids(train, cfg.fewshot_k, cfg.seed)
        leaked = set(exemplars) & {s.id for s in samples}
        if leaked:
            raise HarnessError(f"few-shot exemplars overlap evaluated rows: {sorted(leaked)}")

    hash_extra = {"kind": kind, "groups": [[g.name, g.method.value, hot_config_to_dict(g.hot)]
                                           for g in groups]}
    chash = cfg.config_hash(hash_extra)
    tasks = [(g, s, rep) for s in samples for g in groups for rep in range(cfg.repetitions)]
    total = len(tasks)

    done: dict[tuple, Row] = {}
    rows_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg_path = out / "config.json"
        if cfg_path.exists():
            prev = json.loads(cfg_path.read_text(encoding="utf-8")).get("config_hash")
            if prev != chash:
                raise HarnessError(f"{out} holds a run with config hash {prev}, not {chash}")
        cfg_blob = {"config": cfg.to_dict(), "kind": kind, "groups": hash_extra["groups"],
                    "config_hash": chash}
        _write_atomic(cfg_path, json.dumps(cfg_blob, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
        rows_path = out / "rows.jsonl"
        if rows_path.exists():
            for line in rows_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = Row.from_dict(json.loads(line))
                    done[row.key] = row
            log.info("resuming: %d of %d rows already present", len(done), total)

    pending = [t for t in tasks if (t[0].name, t[1].id, t[2]) not in done]
    failed = sum(not r.ok for r in done.values())
    workers = max(1, min(getattr(backend, "max_concurrency", 1), len(pending)))

    def work(task):
        g, s, rep = task
        return _run_row(g, s, rep, cfg, backend, prefix)

    sink = open(rows_path, "a", encoding="utf-8", newline="\n") if rows_path else None
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(work, pending):
                done[row.key] = row
                if sink:
                    sink.write(_row_line(row))
                    sink.flush()
                if not row.ok:
                    failed += 1
                    if failed > ABORT_FRACTION * total:
                        raise AbortThreshold(f"{failed} of {total} rows failed")
    finally:
        if sink:
            sink.close()

    ordered = tuple(done[(g.name, s.id, rep)] for (g, s, rep) in tasks)
    aggregates = tuple(
        _aggregate(g, [r for r in ordered if r.group == g.name], cfg.repetitions) for g in groups)
    metadata = {
        "config_hash": chash,
        "catalog_version": cfg.hot.catalog.version,
        "backend_id": backend.backend_id,
        "rows": total,
        "failed": failed,
        "fewshot_ids": exemplars,
        "started": started,
        "finished": time.time(),
        **(extra_meta or {}),
    }
    report = ExperimentReport(kind, ordered, aggregates, metadata)
    if out_dir is not None:
        # canonical order so that resumed and uninterrupted runs leave the same file
        _write_atomic(rows_path, "".join(_row_line(r) for r in ordered))
        for fmt in cfg.formats:
            emit_report(report, fmt, Path(out_dir) / f"report.{_SUFFIX[fmt]}")
    return report


def run_experiment(cfg: ExperimentConfig, backend: Backend, out_dir=None) -> ExperimentReport:
    """Every configured method on every sample, ``repetitions`` times."""
    groups = [_Group(m.label, m, cfg.hot) for m in cfg.methods]
    return _execute("run", groups, cfg, backend, out_dir)


def ablation_matrix(cfg: ExperimentConfig, backend: Backend, out_dir=None) -> ExperimentReport:
    groups = [_Group(m.label, m, cfg.hot) for m in ABLATION_METHODS]
    return _execute("ablation", groups, cfg, backend, out_dir)


def template_sweep(cfg: ExperimentConfig, backend: Backend, out_dir=None) -> ExperimentReport:
    """HoT once per diffused-thinking template, labelled ``#k - <template>``."""
    catalog = cfg.hot.catalog
    groups = []
    for tid in catalog.template_ids:
        text = catalog.template(tid)
        groups.append(_Group(f"#{tid} - {text}", Method.HOT, replace(cfg.hot, template_id=tid),
                             {"template_id": tid, "template": text,
                              "template_hash": catalog.template_hash(tid)}))
    return _execute("templates", groups, cfg, backend, out_dir)


def budget_sweep(cfg: ExperimentConfig, backend: Backend, d_values: Sequence[int],
                 out_dir=None) -> ExperimentReport:
    """HoT at each |D| plus the Direct and CoT anchors; calls and tokens are the cost axes."""
    d_values = list(d_values)
    if not d_values or any(int(d) < 1 for d in d_values):
        raise ValueError("d_values must be non-empty and each >= 1")
    groups = [_Group(Method.DIRECT.label, Method.DIRECT, cfg.hot, {"d": 0}),
              _Group(Method.COT.label, Method.COT, cfg.hot, {"d": 0})]
    for d in d_values:
        groups.append(_Group(f"HoT |D|={d}", Method.HOT, replace(cfg.hot, d_count=int(d)), {"d": int(d)}))
    return _execute("budget", groups, cfg, backend, out_dir, {"d_values": [int(d) for d in d_values]})


# --- reports -----------------------------------------------------------------

_SUFFIX = {"csv": "csv", "markdown": "md", "json": "json"}


def fmt4(x: float) -> str:
    """Four decimals, ties to even on the shortest decimal repr of ``x``."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def fmt_count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else fmt4(x)


def is_published_backend(backend_id: str) -> bool:
    return any(name.lower() in backend_id.lower() for name in PUBLISHED_BACKENDS)


def render_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for a in report.aggregates:
        vals = [fmt4(v) for v in a.mean.values()] if a.mean else [""] * len(METRIC_NAMES)
        w.writerow([a.group, *vals, fmt_count(a.calls), fmt_count(a.tokens)])
    return buf.getvalue()


def render_markdown(report: ExperimentReport) -> str:
    best = report.best()
    head = ["Method", *(METRIC_LABELS[m] for m in METRIC_NAMES), "Calls", "Tokens"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for a in report.aggregates:
        cells = [a.group.replace("|", "\\|")]
        for name in METRIC_NAMES:
            if a.mean is None:
                cells.append("n/a")
                continue
            v = fmt4(getattr(a.mean, name))
            cells.append(f"**{v}**" if best.get(name) == a.group else v)
        cells += [fmt_count(a.calls), fmt_count(a.tokens)]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("Bold marks the best value in each metric column.")
    if report.failed:
        lines.append(f"{report.failed} row(s) failed and are excluded from the means.")
    backend = str(report.metadata.get("backend_id", "unknown"))
    if not is_published_backend(backend):
        lines.append("")
        lines.append(PROVENANCE_NOTE.format(backend=backend))
    return "\n".join(lines) + "\n"


def render_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


_RENDER = {"csv": render_csv, "markdown": render_markdown, "json": render_json}


def emit_report(report: ExperimentReport, format: str, path=None) -> str:
    """Render ``report``; when ``path`` is given also write it there."""
    if format not in _RENDER:
        raise ValueError(f"unknown report format {format!r}")
    text = _RENDER[format](report)
    if path is not None:
        _write(path, text)
    return text


def _write(path, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write report to {path}: {exc}") from exc


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
