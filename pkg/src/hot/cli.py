"""``hot`` command line.

Settings resolve in three layers: built-in defaults, then the ``--config``
file (TOML or JSON), then explicit flags. Every flag has a config key,
listed in :data:`SETTINGS` as ``section.key``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

log = logging.getLogger("hot")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Setting:
    dest: str
    section: str
    key: str
    default: Any
    type: Any = str
    help: str = ""


SETTINGS: tuple[Setting, ...] = (
    Setting("backend", "backend", "kind", "mock", str, "mock, markov or http"),
    Setting("mock_script", "mock", "script_path", None, str, "JSON prompt->reply script"),
    Setting("markov_spec", "markov", "spec_path", None, str, "JSON Markov model spec"),
    Setting("base_url", "http", "base_url", None, str, "OpenAI-compatible base URL"),
    Setting("model", "http", "model", None, str, "model name for the HTTP backend"),
    Setting("api_key_env", "http", "api_key_env", "OPENAI_API_KEY", str, "env var holding the API key"),
    Setting("max_concurrency", "http", "max_concurrency", 4, int, "parallel HTTP requests"),
    Setting("timeout", "http", "timeout", 60.0, float, "HTTP timeout in seconds"),
    Setting("corpus", "experiment", "corpus", None, str, "corpus JSONL path"),
    Setting("corpus_format", "experiment", "corpus_format", "canonical-jsonl", str, "corpus format"),
    Setting("methods", "experiment", "methods", "direct,hot", str, "comma-separated methods"),
    Setting("reps", "experiment", "repetitions", 3, int, "repetitions per sample"),
    Setting("seed", "experiment", "seed", 0, int, "base seed"),
    Setting("out", "experiment", "out", None, str, "run directory"),
    Setting("fewshot_k", "experiment", "fewshot_k", 0, int, "few-shot exemplars (0 or 5)"),
    Setting("lang_mode", "experiment", "lang_mode", None, str, "whitespace or cjk-char (default: per sample)"),
    Setting("formats", "experiment", "formats", "csv,markdown,json", str, "report formats"),
    Setting("split", "experiment", "split", "test", str, "split to evaluate (train, test or all)"),
    Setting("limit", "experiment", "limit", None, int, "evaluate only the first N samples"),
    Setting("d", "hot", "d_count", 3, int, "|D|, diffused samples"),
    Setting("template", "hot", "template_id", 1, int, "diffused template id (1-8)"),
    Setting("temperature", "hot", "temperature", 0.5, float, "sampling temperature"),
    Setting("max_tokens", "hot", "max_tokens", 168, int, "max generated tokens per call"),
    Setting("focused_mode", "hot", "focused_mode", "single", str, "single or per-item"),
    Setting("filter_policy", "hot", "filter_policy", "truncate", str, "truncate or discard"),
    Setting("lang", "hot", "lang", "en", str, "prompt catalog language (en or zh)"),
    Setting("d_values", "budget", "d_values", "1,2,4", str, "comma-separated |D| values"),
)

_BY_DEST = {s.dest: s for s in SETTINGS}

EXPERIMENT_FLAGS = (
    "backend", "mock_script", "markov_spec", "base_url", "model", "api_key_env", "max_concurrency",
    "timeout", "corpus", "corpus_format", "reps", "seed", "out", "fewshot_k", "lang_mode", "formats",
    "split", "limit", "d", "template", "temperature", "max_tokens", "focused_mode", "filter_policy", "lang",
)
BACKEND_FLAGS = ("backend", "mock_script", "markov_spec", "base_url", "model", "api_key_env",
                 "max_concurrency", "timeout")
HOT_FLAGS = ("d", "template", "temperature", "max_tokens", "focused_mode", "filter_policy", "lang")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _add(p: argparse.ArgumentParser, *dests: str):
    for dest in dests:
        s = _BY_DEST[dest]
        flag = "--" + dest.replace("_", "-")
        p.add_argument(flag, dest=dest, type=s.type, default=None,
                       help=f"{s.help} [{s.section}.{s.key}, default {s.default}]")


def resolve(args: argparse.Namespace, dests: Sequence[str]) -> dict:
    """defaults < config file < flags"""
    values = {d: _BY_DEST[d].default for d in dests}
    if getattr(args, "config", None):
        from .backends import load_config

        conf = load_config(args.config)
        for d in dests:
            s = _BY_DEST[d]
            section = conf.get(s.section, {})
            if s.key in section:
                v = section[s.key]
                if isinstance(v, list):
                    v = ",".join(str(x) for x in v)
                values[d] = s.type(v) if v is not None else None
    for d in dests:
        v = getattr(args, d, None)
        if v is not None:
            values[d] = v
    return values


def _csv(value: str) -> list[str]:
    return [x.strip() for x in str(value).split(",") if x.strip()]


def _backend(v: dict):
    from .backends import load_backend

    conf = {
        "backend": {"kind": v["backend"]},
        "mock": {"script_path": v["mock_script"]} if v["mock_script"] else {},
        "markov": {"spec_path": v["markov_spec"]} if v["markov_spec"] else {},
        "http": {k: v[d] for d, k in (("base_url", "base_url"), ("model", "model"),
                                      ("api_key_env", "api_key_env"),
                                      ("max_concurrency", "max_concurrency"), ("timeout", "timeout"))
                 if v[d] is not None},
    }
    if v["backend"] == "markov" and not v["markov_spec"]:
        from importlib import resources

        conf["markov"] = {"spec_path": str(resources.files("hot.data").joinpath("markov_dialogue.json"))}
    try:
        return load_backend(conf)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _hot_config(v: dict):
    from .backends.base import GenerationParams
    from .dialogue import DEFAULT_ITEMS, ZH_ITEMS, MedicalRecordSchema
    from .pipeline import FilterPolicy, FocusedMode, HotConfig
    from .prompts import default_catalog

    if v["d"] < 1:
        raise UsageError("--d must be >= 1 (|D| is the number of diffused samples)")
    try:
        lang = v["lang"]
        return HotConfig(
            d_count=v["d"],
            focused_mode=FocusedMode(v["focused_mode"]),
            params=GenerationParams(temperature=v["temperature"], max_tokens=v["max_tokens"]),
            template_id=v["template"],
            schema=MedicalRecordSchema(ZH_ITEMS if lang == "zh" else DEFAULT_ITEMS),
            catalog=default_catalog(lang),
            filter_policy=FilterPolicy(v["filter_policy"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _experiment(v: dict, methods: Sequence[str] = ()):
    from .harness import ExperimentConfig

    if not v["corpus"]:
        raise UsageError("--corpus is required (or experiment.corpus in the config file)")
    if v["reps"] < 1:
        raise UsageError("--reps must be >= 1")
    formats = tuple("markdown" if f == "md" else f for f in _csv(v["formats"]))
    try:
        return ExperimentConfig(
            corpus=v["corpus"],
            methods=tuple(methods) or ("direct", "hot"),
            hot=_hot_config(v),
            repetitions=v["reps"],
            seed=v["seed"],
            lang_mode=v["lang_mode"],
            fewshot_k=v["fewshot_k"],
            formats=formats,
            corpus_format=v["corpus_format"],
            split=None if v["split"] == "all" else v["split"],
            limit=v["limit"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(report, v: dict, out=None):
    """Table on stdout; files go to --out."""
    from .harness import emit_report

    (out or sys.stdout).write(emit_report(report, "csv"))
    if v["out"]:
        log.info("reports written to %s", v["out"])


# --- subcommands ---------------------------------------------------------------


def cmd_run(args) -> int:
    from .harness import run_experiment
    from .pipeline import Method

    v = resolve(args, EXPERIMENT_FLAGS + ("methods",))
    try:
        methods = [Method.parse(m) for m in _csv(v["methods"])]
    except ValueError as exc:
        raise UsageError(f"bad --methods: {exc}") from None
    cfg = _experiment(v, methods)
    _emit(run_experiment(cfg, _backend(v), v["out"]), v)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .harness import ablation_matrix

    v = resolve(args, EXPERIMENT_FLAGS)
    _emit(ablation_matrix(_experiment(v), _backend(v), v["out"]), v)
    return EXIT_OK


def cmd_sweep_templates(args) -> int:
    from .harness import template_sweep

    v = resolve(args, EXPERIMENT_FLAGS)
    _emit(template_sweep(_experiment(v), _backend(v), v["out"]), v)
    return EXIT_OK


def cmd_sweep_budget(args) -> int:
    from .harness import budget_sweep

    v = resolve(args, EXPERIMENT_FLAGS + ("d_values",))
    try:
        d_values = [int(x) for x in _csv(v["d_values"])]
    except ValueError:
        raise UsageError("--d-values must be comma-separated integers") from None
    if not d_values or min(d_values) < 1:
        raise UsageError("--d-values must be non-empty and each >= 1")
    _emit(budget_sweep(_experiment(v), _backend(v), d_values, v["out"]), v)
    return EXIT_OK


def cmd_eval_metrics(args) -> int:
    from .metrics import LangMode, score_pair

    if args.pairs:
        pairs = json.loads(Path(args.pairs).read_text(encoding="utf-8"))
    elif args.hyp is not None and args.ref is not None:
        pairs = [{"hyp": args.hyp, "ref": args.ref}]
    else:
        raise UsageError("give --pairs FILE or both --hyp and --ref")
    for p in pairs:
        mode = LangMode(args.lang_mode or p.get("lang_mode", "whitespace"))
        vec = score_pair(p["hyp"], p["ref"], mode)
        print(json.dumps({"hyp": p["hyp"], "ref": p["ref"], "lang_mode": mode.value, **vec.to_dict()},
                         ensure_ascii=False))
    return EXIT_OK


def cmd_verify_factorization(args) -> int:
    from importlib import resources

    from .backends.markov import MarkovModel
    from .likelihood import check_factorization, check_marginal

    spec = args.spec or str(resources.files("hot.data").joinpath("markov_toy.json"))
    model = MarkovModel.from_file(spec)
    context = args.context.split()
    fac = check_factorization(model, context, args.d_len, args.f_len, args.sampler)
    out = {"spec": spec, "context": context, "d_len": args.d_len, "f_len": args.f_len,
           **fac.to_dict()}
    if args.a_len:
        out["marginal_max_abs_error"] = check_marginal(
            model, context, args.d_len, args.f_len, args.a_len).max_abs_error
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_anonymize(args) -> int:
    from .anonymize import DEFAULT_RULES, anonymize_sample, load_rules
    from .corpus import load_corpus, save_corpus

    rules = load_rules(args.rules) if args.rules else DEFAULT_RULES
    samples = load_corpus(args.inp, args.format)
    totals: dict[str, int] = {}
    out = []
    for s in samples:
        anon, counts = anonymize_sample(s, rules)
        out.append(anon)
        for c, n in counts.items():
            totals[c.value] = totals.get(c.value, 0) + n
    save_corpus(out, args.out)
    print(json.dumps({"samples": len(out), "substitutions": totals}))
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .corpus import load_corpus, save_corpus

    samples = load_corpus(args.inp, args.format)
    save_corpus(samples, args.out)
    print(json.dumps({"samples": len(samples), "format": args.format, "out": args.out}))
    return EXIT_OK


def _read_dialogue(path: str):
    from .corpus import CorpusSample
    from .dialogue import DialogueHistory, Role, Turn

    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if "reference" in rec:
        return CorpusSample.from_record(rec).dialogue
    turns = tuple(Turn(Role(t["role"]), t["text"]) for t in rec["dialogue"])
    return DialogueHistory(str(rec.get("id", Path(path).stem)), turns, rec.get("description"))


def cmd_respond(args) -> int:
    from dataclasses import replace

    from .pipeline import Method, run_method

    v = resolve(args, BACKEND_FLAGS + HOT_FLAGS + ("seed",))
    try:
        method = Method.parse(args.method)
    except ValueError:
        raise UsageError(f"unknown method {args.method!r}") from None
    cfg = _hot_config(v)
    cfg = replace(cfg, params=cfg.params.with_seed(v["seed"]))
    trace = run_method(_read_dialogue(args.dialogue), method, cfg, _backend(v))
    summary = {
        "method": method.label,
        "response": trace.response.text,
        "calls": trace.calls,
        "tokens": trace.generated_tokens,
        "resamples": trace.resamples,
        "stages": [c.stage for c in trace.prompts],
    }
    if args.trace:
        summary["trace"] = trace.to_dict(include_time=False)
    print(json.dumps(summary, indent=2, ensure_ascii=False))
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hot", description="Medical dialogue response generation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def exp(name, fn, help, *extra):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="TOML or JSON config file")
        _add(p, *EXPERIMENT_FLAGS, *extra)
        p.set_defaults(func=fn)
        return p

    exp("run", cmd_run, "run methods over a corpus", "methods")
    exp("ablate", cmd_ablate, "Direct, DiffusedOnly, FocusedOnly and HoT side by side")
    exp("sweep-templates", cmd_sweep_templates, "HoT with each diffused template")
    exp("sweep-budget", cmd_sweep_budget, "HoT at several |D| plus Direct and CoT", "d_values")

    p = sub.add_parser("eval-metrics", help="score hypothesis/reference pairs")
    p.add_argument("--pairs", help='JSON list of {"hyp","ref","lang_mode"?}')
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--lang-mode", choices=["whitespace", "cjk-char"])
    p.set_defaults(func=cmd_eval_metrics)

    p = sub.add_parser("verify-factorization", help="exact factorization check on a Markov model")
    p.add_argument("--markov-spec", "--spec", dest="spec", help="Markov model JSON (default: bundled toy model)")
    p.add_argument("--context", default="a", help="whitespace-separated context tokens")
    p.add_argument("--d-len", type=int, default=2)
    p.add_argument("--f-len", type=int, default=2)
    p.add_argument("--a-len", type=int, default=0, help="also run the marginal check")
    p.add_argument("--sampler", choices=["independent", "chained"], default="independent")
    p.set_defaults(func=cmd_verify_factorization)

    p = sub.add_parser("anonymize", help="redact names, addresses and contacts in a corpus")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rules", help="JSON rule list")
    p.add_argument("--format", default="canonical-jsonl")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("ingest", help="convert a dataset-shaped file to canonical JSONL")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", required=True,
                   choices=["canonical-jsonl", "meddialog-like", "covid-like", "cmdd-like"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("respond", help="one dialogue, one method, print the reply")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--dialogue", required=True, help="dialogue JSON (canonical record or {dialogue: [...]})")
    p.add_argument("--method", default="hot")
    p.add_argument("--trace", action="store_true", help="include every stage prompt and completion")
    _add(p, *BACKEND_FLAGS, *HOT_FLAGS, "seed")
    p.set_defaults(func=cmd_respond)
    return parser


def _setup_logging():
    level = os.environ.get("HOT_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        mod = type(exc).__module__
        print(f"error: {mod}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
