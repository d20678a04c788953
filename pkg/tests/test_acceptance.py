"""End-to-end acceptance suite; each test prints one PASS/FAIL line."""

from __future__ import annotations

import io
import json
import math
import time
from contextlib import contextmanager, redirect_stdout
from dataclasses import replace

import numpy as np

import oracles
from conftest import DATA
from hot.anonymize import PLACEHOLDERS, anonymize, find_matches
from hot.backends import MockBackend
from hot.backends.markov import MarkovModel, enumerate_sequences, sequence_logprob
from hot.cli import main
from hot.corpus import Split, fewshot_ids, fixture_path, load_corpus
from hot.harness import (
    ExperimentConfig,
    PROVENANCE_NOTE,
    ablation_matrix,
    budget_sweep,
    emit_report,
    run_experiment,
    template_sweep,
)
from hot.likelihood import check_factorization, check_marginal
from hot.metrics import TokenizedPair, bleu_n, meteor, nist_n
from hot.pipeline import FocusedMode, HotConfig, Method, record_responder, run_method
from hot.prompts import default_catalog


@contextmanager
def criterion(n, title):
    try:
        yield
    except BaseException:
        print(f"\n[criterion {n}] FAIL  {title}")
        raise
    print(f"\n[criterion {n}] PASS  {title}")


def _mock():
    m = MockBackend(default="Drink water and rest.")
    m.responder = record_responder()
    return m


def _chains():
    rng = np.random.default_rng(2024)
    yield MarkovModel.from_file(DATA / "markov_toy.json")
    yield MarkovModel(("x", "y"), np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([0.5, 0.5]))
    for V in (2, 3):
        T = rng.random((V, V)) + 0.05
        T /= T.sum(1, keepdims=True)
        yield MarkovModel(tuple("pqr"[:V]), T, np.full(V, 1 / V))


def test_c1_metric_oracle_equivalence(capsys):
    with capsys.disabled(), criterion(1, "metrics match the brute-force oracle; anchors; < 5 s"):
        pairs = json.loads((DATA / "metric_pairs.json").read_text(encoding="utf-8"))
        tok = [TokenizedPair.from_text(p["hyp"], p["ref"], p["lang_mode"]) for p in pairs]
        t0 = time.perf_counter()
        got = [(bleu_n(t, 2), bleu_n(t, 4), nist_n(t, 2), nist_n(t, 4), meteor(t)) for t in tok]
        elapsed = time.perf_counter() - t0
        for t, g in zip(tok, got):
            h, r = list(t.hypothesis), list(t.reference)
            want = (oracles.bleu(h, r, 2), oracles.bleu(h, r, 4), oracles.nist(h, r, 2),
                    oracles.nist(h, r, 4), oracles.meteor(h, r))
            assert max(abs(a - b) for a, b in zip(g, want)) <= 1e-6
        same = TokenizedPair.from_text("the cat sat", "the cat sat")
        assert abs(bleu_n(same, 2) - 1.0) <= 1e-12
        assert abs(nist_n(same, 2) - math.log2(3)) <= 1e-12
        assert abs(meteor(same) - 0.98148) <= 5e-6
        assert abs(bleu_n(TokenizedPair.from_text("the the cat", "the cat"), 2) - 0.57735) <= 5e-6
        assert elapsed < 5.0


def test_c2_factorization(capsys):
    with capsys.disabled(), criterion(2, "factorization residual <= 1e-12; chained sampler > 1e-3; < 10 s"):
        t0 = time.perf_counter()
        for m in _chains():
            ctx = [m.vocabulary[0]]
            assert check_factorization(m, ctx, 2, 2).residual <= 1e-12
        assert check_factorization(MarkovModel.from_file(DATA / "markov_toy.json"), ["a"], 2, 2,
                                   "chained").residual > 1e-3
        assert time.perf_counter() - t0 < 10.0


def test_c3_chain_rule_and_marginal(capsys):
    with capsys.disabled(), criterion(3, "chain rule equals enumeration; marginal within 1e-10"):
        for m in _chains():
            ctx = [m.vocabulary[0]]
            for length in (1, 2):
                probs = enumerate_sequences(m, ctx, length)
                for seq, p in probs.items():
                    assert math.exp(sequence_logprob(m, ctx, seq)) == p
                assert abs(math.fsum(probs.values()) - 1.0) <= 1e-12
            for dl in (0, 1, 2):
                for fl in (1, 2):
                    assert check_marginal(m, ctx, dl, fl, 2).max_abs_error <= 1e-10


def test_c4_call_accounting(capsys, dialogue):
    with capsys.disabled(), criterion(4, "calls 1/2/5/10; budget calls [3,4,6]"):
        single, per_item = HotConfig(), HotConfig(focused_mode=FocusedMode.PER_ITEM)
        assert run_method(dialogue, Method.DIRECT, single, _mock()).calls == 1
        assert run_method(dialogue, Method.COT, single, _mock()).calls == 2
        assert run_method(dialogue, Method.HOT, single, _mock()).calls == 5
        assert run_method(dialogue, Method.HOT, per_item, _mock()).calls == 10
        cfg = ExperimentConfig(str(fixture_path("en")), repetitions=1, limit=2)
        rep = budget_sweep(cfg, _mock(), [1, 2, 4])
        assert [a.calls for a in rep.aggregates if a.method is Method.HOT] == [3, 4, 6]


def test_c5_determinism(capsys, tmp_path):
    with capsys.disabled(), criterion(5, "two `hot run` invocations give byte-identical files"):
        for name in ("a", "b"):
            with redirect_stdout(io.StringIO()):
                assert main(["run", "--corpus", str(fixture_path("en")), "--limit", "4",
                             "--out", str(tmp_path / name)]) == 0
        for f in ("rows.jsonl", "report.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_c6_protocol_shape(capsys):
    with capsys.disabled(), criterion(6, "4x5 ablation table; 8 verbatim templates; 5 leak-free exemplars"):
        cfg = ExperimentConfig(str(fixture_path("en")), repetitions=1, limit=3)
        abl = ablation_matrix(cfg, MockBackend.from_file(DATA / "mock_ordering.json"))
        assert len(abl.aggregates) == 4
        assert all(len(a.mean.values()) == 5 for a in abl.aggregates)
        sweep = template_sweep(replace(cfg, limit=1), _mock())
        cat = default_catalog()
        assert [a.group for a in sweep.aggregates] == [f"#{k} - {cat.template(k)}" for k in range(1, 9)]
        assert sweep.aggregates[1].group == "#2 - Doctor may think:"
        samples = load_corpus(fixture_path("en"))
        ids = fewshot_ids(samples, 5, 0)
        test_ids = {s.id for s in samples if s.split is Split.TEST}
        assert len(ids) == 5 and not set(ids) & test_ids
        rep = run_experiment(replace(cfg, fewshot_k=5), _mock())
        assert rep.metadata["fewshot_ids"] == ids


def test_c7_anonymization(capsys):
    with capsys.disabled(), criterion(7, "audit fixture: zero residual hits, fixed placeholders, idempotent"):
        import re

        texts = json.loads((DATA / "anon_audit.json").read_text(encoding="utf-8"))
        allowed = set(PLACEHOLDERS.values())
        for t in texts:
            out, _ = anonymize(t)
            assert find_matches(out) == []
            assert set(re.findall(r"<[A-Z]+>", out)) <= allowed
            assert anonymize(out)[0] == out


def test_c8_ordering_and_provenance(capsys):
    with capsys.disabled(), criterion(8, "HoT > Direct on BLEU-2 (oracle-known); provenance note printed"):
        from hot.metrics import tokenize

        cfg = ExperimentConfig(str(fixture_path("en")), repetitions=1)
        rep = run_experiment(cfg, MockBackend.from_file(DATA / "mock_ordering.json"))
        hot, direct = rep.aggregate("HoT").mean.bleu2, rep.aggregate("Direct").mean.bleu2
        tests = [s for s in load_corpus(fixture_path("en")) if s.split is Split.TEST]
        generic = next(r.response for r in rep.rows if r.method is Method.DIRECT)
        want_direct = sum(oracles.bleu(tokenize(generic), tokenize(s.reference), 2) for s in tests) / len(tests)
        assert hot == 1.0 and abs(direct - want_direct) <= 1e-9 and hot > direct
        backend = rep.metadata["backend_id"]
        assert PROVENANCE_NOTE.format(backend=backend) in emit_report(rep, "markdown")
