from __future__ import annotations

import json
import subprocess
import sys

import pytest

from hot.cli import main
from hot.corpus import fixture_path, load_corpus


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_happy_path(capsys, tmp_path):
    code, out, _ = _run(capsys, "run", "--corpus", str(fixture_path("en")), "--limit", "2",
                        "--reps", "1", "--out", str(tmp_path))
    assert code == 0
    assert out.splitlines()[0] == "method,bleu2,bleu4,meteor,nist2,nist4,calls,tokens"
    assert [ln.split(",")[0] for ln in out.splitlines()[1:]] == ["Direct", "HoT"]
    for name in ("config.json", "rows.jsonl", "report.csv", "report.md", "report.json"):
        assert (tmp_path / name).exists()


def test_run_is_byte_identical(capsys, tmp_path):
    for name in ("a", "b"):
        assert _run(capsys, "run", "--corpus", str(fixture_path("en")), "--limit", "2",
                    "--out", str(tmp_path / name))[0] == 0
    for f in ("rows.jsonl", "report.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("argv", [
    ("run", "--corpus", "x.jsonl", "--d", "0"),
    ("run", "--bogus"),
    ("run",),
    ("run", "--corpus", "x.jsonl", "--methods", "magic"),
    ("sweep-budget", "--corpus", "x.jsonl", "--d-values", "0,2"),
    ("eval-metrics",),
])
def test_usage_errors_exit_1(capsys, argv):
    code, out, err = _run(capsys, *argv)
    assert code == 1 and out == "" and "error" in err


def test_missing_corpus_exits_2(capsys, tmp_path):
    code, out, err = _run(capsys, "run", "--corpus", str(tmp_path / "none.jsonl"))
    assert code == 2 and out == ""
    assert err.startswith("error: ")


def test_config_precedence(capsys, tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text(f'[experiment]\ncorpus = "{fixture_path("en")}"\nrepetitions = 1\nlimit = 1\n'
                    f'methods = ["direct"]\n[hot]\nd_count = 2\n')
    code, out, _ = _run(capsys, "sweep-budget", "--config", str(conf), "--d-values", "1")
    assert code == 0
    rows = [ln.split(",") for ln in out.splitlines()[1:]]
    assert [r[-2] for r in rows] == ["1", "2", "3"]
    # flags beat the config file: d_count 2 there, --d 4 here
    code, out2, _ = _run(capsys, "run", "--config", str(conf), "--methods", "hot", "--d", "4")
    assert out2.splitlines()[1].split(",")[-2] == "6"


def test_respond_deterministic(capsys, tmp_path):
    s = load_corpus(fixture_path("en"))[0]
    path = tmp_path / "d.json"
    path.write_text(json.dumps(s.to_record()))
    first = _run(capsys, "respond", "--dialogue", str(path), "--seed", "3")
    second = _run(capsys, "respond", "--dialogue", str(path), "--seed", "3")
    assert first[0] == 0 and first[1] == second[1]
    data = json.loads(first[1])
    assert data["calls"] == 5
    assert data["stages"] == ["diffused"] * 3 + ["focused", "response"]


def test_respond_markov(capsys, tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"dialogue": [{"role": "Patient", "text": "cough fever"}]}))
    a = _run(capsys, "respond", "--dialogue", str(path), "--backend", "markov", "--trace")
    b = _run(capsys, "respond", "--dialogue", str(path), "--backend", "markov", "--trace")
    assert a[0] == 0 and a[1] == b[1]
    assert "trace" in json.loads(a[1])


def test_eval_metrics(capsys):
    code, out, _ = _run(capsys, "eval-metrics", "--hyp", "the cat sat", "--ref", "the cat sat")
    assert code == 0
    d = json.loads(out)
    assert d["bleu2"] == 1.0 and abs(d["nist2"] - 1.584962500721156) < 1e-12


def test_verify_factorization(capsys):
    code, out, _ = _run(capsys, "verify-factorization", "--a-len", "2")
    d = json.loads(out)
    assert code == 0 and d["residual"] <= 1e-12 and d["marginal_max_abs_error"] <= 1e-10
    code, out, _ = _run(capsys, "verify-factorization", "--sampler", "chained")
    assert json.loads(out)["residual"] > 1e-3


def test_anonymize_and_ingest(capsys, tmp_path):
    src = tmp_path / "raw.jsonl"
    src.write_text(json.dumps({"id": "c1", "question": "I am Mr. Tom Lee, mail t@x.org",
                               "answer": "Dr. Ann Wu will call you", "lang": "en"}) + "\n")
    canon = tmp_path / "canon.jsonl"
    code, out, _ = _run(capsys, "ingest", "--in", str(src), "--out", str(canon), "--format", "cmdd-like")
    assert code == 0 and json.loads(out)["samples"] == 1
    anon = tmp_path / "anon.jsonl"
    code, out, _ = _run(capsys, "anonymize", "--in", str(canon), "--out", str(anon))
    assert code == 0
    assert json.loads(out)["substitutions"] == {"Name": 2, "Address": 0, "Contact": 1}
    s = load_corpus(anon)[0]
    assert s.dialogue.turns[0].text == "I am <NAME>, mail <CONTACT>"
    assert s.reference == "<NAME> will call you"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hot.cli", "run", "--d", "0", "--corpus", "x"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stdout == ""
