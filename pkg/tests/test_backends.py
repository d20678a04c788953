from __future__ import annotations

import itertools
import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hot.backends import (
    BackendUnavailable,
    Completion,
    ContextOverflow,
    GenerationParams,
    HttpBackend,
    MalformedResponse,
    MarkovBackend,
    MarkovModel,
    MockBackend,
    load_backend,
    load_config,
    sequence_logprob,
)
from hot.backends.base import EnumerationTooLarge, UnknownToken, truncate_at_stop
from hot.backends.markov import (
    enumerate_logprobs,
    enumerate_sequences,
    sample_sequence,
    tempered,
)

# --- params / completion ---------------------------------------------------------


def test_params_defaults():
    p = GenerationParams()
    assert (p.temperature, p.max_tokens, p.seed) == (0.5, 168, 0)


@pytest.mark.parametrize("kw", [{"temperature": -0.1}, {"max_tokens": 0}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        GenerationParams(**kw)


def test_seed_masked_to_64_bits():
    assert GenerationParams(seed=-1).seed == 2**64 - 1


def test_completion_logprobs_must_align():
    with pytest.raises(ValueError):
        Completion("a b", ("a", "b"), (-0.1,))
    with pytest.raises(ValueError):
        Completion("a", ("a",), (0.5,))


def test_completion_round_trip():
    c = Completion("a b", ("a", "b"), (-0.5, -1.0))
    assert Completion.from_dict(json.loads(json.dumps(c.to_dict()))) == c


def test_truncate_at_first_stop():
    assert truncate_at_stop("abc STOP def END", ["END", "STOP"]) == ("abc ", True)
    assert truncate_at_stop("abc", ["x"]) == ("abc", False)


# --- mock ------------------------------------------------------------------------


def test_mock_exact_then_prefix_then_default():
    m = MockBackend({"hello": "exact", "he": "prefix"}, default="dflt")
    p = GenerationParams()
    assert m.generate("hello", p).text == "exact"
    assert m.generate("hey", p).text == "prefix"
    assert m.generate("zzz", p).text == "dflt"


def test_mock_longest_prefix_wins():
    m = MockBackend({"a": "short", "a b": "long"})
    assert m.generate("a b c", GenerationParams()).text == "long"


def test_mock_list_indexed_by_seed():
    m = MockBackend({"q": ["zero", "one", "two"]})
    assert [m.generate("q", GenerationParams(seed=s)).text for s in range(4)] == ["zero", "one", "two", "zero"]


def test_mock_babble_is_deterministic_and_seed_sensitive():
    m = MockBackend()
    a = m.generate("the patient has a cough", GenerationParams(seed=1)).text
    assert a == m.generate("the patient has a cough", GenerationParams(seed=1)).text
    others = {m.generate("the patient has a cough", GenerationParams(seed=s)).text for s in range(2, 8)}
    assert len(others | {a}) > 1


def test_mock_caps_tokens():
    c = MockBackend(default="a b c d e").generate("x", GenerationParams(max_tokens=2))
    assert c.tokens == ("a", "b") and c.finish_reason.value == "length"


def test_mock_stop_marker():
    c = MockBackend(default="rest well Patient: thanks").generate(
        "x", GenerationParams(stop_markers=("Patient:",)))
    assert c.text == "rest well"


def test_mock_context_overflow():
    with pytest.raises(ContextOverflow):
        MockBackend(max_context=2).generate("a b c", GenerationParams())


def test_mock_from_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"script": {"q": "a"}, "default": "d"}))
    m = MockBackend.from_file(path)
    assert m.generate("q", GenerationParams()).text == "a"
    assert m.generate("r", GenerationParams()).text == "d"


# --- markov model ------------------------------------------------------------------


def test_model_rejects_non_stochastic_rows():
    with pytest.raises(ValueError):
        MarkovModel(("a", "b"), np.array([[0.5, 0.4], [0.5, 0.5]]), np.array([0.5, 0.5]))


def test_unknown_token_in_continuation(two_state):
    with pytest.raises(UnknownToken):
        sequence_logprob(two_state, ["x"], ["z"])


def test_chain_rule_by_hand(two_state):
    # start in x, then x->y->y: 0.3 * 0.6
    lp = sequence_logprob(two_state, ["x"], ["y", "y"])
    assert lp == pytest.approx(math.log(0.3 * 0.6), abs=1e-15)


def test_empty_context_uses_initial(two_state):
    assert sequence_logprob(two_state, [], ["x"]) == pytest.approx(math.log(0.5))


def test_unknown_context_token_rejected(two_state):
    with pytest.raises(UnknownToken):
        sequence_logprob(two_state, ["Doctor:"], ["y"])


def test_backend_starts_from_initial_on_unknown_prompt(two_state):
    c = MarkovBackend(two_state).generate("Doctor:", GenerationParams(temperature=1.0, max_tokens=1))
    assert c.token_logprobs == (pytest.approx(math.log(0.5)),)


@pytest.mark.parametrize("length", [0, 1, 2, 3])
def test_enumeration_sums_to_one(toy_model, length):
    probs = enumerate_sequences(toy_model, ["a"], length)
    assert len(probs) == toy_model.size ** length
    assert math.fsum(probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_enumeration_matches_chain_rule_exactly(toy_model):
    probs = enumerate_sequences(toy_model, ["b"], 3)
    for seq, p in probs.items():
        assert p == math.exp(sequence_logprob(toy_model, ["b"], seq))


def test_enumeration_order_follows_product(toy_model):
    table = enumerate_logprobs(toy_model, ["a"], 2).ravel()
    for k, seq in enumerate(itertools.product(toy_model.vocabulary, repeat=2)):
        assert table[k] == pytest.approx(sequence_logprob(toy_model, ["a"], seq), abs=1e-14)


def test_enumeration_too_large(toy_model):
    with pytest.raises(EnumerationTooLarge):
        enumerate_sequences(toy_model, ["a"], 7)


def test_model_round_trip(toy_model, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(toy_model.to_dict()))
    again = MarkovModel.from_file(path)
    assert again.vocabulary == toy_model.vocabulary
    assert np.array_equal(again.transition, toy_model.transition)


def test_tempered_zero_is_argmax():
    assert list(tempered(np.array([0.2, 0.5, 0.3]), 0)) == [0, 1, 0]
    assert list(tempered(np.array([0.4, 0.4, 0.2]), 0)) == [1, 0, 0]


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.floats(0.05, 3.0))
def test_tempered_is_a_distribution(weights, t):
    p = np.array(weights) / sum(weights)
    q = tempered(p, t)
    assert q.sum() == pytest.approx(1.0) and (q >= 0).all()


# --- markov backend ------------------------------------------------------------------


def test_markov_backend_deterministic(toy_model):
    b = MarkovBackend(toy_model)
    p = GenerationParams(seed=5, max_tokens=20)
    assert b.generate("a b", p) == b.generate("a b", p)
    assert b.generate("a b", p) != b.generate("a b", p.with_seed(6))


def test_markov_backend_greedy(two_state):
    # argmax from x is x forever
    c = MarkovBackend(two_state).generate("x", GenerationParams(temperature=0, max_tokens=4, seed=9))
    assert c.tokens == ("x", "x", "x", "x")


def test_markov_logprobs_are_model_conditionals(toy_model):
    c = MarkovBackend(toy_model).generate("c", GenerationParams(temperature=1.0, max_tokens=6, seed=3))
    assert math.fsum(c.token_logprobs) == pytest.approx(sequence_logprob(toy_model, ["c"], c.tokens))


def test_markov_stop_marker_keeps_tokens_aligned(toy_model):
    c = MarkovBackend(toy_model).generate("a", GenerationParams(max_tokens=50, seed=2, stop_markers=("c",)))
    assert "c" not in c.tokens
    assert len(c.tokens) == len(c.token_logprobs)


def test_markov_context_overflow(toy_model):
    with pytest.raises(ContextOverflow):
        MarkovBackend(toy_model, max_context=1).generate("a b", GenerationParams())


def test_sampling_frequencies_match_enumeration(toy_model):
    """1e5 length-2 draws; every cell within 4 standard errors of its probability."""
    rng = np.random.default_rng(123)
    n = 100_000
    exact = enumerate_sequences(toy_model, ["a"], 2)
    counts = dict.fromkeys(exact, 0)
    for _ in range(n):
        counts[sample_sequence(toy_model, ["a"], 2, rng)] += 1
    for seq, p in exact.items():
        se = math.sqrt(p * (1 - p) / n)
        assert abs(counts[seq] / n - p) < 4 * se


# --- http ----------------------------------------------------------------------------


def _choices(*texts):
    return {"choices": [{"index": i, "text": t, "finish_reason": "stop"} for i, t in enumerate(texts)]}


def _backend(handler, **kw):
    return HttpBackend("http://llm.test/v1", "test-model", api_key="k",
                       transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw)


def test_http_passes_text_through_and_sends_params():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        seen["auth"] = request.headers.get("authorization")
        seen["path"] = request.url.path
        return httpx.Response(200, json=_choices("  Doctor: raw text\n"))

    c = _backend(handler).generate("prompt", GenerationParams(seed=7, stop_markers=("Patient:",)))
    assert c.text == "  Doctor: raw text\n"
    assert seen["path"] == "/v1/completions"
    assert seen["auth"] == "Bearer k"
    assert (seen["temperature"], seen["max_tokens"], seen["n"], seen["seed"]) == (0.5, 168, 1, 7)
    assert seen["stop"] == ["Patient:"]


def test_http_generate_many_uses_n():
    def handler(request):
        n = json.loads(request.content)["n"]
        return httpx.Response(200, json=_choices(*[f"t{i}" for i in reversed(range(n))][::-1]))

    out = _backend(handler).generate_many("p", GenerationParams(), [1, 2, 3])
    assert [c.text for c in out] == ["t0", "t1", "t2"]


def test_http_retries_then_succeeds():
    calls = []
    delays = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503 if len(calls) == 1 else 429)
        return httpx.Response(200, json=_choices("ok"))

    b = HttpBackend("http://llm.test/v1", "m", api_key="k", transport=httpx.MockTransport(handler),
                    sleep=delays.append)
    assert b.generate("p", GenerationParams()).text == "ok"
    assert delays == [1.0, 2.0]


def test_http_gives_up_after_three_retries():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("down")

    with pytest.raises(BackendUnavailable):
        _backend(handler).generate("p", GenerationParams())
    assert len(calls) == 4


def test_http_context_overflow():
    def handler(request):
        return httpx.Response(400, json={"error": {"message": "This model's maximum context length is 4097"}})

    with pytest.raises(ContextOverflow):
        _backend(handler).generate("p", GenerationParams())


def test_http_client_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    with pytest.raises(BackendUnavailable):
        _backend(handler).generate("p", GenerationParams())
    assert len(calls) == 1


@pytest.mark.parametrize("payload", [{}, {"choices": [{"index": 0}]}, {"choices": []},
                                     {"choices": [{"index": 0, "text": 3}]}])
def test_http_malformed(payload):
    with pytest.raises(MalformedResponse):
        _backend(lambda r: httpx.Response(200, json=payload)).generate("p", GenerationParams())


def test_http_non_json_body():
    with pytest.raises(MalformedResponse):
        _backend(lambda r: httpx.Response(200, text="<html>")).generate("p", GenerationParams())


# --- config -----------------------------------------------------------------------------


def test_load_config_toml_and_backend(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[backend]\nkind = "http"\n[http]\nbase_url = "http://x/v1"\nmodel = "m"\n')
    b = load_backend(load_config(path))
    assert isinstance(b, HttpBackend) and b.backend_id == "http:m"


def test_load_backend_rejects_unknown_kind():
    with pytest.raises(ValueError):
        load_backend({"backend": {"kind": "carrier-pigeon"}})


def test_http_requires_url_and_model():
    with pytest.raises(ValueError):
        load_backend({"backend": {"kind": "http"}, "http": {"model": "m"}})
