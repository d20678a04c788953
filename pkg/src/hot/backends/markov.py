"""Order-1 Markov toy language model with exact probabilities.

Serves two roles: a generation backend whose sampling distribution is fully
known, and the exact likelihood reference used by :mod:`hot.likelihood`.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .base import (
    Backend,
    Completion,
    ContextOverflow,
    EnumerationTooLarge,
    FinishReason,
    GenerationParams,
    UnknownToken,
    call_rng,
)

MAX_VOCAB = 32
MAX_ENUM_LENGTH = 6
MAX_ENUM_SIZE = 10**6


def context_key(context: Sequence[str]) -> str:
    return hashlib.sha256(" ".join(context).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class MarkovModel:
    vocabulary: tuple[str, ...]
    transition: np.ndarray
    initial: np.ndarray
    initial_by_context: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        vocab = tuple(self.vocabulary)
        V = len(vocab)
        if not 1 <= V <= MAX_VOCAB:
            raise ValueError(f"vocabulary size must be in 1..{MAX_VOCAB}")
        if len(set(vocab)) != V:
            raise ValueError("vocabulary tokens must be unique")
        T = np.array(self.transition, dtype=float)
        if T.shape != (V, V):
            raise ValueError(f"transition must be {V}x{V}")
        _check_stochastic(T, "transition")
        init = np.array(self.initial, dtype=float)
        if init.shape != (V,):
            raise ValueError(f"initial must have length {V}")
        _check_stochastic(init[None, :], "initial")
        keyed = {}
        for k, v in dict(self.initial_by_context).items():
            arr = np.array(v, dtype=float)
            if arr.shape != (V,):
                raise ValueError(f"initial_by_context[{k!r}] must have length {V}")
            _check_stochastic(arr[None, :], f"initial_by_context[{k!r}]")
            keyed[k] = arr
        T.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "vocabulary", vocab)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "initial_by_context", keyed)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(vocab)})
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_T", np.log(T))
            object.__setattr__(self, "_log_init", np.log(init))
            object.__setattr__(self, "_log_keyed", {k: np.log(v) for k, v in keyed.items()})

    @property
    def order(self) -> int:
        return 1

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownToken(token) from None

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovModel":
        vocab = d["vocabulary"]
        init = d.get("initial")
        if init is None:
            init = [1.0 / len(vocab)] * len(vocab)
        return cls(tuple(vocab), np.array(d["transition"], float), np.array(init, float),
                   {k: np.array(v, float) for k, v in d.get("initial_by_context", {}).items()})

    @classmethod
    def from_file(cls, path) -> "MarkovModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
            "initial_by_context": {k: v.tolist() for k, v in self.initial_by_context.items()},
        }

    def _start_state(self, context: Sequence[str]) -> tuple[str, object]:
        """Where the next token's distribution comes from.

        The last in-vocabulary context token selects a transition row; a
        context with none falls back to a context-keyed initial vector and
        finally to the default initial vector.
        """
        for tok in reversed(context):
            i = self._index.get(tok)
            if i is not None:
                return "row", i
        key = context_key(context)
        if key in self.initial_by_context:
            return "keyed", key
        return "initial", None

    def start_logprobs(self, context: Sequence[str]) -> np.ndarray:
        kind, ref = self._start_state(context)
        if kind == "row":
            return self._log_T[ref]
        if kind == "keyed":
            return self._log_keyed[ref]
        return self._log_init

    def next_probs(self, context: Sequence[str]) -> np.ndarray:
        kind, ref = self._start_state(context)
        if kind == "row":
            return self.transition[ref]
        if kind == "keyed":
            return self.initial_by_context[ref]
        return self.initial

    def log_transition(self, prev: int, nxt: int) -> float:
        return float(self._log_T[prev, nxt])


def _check_stochastic(M: np.ndarray, what: str):
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise ValueError(f"{what} entries must be finite and >= 0")
    bad = np.abs(M.sum(axis=1) - 1.0) > 1e-12
    if np.any(bad):
        raise ValueError(f"{what} rows must sum to 1 within 1e-12")


def sequence_logprob(model: MarkovModel, context: Sequence[str],
                     continuation: Sequence[str]) -> float:
    """Exact chain-rule log-likelihood of ``continuation`` after ``context``."""
    for tok in context:
        model.index(tok)
    ids = [model.index(t) for t in continuation]
    total = 0.0
    if not ids:
        return total
    total += float(model.start_logprobs(context)[ids[0]])
    for prev, nxt in zip(ids, ids[1:]):
        total += model.log_transition(prev, nxt)
    return total


def enumerate_sequences(model: MarkovModel, context: Sequence[str],
                        length: int) -> dict[tuple[str, ...], float]:
    """Probability of every length-``length`` continuation, by brute force.

    Accumulates log-probabilities in the same order as
    :func:`sequence_logprob`, so ``exp(sequence_logprob(...))`` reproduces
    each entry bit for bit.
    """
    logp = enumerate_logprobs(model, context, length).ravel().tolist()
    seqs = itertools.product(model.vocabulary, repeat=length)
    return {seq: math.exp(lp) for seq, lp in zip(seqs, logp)}


def enumerate_logprobs(model: MarkovModel, context: Sequence[str], length: int) -> np.ndarray:
    """Log-probabilities as a ``(V,) * length`` array (C order matches itertools.product)."""
    for tok in context:
        model.index(tok)
    V = model.size
    if length < 0:
        raise ValueError("length must be >= 0")
    if length > MAX_ENUM_LENGTH or V**length > MAX_ENUM_SIZE:
        raise EnumerationTooLarge(f"V^length = {V}^{length} exceeds enumeration bounds")
    if length == 0:
        return np.zeros(())
    logp = np.array(model.start_logprobs(context), dtype=float)
    logT = model._log_T
    for step in range(1, length):
        # previous token is the last axis
        logp = logp[..., None] + logT.reshape((1,) * (step - 1) + (V, V))
    return logp


def tempered(probs: np.ndarray, temperature: float) -> np.ndarray:
    """``p ** (1/T)`` renormalized; ``T == 0`` is a one-hot argmax (lowest index wins ties)."""
    probs = np.asarray(probs, dtype=float)
    if temperature == 0:
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return out
    if temperature == 1:
        return probs
    with np.errstate(divide="ignore"):
        logits = np.log(probs) / temperature
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def _draw(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, int(np.flatnonzero(probs)[-1]))


class MarkovBackend(Backend):
    """Sampling backend over a :class:`MarkovModel`.

    The prompt is split on whitespace; its last in-vocabulary word is the
    start state. Randomness is keyed on (seed, prompt), never on call order.
    Reported logprobs are the model's own (untempered) conditionals.
    """

    name = "markov"

    def __init__(self, model: MarkovModel, max_context: int | None = None):
        self.model = model
        self.max_context = max_context

    @classmethod
    def from_file(cls, path) -> "MarkovBackend":
        return cls(MarkovModel.from_file(path))

    def generate(self, prompt: str, params: GenerationParams) -> Completion:
        self._check_prompt(prompt)
        context = prompt.split()
        if self.max_context is not None and len(context) > self.max_context:
            raise ContextOverflow(f"prompt has {len(context)} tokens > {self.max_context}")
        model = self.model
        rng = call_rng(prompt, params.seed)
        probs = model.next_probs(context)
        logprobs = model.start_logprobs(context)
        tokens: list[str] = []
        lps: list[float] = []
        finish = FinishReason.LENGTH
        for _ in range(params.max_tokens):
            i = _draw(tempered(probs, params.temperature), float(rng.random()))
            tokens.append(model.vocabulary[i])
            lps.append(float(logprobs[i]))
            probs = model.transition[i]
            logprobs = model._log_T[i]
            if params.stop_markers:
                text = " ".join(tokens)
                if any(s and s in text for s in params.stop_markers):
                    finish = FinishReason.STOP
                    break
        text = " ".join(tokens)
        if finish is FinishReason.STOP:
            cut = min(text.find(s) for s in params.stop_markers if s and s in text)
            text = text[:cut].rstrip()
            kept = text.split()
            tokens, lps = kept, lps[: len(kept)]
        return Completion(text, tuple(tokens), tuple(lps), finish)


def sample_sequence(model: MarkovModel, context: Sequence[str], length: int,
                    rng: np.random.Generator, temperature: float = 1.0) -> tuple[str, ...]:
    """Draw one continuation with an explicit generator (used by frequency checks)."""
    probs = model.next_probs(context)
    out = []
    for _ in range(length):
        i = _draw(tempered(probs, temperature), float(rng.random()))
        out.append(model.vocabulary[i])
        probs = model.transition[i]
    return tuple(out)

