"""Exact checks of the HoT likelihood decomposition on a Markov toy model.

The answer likelihood factorizes as

    P(A | C) = P(A | C, D, F) * P(D | C) * P(F | C)

once the diffused thoughts D and the focused record F are conditionally
independent given the dialogue C. The pipeline makes that assumption true by drawing D and F in separate calls conditioned only on C;
:func:`check_factorization` measures it, and the chained sampler, which draws
F after D, shows the check is not vacuous.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .backends.base import EnumerationTooLarge
from .backends.markov import (
    MAX_ENUM_SIZE,
    MarkovModel,
    enumerate_logprobs,
    enumerate_sequences,
    sequence_logprob,
)

SAMPLERS = ("independent", "chained")


@dataclass(frozen=True)
class FactorizationReport:
    log_joint: float
    log_d: float
    log_f: float
    residual: float
    sampler: str = "independent"
    pairs: int = 0
    worst_d: tuple[str, ...] = ()
    worst_f: tuple[str, ...] = ()

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_d"] = list(self.worst_d)
        d["worst_f"] = list(self.worst_f)
        return d


def answer_logprob(model: MarkovModel, C_tokens: Sequence[str], D_tokens: Sequence[str],
                   F_tokens: Sequence[str], A_tokens: Sequence[str]) -> float:
    """log P(A | C, D, F): chain rule over the concatenated context C + D + F."""
    return sequence_logprob(model, [*C_tokens, *D_tokens, *F_tokens], A_tokens)


def _check_bounds(model: MarkovModel, *lengths: int):
    if model.size ** sum(lengths) > MAX_ENUM_SIZE:
        raise EnumerationTooLarge(f"V^{sum(lengths)} joint outcomes exceed {MAX_ENUM_SIZE}")


def joint_table(model: MarkovModel, C: Sequence[str], d_len: int, f_len: int,
                sampler: str = "independent") -> np.ndarray:
    """P(D, F | C) for every (D, F), rows indexed like ``itertools.product``.

    ``independent`` draws D and F from C separately (the pipeline); ``chained``
    draws F with D appended to its context.
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}")
    _check_bounds(model, d_len, f_len)
    pd = np.exp(enumerate_logprobs(model, C, d_len)).ravel()
    if sampler == "independent":
        pf = np.exp(enumerate_logprobs(model, C, f_len)).ravel()
        return np.outer(pd, pf)
    V = model.size
    rows = []
    for idx, p in enumerate(pd):
        # the last token of D sets the start state of F
        last = model.vocabulary[idx % V] if d_len else None
        ctx = [*C, last] if last is not None else list(C)
        rows.append(p * np.exp(enumerate_logprobs(model, ctx, f_len)).ravel())
    return np.array(rows)


def check_factorization(model: MarkovModel, C_tokens: Sequence[str], d_len: int,
                        f_len: int, sampler: str = "independent") -> FactorizationReport:
    """Largest |log P(D,F|C) - log P(D|C) - log P(F|C)| over all (D, F).

    P(D|C) and P(F|C) are the per-stage chain-rule likelihoods; the joint
    comes from the sampling process named by ``sampler``.
    """
    joint = joint_table(model, C_tokens, d_len, f_len, sampler)
    d_seqs = list(enumerate_sequences(model, C_tokens, d_len))
    f_seqs = list(enumerate_sequences(model, C_tokens, f_len))
    log_d = [sequence_logprob(model, C_tokens, d) for d in d_seqs]
    log_f = [sequence_logprob(model, C_tokens, f) for f in f_seqs]
    worst = (-1.0, 0, 0)
    for a, ld in enumerate(log_d):
        for b, lf in enumerate(log_f):
            j = joint[a, b]
            if j == 0 and ld + lf == -math.inf:
                continue
            lj = math.log(j) if j > 0 else -math.inf
            r = abs(lj - (ld + lf)) if math.isfinite(lj) and math.isfinite(ld + lf) else math.inf
            if r > worst[0]:
                worst = (r, a, b)
    r, a, b = worst
    lj = math.log(joint[a, b]) if joint[a, b] > 0 else -math.inf
    return FactorizationReport(
        log_joint=lj,
        log_d=log_d[a],
        log_f=log_f[b],
        residual=max(r, 0.0),
        sampler=sampler,
        pairs=len(d_seqs) * len(f_seqs),
        worst_d=d_seqs[a],
        worst_f=f_seqs[b],
    )


@dataclass(frozen=True)
class MarginalCheck:
    by_enumeration: dict[tuple[str, ...], float]
    by_forward: dict[tuple[str, ...], float]

    @property
    def max_abs_error(self) -> float:
        return max(abs(self.by_enumeration[a] - self.by_forward[a]) for a in self.by_enumeration)


def check_marginal(model: MarkovModel, C_tokens: Sequence[str], d_len: int, f_len: int,
                   a_len: int) -> MarginalCheck:
    """Total-probability check of the decomposition.

    Sums P(A|C,D,F) P(D|C) P(F|C) over every (D, F) and compares it with
    P(A|C) from a forward pass over the distribution of F's last token.
    """
    if f_len < 1:
        raise ValueError("f_len must be >= 1")
    _check_bounds(model, d_len, f_len, a_len)
    d_probs = enumerate_sequences(model, C_tokens, d_len)
    f_probs = enumerate_sequences(model, C_tokens, f_len)
    answers = list(enumerate_sequences(model, C_tokens, a_len))

    by_enum = {}
    for A in answers:
        terms = []
        for D, pd in d_probs.items():
            for F, pf in f_probs.items():
                pa = math.exp(answer_logprob(model, C_tokens, D, F, A))
                terms.append(pa * pd * pf)
        by_enum[A] = math.fsum(terms)

    # distribution of F's final token, then one more conditional step per answer token
    last = np.array(model.next_probs(C_tokens), dtype=float)
    for _ in range(f_len - 1):
        last = last @ model.transition
    by_fwd = {}
    for A in answers:
        by_fwd[A] = math.fsum(
            last[s] * math.exp(sequence_logprob(model, [model.vocabulary[s]], A))
            for s in range(model.size)
        )
    return MarginalCheck(by_enum, by_fwd)
