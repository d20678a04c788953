from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

UINT64_MASK = (1 << 64) - 1

# Default decoding: T = 0.5 and 168 tokens per call.
DEFAULT_TEMPERATURE = 0.5
DEFAULT_MAX_TOKENS = 168


class BackendError(RuntimeError):
    pass


class BackendUnavailable(BackendError):
    """Transport or status failure; retriable."""


class ContextOverflow(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class UnknownToken(KeyError):
    pass


class EnumerationTooLarge(ValueError):
    pass


class FinishReason(str, enum.Enum):
    STOP = "stop"
    LENGTH = "length"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: int = 0
    stop_markers: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        object.__setattr__(self, "seed", int(self.seed) & UINT64_MASK)
        object.__setattr__(self, "stop_markers", tuple(self.stop_markers))

    def with_seed(self, seed: int) -> "GenerationParams":
        return replace(self, seed=int(seed) & UINT64_MASK)


@dataclass(frozen=True)
class Completion:
    text: str
    tokens: tuple[str, ...] = ()
    token_logprobs: tuple[float, ...] | None = None
    finish_reason: FinishReason = FinishReason.STOP

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.token_logprobs is not None:
            lp = tuple(float(x) for x in self.token_logprobs)
            if len(lp) != len(self.tokens):
                raise ValueError("token_logprobs must align with tokens")
            if any(x > 0 for x in lp):
                raise ValueError("log-probabilities must be <= 0")
            object.__setattr__(self, "token_logprobs", lp)
        object.__setattr__(self, "finish_reason", FinishReason(self.finish_reason))

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens": list(self.tokens),
            "token_logprobs": None if self.token_logprobs is None else list(self.token_logprobs),
            "finish_reason": self.finish_reason.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Completion":
        lp = d.get("token_logprobs")
        return cls(d["text"], tuple(d.get("tokens", ())),
                   None if lp is None else tuple(lp), FinishReason(d["finish_reason"]))


def call_rng(prompt: str, seed: int) -> np.random.Generator:
    """Generator keyed on (seed, prompt) so results never depend on call order."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 16, 8)]
    return np.random.default_rng([int(seed) & UINT64_MASK, *words])


def truncate_at_stop(text: str, stops: Sequence[str]) -> tuple[str, bool]:
    cut = min((i for i in (text.find(s) for s in stops if s) if i >= 0), default=-1)
    if cut < 0:
        return text, False
    return text[:cut], True


class Backend:
    """Common surface of every generation backend.

    Subclasses implement :meth:`generate`. ``max_concurrency`` bounds how
    many calls the pipeline issues at once.
    """

    name = "backend"
    max_concurrency = 1
    supports_n = False

    @property
    def backend_id(self) -> str:
        return self.name

    def generate(self, prompt: str, params: GenerationParams) -> Completion:
        raise NotImplementedError

    def generate_many(self, prompt: str, params: GenerationParams,
                      seeds: Sequence[int]) -> list[Completion]:
        return [self.generate(prompt, params.with_seed(s)) for s in seeds]

    @staticmethod
    def _check_prompt(prompt: str):
        if not prompt:
            raise ValueError("prompt must be non-empty")


