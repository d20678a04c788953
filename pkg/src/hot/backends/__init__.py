"""Generation backends: remote HTTP, scripted mock, exact Markov toy model."""

from __future__ import annotations

import json
from pathlib import Path

from .base import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
    Backend,
    BackendError,
    BackendUnavailable,
    Completion,
    ContextOverflow,
    EnumerationTooLarge,
    FinishReason,
    GenerationParams,
    MalformedResponse,
    UnknownToken,
)
from .http import HttpBackend
from .markov import (
    MarkovBackend,
    MarkovModel,
    enumerate_sequences,
    sequence_logprob,
)
from .mock import MockBackend

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "DEFAULT_MAX_TOKENS",
    "DEFAULT_TEMPERATURE",
    "Backend",
    "BackendError",
    "BackendUnavailable",
    "Completion",
    "ContextOverflow",
    "EnumerationTooLarge",
    "FinishReason",
    "GenerationParams",
    "HttpBackend",
    "MalformedResponse",
    "MarkovBackend",
    "MarkovModel",
    "MockBackend",
    "UnknownToken",
    "enumerate_sequences",
    "load_backend",
    "load_config",
    "sequence_logprob",
]

BACKEND_KINDS = ("http", "mock", "markov")


def load_config(path) -> dict:
    """Read a TOML or JSON config file into nested dicts."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def load_backend(config: dict) -> Backend:
    """Build a backend from the ``backend``/``http``/``markov``/``mock`` config tables."""
    kind = config.get("backend", {}).get("kind", "mock")
    if kind == "http":
        http = config.get("http", {})
        if "base_url" not in http or "model" not in http:
            raise ValueError("http backend needs http.base_url and http.model")
        return HttpBackend(
            http["base_url"],
            http["model"],
            api_key_env=http.get("api_key_env", "OPENAI_API_KEY"),
            max_concurrency=int(http.get("max_concurrency", 4)),
            timeout=float(http.get("timeout", 60.0)),
        )
    if kind == "markov":
        spec = config.get("markov", {}).get("spec_path")
        if not spec:
            raise ValueError("markov backend needs markov.spec_path")
        return MarkovBackend.from_file(spec)
    if kind == "mock":
        from ..pipeline import record_responder

        script = config.get("mock", {}).get("script_path")
        backend = MockBackend.from_file(script) if script else MockBackend()
        backend.responder = record_responder()
        return backend
    raise ValueError(f"unknown backend kind {kind!r}; expected one of {BACKEND_KINDS}")
