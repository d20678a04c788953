"""Client for OpenAI-compatible ``/completions`` endpoints."""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable, Sequence

import httpx

from .base import (
    Backend,
    BackendUnavailable,
    Completion,
    ContextOverflow,
    FinishReason,
    GenerationParams,
    MalformedResponse,
)

log = logging.getLogger(__name__)

RETRY_DELAYS = (1.0, 2.0, 4.0)
_OVERFLOW_HINTS = ("context length", "context_length", "maximum context", "too many tokens")


class HttpBackend(Backend):
    """Text completions over HTTP.

    Sends ``prompt``, ``temperature``, ``max_tokens``, ``n``, ``stop`` and
    ``seed``; returns the provider's text untouched. Transport errors, 429
    and 5xx are retried with exponential backoff (three retries, 1s/2s/4s).
    """

    name = "http"
    supports_n = True

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        max_concurrency: int = 4,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        retry_delays: Sequence[float] = RETRY_DELAYS,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        key = api_key if api_key is not None else os.environ.get(api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.max_concurrency = max_concurrency
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._sleep = sleep
        self.retry_delays = tuple(retry_delays)

    @property
    def backend_id(self) -> str:
        return f"http:{self.model}"

    def close(self):
        self._client.close()

    def _payload(self, prompt: str, params: GenerationParams, n: int) -> dict:
        body = {
            "model": self.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "n": n,
            "seed": params.seed,
        }
        if params.stop_markers:
            body["stop"] = list(params.stop_markers)
        return body

    def _post(self, body: dict) -> dict:
        url = f"{self.base_url}/completions"
        attempts = len(self.retry_delays) + 1
        last_error = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.retry_delays[attempt - 1])
            try:
                with self._slots:
                    resp = self._client.post(url, json=body)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, attempts, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, attempts, last_error)
                continue
            if resp.status_code >= 400:
                text = resp.text
                if any(h in text.lower() for h in _OVERFLOW_HINTS):
                    raise ContextOverflow(text[:200])
                raise BackendUnavailable(f"HTTP {resp.status_code}: {text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"non-JSON body: {resp.text[:200]}") from exc
        raise BackendUnavailable(f"{url}: giving up after {attempts} attempts ({last_error})")

    def _completions(self, data: dict, n: int) -> list[Completion]:
        try:
            choices = sorted(data["choices"], key=lambda c: c.get("index", 0))
            out = []
            for c in choices:
                text = c["text"]
                if not isinstance(text, str):
                    raise TypeError("text is not a string")
                finish = FinishReason.LENGTH if c.get("finish_reason") == "length" else FinishReason.STOP
                out.append(Completion(text, tuple(text.split()), None, finish))
        except (KeyError, TypeError, AttributeError) as exc:
            raise MalformedResponse(f"unexpected payload shape: {exc}") from exc
        if len(out) != n:
            raise MalformedResponse(f"expected {n} choices, got {len(out)}")
        return out

    def generate(self, prompt: str, params: GenerationParams) -> Completion:
        self._check_prompt(prompt)
        return self._completions(self._post(self._payload(prompt, params, 1)), 1)[0]

    def generate_many(self, prompt: str, params: GenerationParams,
                      seeds: Sequence[int]) -> list[Completion]:
        # one request with n choices; the provider owns per-choice randomness
        self._check_prompt(prompt)
        n = len(seeds)
        if n == 0:
            return []
        body = self._payload(prompt, params.with_seed(seeds[0]), n)
        return self._completions(self._post(body), n)
