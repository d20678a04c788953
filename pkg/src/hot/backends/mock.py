from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Callable, Mapping

from .base import (
    Backend,
    Completion,
    ContextOverflow,
    FinishReason,
    GenerationParams,
    call_rng,
    truncate_at_stop,
)

_WORD = re.compile(r"[^\W\d_]+", re.UNICODE)


class MockBackend(Backend):
    """Scripted backend for tests and dry runs.

    Lookup order for a prompt: exact key, then the longest key that is a
    prefix of the prompt, then ``responder``, then ``default``. A list value
    is indexed by ``seed % len(list)``, which lets one prompt script several
    distinct samples. Prompts that match nothing get a deterministic
    pseudo-reply drawn from the prompt's own words.
    """

    name = "mock"

    def __init__(
        self,
        script: Mapping[str, str | list[str]] | None = None,
        default: str | None = None,
        responder: Callable[[str, GenerationParams], str | None] | None = None,
        max_context: int | None = None,
    ):
        self.script = dict(script or {})
        self.default = default
        self.responder = responder
        self.max_context = max_context
        self._prefix_keys = sorted(self.script, key=len, reverse=True)

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "script" in data and isinstance(data["script"], dict):
            return cls(data["script"], default=data.get("default"))
        return cls(data)

    def lookup(self, prompt: str, params: GenerationParams) -> str | None:
        value = self.script.get(prompt)
        if value is None:
            for key in self._prefix_keys:
                if prompt.startswith(key):
                    value = self.script[key]
                    break
        if value is None and self.responder is not None:
            value = self.responder(prompt, params)
        if value is None:
            value = self.default
        if isinstance(value, (list, tuple)):
            value = value[params.seed % len(value)]
        return value

    def generate(self, prompt: str, params: GenerationParams) -> Completion:
        self._check_prompt(prompt)
        if self.max_context is not None and len(prompt.split()) > self.max_context:
            raise ContextOverflow(f"prompt has {len(prompt.split())} words > {self.max_context}")
        text = self.lookup(prompt, params)
        if text is None:
            text = babble(prompt, params)
        text, stopped = truncate_at_stop(text, params.stop_markers)
        if stopped:
            text = text.rstrip()
        tokens = text.split()
        finish = FinishReason.STOP
        if len(tokens) > params.max_tokens:
            tokens = tokens[: params.max_tokens]
            text = " ".join(tokens)
            finish = FinishReason.LENGTH
        return Completion(text, tuple(tokens), None, finish)


def babble(prompt: str, params: GenerationParams) -> str:
    words = _WORD.findall(prompt.lower()) or ["ok"]
    rng = call_rng(prompt, params.seed)
    n = int(rng.integers(6, 16))
    return " ".join(words[i] for i in rng.integers(0, len(words), size=n)) + "."
