"""Model backends: mock scorers for local runs and an OpenAI-compatible client."""

from __future__ import annotations

import contextlib
import os
import threading
import time
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .constraint.tokens import Vocabulary
from .errors import BackendError, ParseError
from .json_schema import parse_json, serialize_canonical

API_KEY_ENV = "SKETCH_API_KEY"


class ModelBackend:
    """Base class.  Subclasses set the capability flags and override what they support.

    ``scored(prompt_tokens, generated)`` returns one score per vocabulary token
    for the next position; ``complete(prompt)`` returns a full text answer.
    """

    name = "backend"
    supports_scored = False
    supports_complete = False
    concurrent_safe = True
    vocab: Vocabulary | None = None

    def __init__(self) -> None:
        self._session_lock = threading.Lock()

    def scored(self, prompt_tokens: Sequence[int], generated: Sequence[int]) -> np.ndarray:
        raise NotImplementedError(f"{self.name} cannot score tokens")

    def complete(self, prompt: str, *, seed: int | None = None, max_tokens: int | None = None) -> str:
        raise NotImplementedError(f"{self.name} cannot complete text")

    def tokenize(self, text: str) -> list[int]:
        if self.vocab is None:
            raise BackendError(f"{self.name} has no vocabulary")
        return self.vocab.greedy_tokenize(text.encode("utf-8"))

    def session(self):
        """Context guarding one generation; serializes backends that are not concurrent-safe."""
        return contextlib.nullcontext() if self.concurrent_safe else self._session_lock


class UniformBackend(ModelBackend):
    """Scores every token equally; free-mode text is uniform random tokens."""

    name = "mock_uniform"
    supports_scored = True
    supports_complete = True

    def __init__(self, vocab: Vocabulary | None = None, max_tokens: int = 256):
        super().__init__()
        self.vocab = vocab or Vocabulary.byte_level()
        self.max_tokens = max_tokens
        self._zeros = np.zeros(self.vocab.size)
        self._zeros.setflags(write=False)

    def scored(self, prompt_tokens, generated):
        return self._zeros

    def complete(self, prompt, *, seed=None, max_tokens=None):
        rng = np.random.default_rng(seed)
        limit = max_tokens or self.max_tokens
        ids = []
        for tid in rng.integers(0, self.vocab.size, size=limit):
            if tid == self.vocab.eos_id:
                break
            ids.append(int(tid))
        return self.vocab.decode(ids).decode("utf-8", errors="replace")


def _canonical_or_raw(text: str) -> str:
    try:
        return serialize_canonical(parse_json(text))
    except ParseError:
        return text


class ScriptedBackend(ModelBackend):
    """Replays fixed responses.

    ``responses`` is either a mapping from input text to response (the entry
    whose key occurs in the prompt wins, longest key first) or a sequence
    replayed in call order.  The sequence form is order dependent, so it
    declares single-session capacity.
    """

    name = "scripted"
    supports_scored = True
    supports_complete = True

    def __init__(
        self,
        responses: Mapping[str, str] | Sequence[str] | str,
        vocab: Vocabulary | None = None,
        default: str | None = None,
    ):
        super().__init__()
        self.vocab = vocab or Vocabulary.byte_level()
        self.default = default
        if isinstance(responses, str):
            responses = [responses]
        if isinstance(responses, Mapping):
            self._by_input = sorted(responses.items(), key=lambda kv: (-len(kv[0]), kv[0]))
            self._sequence: list[str] | None = None
        else:
            self._by_input = []
            self._sequence = list(responses)
            if not self._sequence:
                raise ValueError("scripted backend needs at least one response")
            self.concurrent_safe = False
        self._calls = 0
        self._current: str | None = None

    def _response_for(self, prompt: str, advance: bool) -> str:
        if self._sequence is not None:
            if advance or self._current is None:
                self._current = self._sequence[self._calls % len(self._sequence)]
                self._calls += 1
            return self._current
        for key, response in self._by_input:
            if key in prompt:
                return response
        if self.default is not None:
            return self.default
        raise BackendError("scripted backend has no response for this prompt")

    def complete(self, prompt, *, seed=None, max_tokens=None):
        return self._response_for(prompt, advance=True)

    def scored(self, prompt_tokens, generated):
        prompt = self.vocab.decode(prompt_tokens).decode("utf-8", errors="replace")
        target = _canonical_or_raw(self._response_for(prompt, advance=not generated)).encode("utf-8")
        done = self.vocab.decode(generated)
        # the scripted continuation is the only finite score, so any temperature follows it
        scores = np.full(self.vocab.size, -np.inf)
        if not target.startswith(done):
            return scores
        rest = target[len(done) :]
        if not rest:
            scores[self.vocab.eos_id] = 0.0
            return scores
        best, best_len = None, 0
        for tid, tok in enumerate(self.vocab.tokens):
            if tok and len(tok) > best_len and rest.startswith(tok):
                best, best_len = tid, len(tok)
        if best is not None:
            scores[best] = 0.0
        return scores


class FunctionBackend(ModelBackend):
    """Wraps a scoring callable ``fn(prompt_tokens, generated) -> scores``."""

    name = "function"
    supports_scored = True

    def __init__(self, fn: Callable[[Sequence[int], Sequence[int]], np.ndarray], vocab: Vocabulary | None = None):
        super().__init__()
        self.fn = fn
        self.vocab = vocab or Vocabulary.byte_level()

    def scored(self, prompt_tokens, generated):
        return np.asarray(self.fn(prompt_tokens, generated), dtype=float)


class HttpBackend(ModelBackend):
    """OpenAI-compatible chat-completions client (free mode only)."""

    name = "http"
    supports_complete = True

    def __init__(
        self,
        base_url: str,
        model: str = "default",
        *,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        temperature: float | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff = backoff
        self.temperature = temperature
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, prompt, *, seed=None, max_tokens=None):
        body: dict = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        if max_tokens is not None:
            body["max_tokens"] = max_tokens
        if seed is not None:
            body["seed"] = seed
        url = f"{self.base_url}/chat/completions"

        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed chat-completions response: {exc}") from None
            return content if isinstance(content, str) else ""
        raise BackendError(f"request failed after {self.max_retries + 1} attempts: {last_error}")
