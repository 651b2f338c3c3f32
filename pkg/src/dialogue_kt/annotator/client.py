"""Chat-completion clients: a live endpoint, and a scripted fake for tests.

Anything with a `complete(messages, decoding) -> str` method can drive the
annotation pipeline, so transports, replay caches, and fakes are all
injectable at the same seam.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

log = logging.getLogger(__name__)

Message = dict


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: int | None = None


class TransportError(RuntimeError):
    """The endpoint could not be reached or returned a retryable status."""


@runtime_checkable
class ChatClient(Protocol):
    def complete(self, messages: Sequence[Message], decoding: Decoding) -> str: ...


class ScriptedClient:
    """Returns canned responses; thread-safe so parallel batches can share it.

    `script` is either a list of response strings consumed in call order or
    a callable receiving the messages and returning the response.
    """

    def __init__(self, script: Sequence[str] | Callable[[Sequence[Message]], str]):
        self._fn = script if callable(script) else None
        self._queue = None if callable(script) else list(script)
        self._lock = threading.Lock()
        self.calls: list[Sequence[Message]] = []

    def complete(self, messages: Sequence[Message], decoding: Decoding) -> str:
        with self._lock:
            self.calls.append(messages)
            if self._fn is not None:
                return self._fn(messages)
            if not self._queue:
                raise TransportError("scripted client ran out of responses")
            return self._queue.pop(0)

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.calls)


class EndpointClient:
    """OpenAI-compatible chat-completions endpoint over HTTP.

    The API key is read from an environment variable, never passed inline.
    Transport failures and retryable statuses back off exponentially up to
    `max_attempts`; response bodies that lack a completion raise directly.
    """

    RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"environment variable {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, messages: Sequence[Message], decoding: Decoding) -> str:
        import httpx

        payload = {
            "model": self.model,
            "messages": list(messages),
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }
        if decoding.seed is not None:
            payload["seed"] = decoding.seed

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
            except httpx.HTTPError as exc:
                last_error = exc
                log.warning("attempt %d transport error: %s", attempt + 1, exc)
                continue
            if resp.status_code in self.RETRYABLE:
                last_error = TransportError(f"status {resp.status_code}")
                log.warning("attempt %d retryable status %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code != 200:
                raise TransportError(f"status {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            try:
                return body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion body: {exc}") from exc
        raise TransportError(f"gave up after {self.max_attempts} attempts: {last_error}")
