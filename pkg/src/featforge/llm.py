"""OpenAI-compatible chat-completions client with retries and a mock transport."""

from __future__ import annotations

import logging
import math
import os
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import HttpError, LlmError, ParseFailure, RateLimited, RetriesExhausted, Timeout

log = logging.getLogger(__name__)

API_KEY_ENV = "FEATFORGE_API_KEY"


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.2
    max_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 3
    prompt_budget: int = 6000

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    schema: str

    @property
    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system},
                {"role": "user", "content": self.user}]

    @property
    def est_tokens(self) -> int:
        return estimate_tokens(self.system) + estimate_tokens(self.user)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


class LiveTransport:
    """POSTs to ``{endpoint}/chat/completions``; the key comes from the environment."""

    def __init__(self, api_key: str | None = None):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")

    def send(self, role: str, bundle: PromptBundle, config: LlmConfig) -> tuple[str, dict]:
        import httpx

        payload = {
            "model": config.model,
            "messages": bundle.messages,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = config.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = httpx.post(url, json=payload, headers=headers, timeout=config.timeout)
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise HttpError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited("rate limited (429)")
        if resp.status_code >= 400:
            raise HttpError(f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise HttpError(f"unexpected response body: {exc}") from exc
        return text, body.get("usage") or {}


class MockTransport:
    """Scripted replies keyed by role and per-role call index.

    ``script`` maps a role to a sequence of replies; a reply may be a
    string, an exception instance (raised, for fault injection) or a
    callable ``(bundle) -> str``.  ``fallback`` handles calls past the end
    of a role's script; without it an exhausted script raises HttpError.
    """

    def __init__(self, script: Mapping[str, Sequence] | None = None,
                 fallback: Callable[[str, int, PromptBundle], str] | None = None):
        self.script = {k: list(v) for k, v in (script or {}).items()}
        self.fallback = fallback
        self.calls: dict[str, int] = {}
        self.log: list[tuple[str, int]] = []

    def send(self, role: str, bundle: PromptBundle, config: LlmConfig) -> tuple[str, dict]:
        index = self.calls.get(role, 0)
        self.calls[role] = index + 1
        self.log.append((role, index))
        replies = self.script.get(role, [])
        if index < len(replies):
            reply = replies[index]
        elif self.fallback is not None:
            reply = self.fallback(role, index, bundle)
        else:
            raise HttpError(f"mock script for {role!r} exhausted at call {index}")
        if isinstance(reply, BaseException):
            raise reply
        if callable(reply):
            reply = reply(bundle)
        return reply, {}


@dataclass
class UsageStats:
    calls: int = 0
    attempts: int = 0
    retries: int = 0
    failures: int = 0
    prompt_tokens: int = 0
    reply_tokens: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


class LlmClient:
    """Retrying client.

    Transport failures (rate limits, timeouts, 5xx) and reply parse
    failures draw on one retry budget per request; waits grow as
    ``1s * 2**attempt`` with jitter.
    """

    def __init__(self, config: LlmConfig | None = None, transport=None,
                 sleep: Callable[[float], None] = time.sleep, seed: int = 0):
        self.config = config or LlmConfig()
        self.transport = transport if transport is not None else LiveTransport()
        self.sleep = sleep
        self.usage = UsageStats()
        self._jitter = random.Random(seed)
        self.attempt_log: list[tuple[str, int, str]] = []

    def _backoff(self, attempt: int) -> None:
        delay = 2.0 ** attempt * (0.5 + self._jitter.random())
        self.sleep(delay)

    def request(self, role: str, bundle: PromptBundle, parse: Callable[[str], object] | None = None):
        """Send ``bundle`` and return ``parse(reply)`` (or the raw reply)."""
        self.usage.calls += 1
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.usage.retries += 1
                self._backoff(attempt - 1)
            self.usage.attempts += 1
            try:
                text, usage = self.transport.send(role, bundle, self.config)
            except (RateLimited, Timeout) as exc:
                self.attempt_log.append((role, attempt, type(exc).__name__))
                log.warning("%s call attempt %d failed: %s", role, attempt + 1, exc)
                last = exc
                continue
            except HttpError as exc:
                self.attempt_log.append((role, attempt, "HttpError"))
                if exc.status is not None and exc.status < 500:
                    self.usage.failures += 1
                    raise
                log.warning("%s call attempt %d failed: %s", role, attempt + 1, exc)
                last = exc
                continue
            self.usage.prompt_tokens += int(usage.get("prompt_tokens", bundle.est_tokens))
            self.usage.reply_tokens += int(usage.get("completion_tokens", estimate_tokens(text)))
            if parse is None:
                self.attempt_log.append((role, attempt, "ok"))
                return text
            try:
                result = parse(text)
            except ParseFailure as exc:
                self.attempt_log.append((role, attempt, "ParseFailure"))
                log.warning("%s reply rejected: %s", role, exc)
                last = exc
                continue
            self.attempt_log.append((role, attempt, "ok"))
            return result
        self.usage.failures += 1
        raise RetriesExhausted(f"{role}: {self.config.max_retries + 1} attempts failed; last error: {last}")

    def complete(self, bundle: PromptBundle, role: str = "default") -> str:
        return self.request(role, bundle)


def complete(config: LlmConfig, transport, bundle: PromptBundle, role: str = "default",
             sleep: Callable[[float], None] = time.sleep) -> str:
    """One-shot convenience wrapper around :class:`LlmClient`."""
    return LlmClient(config, transport, sleep=sleep).complete(bundle, role)


__all__ = [
    "API_KEY_ENV", "LlmClient", "LlmConfig", "LlmError", "LiveTransport", "MockTransport",
    "PromptBundle", "UsageStats", "complete", "estimate_tokens",
]
