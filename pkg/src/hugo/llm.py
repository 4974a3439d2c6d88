"""Chat-completion clients: a real HTTP backend and a canned fixture.

Both expose one call, ``complete(prompt, kind=..., article_hash=...)``, so
extraction code never knows which is behind it. The fixture client replays
canned responses keyed by article content hash and is fully deterministic.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Optional, Protocol

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "HUGO_API_KEY"
_FALLBACK_KEY_ENV = "OPENAI_API_KEY"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LlmError(RuntimeError):
    pass


class LlmUnavailableError(LlmError):
    """All attempts failed; the caller should surface this, not swallow it."""


@dataclass
class LlmResponse:
    text: str
    model: str = ""
    finish_reason: str = "stop"
    usage: dict[str, Any] = dc_field(default_factory=dict)
    request_params: dict[str, Any] = dc_field(default_factory=dict)

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


class LlmClient(Protocol):
    def complete(self, prompt: str, *, kind: str = "extract", article_hash: str = "",
                 params: Optional[dict[str, Any]] = None) -> LlmResponse:
        ...


class OpenAiCompatibleClient:
    """Client for any chat-completions endpoint speaking the OpenAI shape.

    Transient failures (connection errors, 429, 5xx) retry up to
    ``max_attempts`` times with exponential backoff plus jitter. Truncated
    completions are returned as-is -- retrying a truncation just burns
    budget on the same overflow.
    """

    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None,
                 reasoning_effort: Optional[str] = None, timeout: float = 300.0,
                 max_attempts: int = 3, backoff_base: float = 1.0,
                 session: Optional[requests.Session] = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key or os.environ.get(API_KEY_ENV) or os.environ.get(_FALLBACK_KEY_ENV)
        self.reasoning_effort = reasoning_effort
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.session = session or requests.Session()

    def complete(self, prompt: str, *, kind: str = "extract", article_hash: str = "",
                 params: Optional[dict[str, Any]] = None) -> LlmResponse:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if self.reasoning_effort:
            body["reasoning_effort"] = self.reasoning_effort
        if params:
            body.update(params)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Optional[str] = None
        for attempt in range(self.max_attempts):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1)) + random.uniform(0, 0.5)
                logger.info("retrying %s call in %.1fs (attempt %d)", kind, delay, attempt + 1)
                time.sleep(delay)
            try:
                resp = self.session.post(
                    f"{self.base_url}/chat/completions",
                    headers=headers,
                    data=json.dumps(body),
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise LlmError(f"{kind} call failed: HTTP {resp.status_code}: {resp.text[:500]}")
            return self._parse(resp.json(), body)
        raise LlmUnavailableError(
            f"{kind} call failed after {self.max_attempts} attempts: {last_error}"
        )

    def _parse(self, doc: dict[str, Any], request_body: dict[str, Any]) -> LlmResponse:
        try:
            choice = doc["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"malformed completion response: {exc}") from exc
        return LlmResponse(
            text=text,
            model=doc.get("model", self.model),
            finish_reason=choice.get("finish_reason", "stop"),
            usage=doc.get("usage", {}),
            request_params={k: v for k, v in request_body.items() if k != "messages"},
        )


class FixtureLlmClient:
    """Replays canned responses from ``<dir>/<article_hash>.json``.

    Each fixture file maps a prompt kind ("extract", "counts", "methods",
    ...) to either a raw response string or an object with "text" and
    optional "finish_reason"/"model" keys. Missing fixtures come back as
    empty responses with finish_reason "missing_fixture" so the risk checks
    see them instead of an exception.
    """

    def __init__(self, fixture_dir: str | Path) -> None:
        self.fixture_dir = Path(fixture_dir)

    def complete(self, prompt: str, *, kind: str = "extract", article_hash: str = "",
                 params: Optional[dict[str, Any]] = None) -> LlmResponse:
        path = self.fixture_dir / f"{article_hash}.json"
        if not path.exists():
            logger.warning("no fixture for article hash %s", article_hash)
            return LlmResponse(text="", model="fixture", finish_reason="missing_fixture")
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        entry = doc.get(kind)
        if entry is None:
            return LlmResponse(text="", model="fixture", finish_reason="missing_fixture")
        if isinstance(entry, str):
            return LlmResponse(text=entry, model="fixture")
        return LlmResponse(
            text=entry.get("text", ""),
            model=entry.get("model", "fixture"),
            finish_reason=entry.get("finish_reason", "stop"),
        )


class NullLlmClient:
    """Client for model-less contexts (review service, offline re-checks).

    Every call raises; callers that can degrade gracefully catch the error
    and fall back to stored state.
    """

    def complete(self, prompt: str, *, kind: str = "extract", article_hash: str = "",
                 params: Optional[dict[str, Any]] = None) -> LlmResponse:
        raise LlmUnavailableError("no model client configured")
