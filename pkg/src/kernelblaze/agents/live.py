"""Chat-completion HTTP client."""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable

import httpx

from ..errors import AgentUnavailable, CredentialMissing
from .core import AgentRequest, AgentResponse

logger = logging.getLogger(__name__)

API_KEY_ENV = "KERNELBLAZE_API_KEY"
BASE_URL_ENV = "KERNELBLAZE_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
SYSTEM_PROMPT = "You are an expert CUDA performance engineer. Follow the requested output format exactly."


class LiveAgent:
    """POSTs chat-style requests to ``{base_url}/chat/completions``.

    Transport errors and 5xx answers are retried with exponential backoff
    (1 s, 2 s, ...) for at most ``max_attempts`` requests in total.
    """

    def __init__(
        self,
        api_key: str,
        base_url: str = DEFAULT_BASE_URL,
        model: str = "gpt-4.1",
        *,
        max_attempts: int = 3,
        backoff: float = 1.0,
        max_concurrency: int = 4,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise CredentialMissing(f"set {API_KEY_ENV}")
        self.model = model
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.Semaphore(max_concurrency)
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    @classmethod
    def from_env(cls, model: str = "gpt-4.1", **kwargs) -> LiveAgent:
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise CredentialMissing(f"environment variable {API_KEY_ENV} is not set")
        return cls(key, os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL), model, **kwargs)

    def close(self) -> None:
        self._client.close()

    def request_body(self, request: AgentRequest) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": request.rendered_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: AgentRequest) -> AgentResponse:
        body = self.request_body(request)
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            start = time.monotonic()
            try:
                with self._slots:
                    resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("agent request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("agent request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                raise AgentUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
                usage = data.get("usage") or {}
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise AgentUnavailable(f"malformed completion body: {exc}") from exc
            return AgentResponse(
                text=text or "",
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                latency_ms=int((time.monotonic() - start) * 1000),
                role_id=request.role_id.value,
            )
        raise AgentUnavailable(f"gave up after {self.max_attempts} attempts: {last_error}")
