"""Minimal chat-completions HTTP client with tool calling and usage capture."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import requests

from .errors import ConfigError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "LLM_API_KEY"


@dataclass(frozen=True)
class TokenUsage:
    """Per-call token counts; cached_input_tokens is the prefix-cache share."""

    model: str
    input_tokens: int
    output_tokens: int
    cached_input_tokens: int = 0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "cached_input_tokens": self.cached_input_tokens,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TokenUsage":
        return cls(
            model=payload["model"],
            input_tokens=payload["input_tokens"],
            output_tokens=payload["output_tokens"],
            cached_input_tokens=payload.get("cached_input_tokens", 0),
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str | None
    tool_calls: list
    usage: TokenUsage | None
    raw: dict


def _redact(payload: dict) -> dict:
    clean = dict(payload)
    for key in ("api_key", "authorization", "Authorization"):
        if key in clean:
            clean[key] = "***"
    return clean


class LlmClient:
    """Talks to a chat-completions-style endpoint.

    Transport and HTTP-level failures are retried once, then raised as
    TransportError; model-content problems are never retried here.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        transport_retries: int = 1,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.transport_retries = transport_retries
        self._http = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def chat(self, messages: list[dict], tools: list | None = None, timeout: float | None = None) -> ChatResponse:
        body = {"model": self.model, "messages": messages}
        if tools:
            body["tools"] = tools
        logger.debug("llm request: %s", json.dumps(_redact(body))[:2000])

        last_error = None
        for attempt in range(self.transport_retries + 1):
            try:
                resp = self._http.post(
                    self.endpoint,
                    json=body,
                    headers=self._headers(),
                    timeout=timeout or self.timeout,
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"request failed: {exc}")
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = TransportError(f"endpoint returned HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:500]}")
            return self._parse(resp)
        raise last_error

    def _parse(self, resp) -> ChatResponse:
        try:
            payload = resp.json()
        except ValueError as exc:
            raise TransportError(f"endpoint returned non-JSON body: {exc}") from exc
        logger.debug("llm response: %s", json.dumps(payload)[:2000])
        try:
            message = payload["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc

        tool_calls = []
        for raw_call in message.get("tool_calls") or []:
            function = raw_call.get("function", {})
            raw_args = function.get("arguments", "{}")
            try:
                arguments = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
            except (ValueError, TypeError):
                arguments = {"_unparseable": raw_args}
            tool_calls.append({"id": raw_call.get("id"), "name": function.get("name"), "arguments": arguments})

        usage = None
        raw_usage = payload.get("usage")
        if isinstance(raw_usage, dict) and "prompt_tokens" in raw_usage and "completion_tokens" in raw_usage:
            details = raw_usage.get("prompt_tokens_details") or {}
            usage = TokenUsage(
                model=payload.get("model", self.model),
                input_tokens=int(raw_usage["prompt_tokens"]),
                output_tokens=int(raw_usage["completion_tokens"]),
                cached_input_tokens=int(details.get("cached_tokens", 0)),
            )

        return ChatResponse(
            text=message.get("content"),
            tool_calls=tool_calls,
            usage=usage,
            raw=payload,
        )


def client_from_spec(spec: str, endpoint: str | None, api_key_env: str | None) -> LlmClient:
    """Build a client from a "llm:<model>" policy spec plus endpoint/env settings."""
    model = spec.split(":", 1)[1] if ":" in spec else spec
    if not endpoint:
        raise ConfigError("an LLM policy needs --endpoint (chat-completions URL)")
    return LlmClient(
        endpoint=endpoint,
        model=model,
        api_key_env=api_key_env or DEFAULT_API_KEY_ENV,
    )
