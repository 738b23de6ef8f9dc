"""Chat-completions clients: one remote, two deterministic mocks.

The remote client speaks the OpenAI-compatible wire format (POST
{base_url}/v1/chat/completions with a messages array), so any compatible
server works; the API key comes from an environment variable and is never
stored in config files.

Mock mode is the default everywhere tests and golden files are involved:
``echo`` returns the latest user message verbatim (an explanation that
paraphrases exactly the evidence it was given), and ``script`` plays back
a response table keyed by substring match. Both are network-free and
deterministic.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

DEFAULT_API_KEY_VARS = ("TREETALK_API_KEY", "OPENAI_API_KEY")


@dataclass(frozen=True)
class ModelConfig:
    model: str = "mock"
    temperature: float = 0.0  # deterministic by default
    max_tokens: int = 512


class TransportError(RuntimeError):
    """Remote call failed after the whole retry budget."""


class MockScriptError(ValueError):
    pass


def _last_user_content(messages: Sequence[dict]) -> str:
    for msg in reversed(messages):
        if msg.get("role") == "user":
            return msg.get("content", "")
    return ""


class EchoClient:
    """Returns the latest user message: evidence in, evidence out."""

    mode = "mock"
    name = "echo"

    def complete(self, messages: Sequence[dict], cfg: ModelConfig = ModelConfig()) -> str:
        return _last_user_content(messages)


@dataclass
class ScriptedClient:
    """First rule whose ``contains`` text occurs in the latest user message wins."""

    rules: list  # of {"contains": str, "response": str}
    default: str = "I cannot add anything beyond the provided evidence."
    mode = "mock"
    name = "script"

    def complete(self, messages: Sequence[dict], cfg: ModelConfig = ModelConfig()) -> str:
        content = _last_user_content(messages)
        for rule in self.rules:
            if rule["contains"] in content:
                return rule["response"]
        return self.default


@dataclass
class RemoteClient:
    """OpenAI-compatible chat-completions client with bounded retries."""

    base_url: str
    model: str = "gpt-4"
    timeout: float = 60.0
    max_retries: int = 2
    retry_wait: float = 1.0
    api_key_vars: tuple = DEFAULT_API_KEY_VARS
    session: Optional[requests.Session] = None
    mode = "remote"
    name = "remote"

    def _api_key(self) -> str:
        for var in self.api_key_vars:
            key = os.environ.get(var)
            if key:
                return key
        raise TransportError(
            f"no API key found; set one of {', '.join(self.api_key_vars)}"
        )

    def complete(self, messages: Sequence[dict], cfg: ModelConfig = ModelConfig()) -> str:
        url = self.base_url.rstrip("/") + "/v1/chat/completions"
        payload = {
            "model": self.model if cfg.model in ("mock", "") else cfg.model,
            "messages": list(messages),
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        http = self.session or requests
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = http.post(url, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.retry_wait * (attempt + 1))
        raise TransportError(f"chat completion failed after {self.max_retries + 1} attempts: {last_error}")


def load_mock_script(path: str):
    """Build a mock client from a JSON script file.

    Accepted shapes: {"mode": "echo"} or
    {"mode": "script", "rules": [{"contains": ..., "response": ...}], "default": ...}.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MockScriptError(f"mock script is not valid JSON: {exc}") from exc
    mode = doc.get("mode")
    if mode == "echo":
        return EchoClient()
    if mode == "script":
        rules = doc.get("rules", [])
        for i, rule in enumerate(rules):
            if "contains" not in rule or "response" not in rule:
                raise MockScriptError(f"rule {i} needs 'contains' and 'response'")
        return ScriptedClient(rules=rules, default=doc.get("default", ScriptedClient.default))
    raise MockScriptError(f"unknown mock mode {mode!r}")


def make_client(spec: str, *, base_url: Optional[str] = None, model: str = "gpt-4"):
    """Resolve a client spec: 'echo', a mock script path, or 'remote'."""
    if spec == "echo":
        return EchoClient()
    if spec == "remote":
        if not base_url:
            base_url = os.environ.get("TREETALK_LLM_BASE_URL", "")
        if not base_url:
            raise TransportError("remote mode needs a base URL (flag or TREETALK_LLM_BASE_URL)")
        return RemoteClient(base_url=base_url, model=model)
    return load_mock_script(spec)
