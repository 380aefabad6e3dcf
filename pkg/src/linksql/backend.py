"""Chat-completion backends and per-component model routing.

One HTTP client speaks the OpenAI-compatible chat-completions protocol;
a deterministic mock backend answers from canned/regex-keyed responses and
scripted error sequences for tests and offline runs.
"""

from __future__ import annotations

import enum
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .errors import AuthMissingError, BadResponseError, TransportError


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    base_url: str
    model_id: str
    api_key_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 2
    max_concurrency: int = 4

    def __post_init__(self):
        if not math.isfinite(self.temperature) or not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be finite in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0 <= self.max_retries <= 5:
            raise ValueError("max_retries must be in [0, 5]")


class Component(enum.Enum):
    LINKING = "linking"
    ADMIN = "admin"
    GENERATION = "generation"
    DEBUGGING = "debugging"


@dataclass(frozen=True)
class RoutingConfig:
    """Assignment of every pipeline component to a model endpoint.

    Slots may alias one endpoint (single-model mode) or differ.
    """

    linking: ModelEndpoint
    admin: ModelEndpoint
    generation: ModelEndpoint
    debugging: ModelEndpoint

    @classmethod
    def single(cls, endpoint: ModelEndpoint) -> "RoutingConfig":
        return cls(linking=endpoint, admin=endpoint, generation=endpoint, debugging=endpoint)


def route(config: RoutingConfig, component: Component) -> ModelEndpoint:
    """Endpoint bound to a component; pure function of the config."""
    return getattr(config, component.value)


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = "stop"
    latency: float = 0.0
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff.

    Safe for concurrent use; a per-endpoint semaphore caps in-flight
    requests against local inference servers.
    """

    def __init__(self, transport: httpx.BaseTransport | None = None, backoff_base: float = 0.5):
        self._client = httpx.Client(transport=transport)
        self._backoff_base = backoff_base
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._lock = threading.Lock()

    def close(self):
        self._client.close()

    def _semaphore(self, endpoint: ModelEndpoint) -> threading.Semaphore:
        with self._lock:
            sem = self._semaphores.get(endpoint.name)
            if sem is None:
                sem = threading.Semaphore(endpoint.max_concurrency)
                self._semaphores[endpoint.name] = sem
            return sem

    def complete(self, endpoint: ModelEndpoint, prompt: str) -> Completion:
        """One chat completion for `prompt` as a single user message.

        Retries transport failures up to endpoint.max_retries with
        exponential backoff. Raises AuthMissingError before any network
        call when the configured key variable is unset.
        """
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env)
            if not key:
                raise AuthMissingError(endpoint.api_key_env)
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": endpoint.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
        }
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        started = time.perf_counter()
        last_error: Exception | None = None
        with self._semaphore(endpoint):
            for attempt in range(endpoint.max_retries + 1):
                if attempt:
                    time.sleep(self._backoff_base * 2 ** (attempt - 1))
                try:
                    response = self._client.post(url, json=body, headers=headers, timeout=endpoint.timeout)
                    if response.status_code >= 500:
                        raise httpx.HTTPError(f"server error {response.status_code}")
                except httpx.HTTPError as exc:
                    last_error = exc
                    continue
                if response.status_code >= 400:
                    raise TransportError(
                        f"{endpoint.name}: HTTP {response.status_code}: {response.text[:200]}"
                    )
                return self._parse(response, time.perf_counter() - started)
        raise TransportError(
            f"{endpoint.name}: request failed after {endpoint.max_retries + 1} attempts: {last_error}"
        )

    @staticmethod
    def _parse(response: httpx.Response, latency: float) -> Completion:
        try:
            payload = response.json()
            choice = payload["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason") or "stop"
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BadResponseError(f"unparseable completion body: {exc}") from exc
        usage = payload.get("usage") or {}
        return Completion(
            text=text,
            finish_reason=finish if finish in ("stop", "length") else "error",
            latency=latency,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


@dataclass
class MockBackend:
    """Bit-deterministic offline backend.

    Resolution order per call: the scripted sequence (if any remains),
    an exact prompt match, the first matching regex pattern, then the
    default. Script entries that are dicts of the form {"error": msg}
    raise TransportError, for failure-path tests. Every call is recorded
    in `calls` as (endpoint name, prompt).
    """

    exact: dict[str, str] = field(default_factory=dict)
    patterns: list[tuple[str, str]] = field(default_factory=list)
    default: str | None = None
    script: list = field(default_factory=list)
    calls: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def from_fixture(cls, fixture: dict) -> "MockBackend":
        return cls(
            exact=dict(fixture.get("exact", {})),
            patterns=[(p["pattern"], p["response"]) for p in fixture.get("patterns", [])],
            default=fixture.get("default"),
        )

    def complete(self, endpoint: ModelEndpoint, prompt: str) -> Completion:
        self.calls.append((endpoint.name, prompt))
        if self.script:
            entry = self.script.pop(0)
            if isinstance(entry, Exception):
                raise entry
            if isinstance(entry, dict) and "error" in entry:
                raise TransportError(str(entry["error"]))
            return Completion(text=str(entry))
        if prompt in self.exact:
            return Completion(text=self.exact[prompt])
        for pattern, response in self.patterns:
            if re.search(pattern, prompt):
                return Completion(text=response)
        if self.default is not None:
            return Completion(text=self.default)
        raise LookupError(f"no mock response for prompt starting {prompt[:80]!r}")
