"""Live HTTP, cassette replay and mock backends."""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .client import CassetteMissError, ChatRequest, LLMError, TransportError, request_key

API_KEY_ENV = "SNOW_API_KEY"
OFFLINE_ENV = "SNOW_OFFLINE"

_network_allowed = True


def set_network_allowed(allowed: bool) -> None:
    global _network_allowed
    _network_allowed = allowed


def network_allowed() -> bool:
    return _network_allowed and os.environ.get(OFFLINE_ENV, "") not in ("1", "true", "yes")


class NetworkDisabledError(LLMError):
    pass


class Cassette:
    """Append-only JSON-lines store of responses keyed by request hash."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._entries.setdefault(rec["key"], rec["response"])

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, key: str, req: ChatRequest, response: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            rec = {"key": key, "role": req.role_tag, "schema": req.response_schema_id, "response": response}
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


class RateLimiter:
    """Token bucket; ``acquire`` blocks until a request slot is available."""

    def __init__(self, requests_per_minute: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.rate = requests_per_minute / 60.0
        self.capacity = max(1.0, requests_per_minute / 60.0)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                self.sleep((1.0 - self.tokens) / self.rate)


class LiveBackend:
    """OpenAI-style ``/chat/completions`` endpoint.

    Every response is recorded to ``cassette`` when one is given, so a later
    run can replay it without network access.
    """

    kind = "live_http"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        cassette: Cassette | None = None,
        requests_per_minute: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.cassette = cassette
        self.limiter = RateLimiter(requests_per_minute, sleep=sleep)
        self.transport = transport
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def payload(self, req: ChatRequest, messages: list[dict]) -> dict:
        return {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "seed": req.seed,
            "response_format": {"type": "json_object"},
        }

    def complete(self, req: ChatRequest, messages: list[dict]) -> str:
        # an injected transport never touches the network, so the guard only
        # applies to the default one
        if self.transport is None and not network_allowed():
            raise NetworkDisabledError("live backend called while network access is disabled")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        text = None
        last_error = ""
        for attempt in range(self.retries):
            self.limiter.acquire()
            try:
                resp = self._client.post(
                    f"{self.base_url}/chat/completions", json=self.payload(req, messages), headers=headers
                )
            except httpx.HTTPError as exc:
                last_error = str(exc)
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise TransportError(f"malformed chat completion response: {exc}") from exc
                    break
            if attempt + 1 < self.retries:
                self.sleep(self.backoff * 2**attempt)
        if text is None:
            raise TransportError(f"chat completion failed after {self.retries} attempts: {last_error}")
        if self.cassette is not None:
            self.cassette.record(request_key(req, messages), req, text)
        return text


class ReplayBackend:
    kind = "replay"

    def __init__(self, cassette: Cassette | str | Path):
        if not isinstance(cassette, Cassette):
            if not Path(cassette).exists():
                raise FileNotFoundError(f"cassette {cassette} does not exist")
            cassette = Cassette(cassette)
        self.cassette = cassette

    def complete(self, req: ChatRequest, messages: list[dict]) -> str:
        key = request_key(req, messages)
        hit = self.cassette.get(key)
        if hit is None:
            raise CassetteMissError(key)
        return hit


class Responder(Protocol):
    def respond(self, req: ChatRequest, messages: list[dict]) -> dict | str: ...


class MockBackend:
    """Answers from a responder (normally built from a ground-truth manifest)."""

    kind = "mock"

    def __init__(self, responder: Responder | None):
        if responder is None:
            raise ValueError("mock backend needs a ground-truth responder")
        self.responder = responder

    def complete(self, req: ChatRequest, messages: list[dict]) -> str:
        out = self.responder.respond(req, messages)
        return out if isinstance(out, str) else json.dumps(out, sort_keys=True)
