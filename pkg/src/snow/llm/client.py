"""Schema-validated chat completions over pluggable backends."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from .schemas import SchemaRegistry, default_registry

log = logging.getLogger(__name__)

ROLES = ("discovery", "extraction", "validation", "post_process", "aggregation")
MAX_REPAIRS = 3

# Note text is quoted between these markers; the cassette key keeps it verbatim
# and collapses whitespace everywhere else.
NOTE_OPEN, NOTE_CLOSE = "<note>", "</note>"
_NOTE_SPLIT = re.compile(f"({re.escape(NOTE_OPEN)}.*?{re.escape(NOTE_CLOSE)})", re.DOTALL)


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    pass


class SchemaError(LLMError):
    def __init__(self, message: str, last_raw: str):
        self.last_raw = last_raw
        super().__init__(message)


class CassetteMissError(LLMError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no recorded response for request hash {key}")


@dataclass(frozen=True)
class ChatRequest:
    """One structured request.

    ``context`` is a side channel for offline backends (the mock reads note ids
    and current values from it); it is never sent over the wire nor hashed.
    """

    role_tag: str
    system_text: str
    user_text: str
    response_schema_id: str
    temperature: float = 0.0
    seed: int = 0
    context: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.role_tag not in ROLES and not self.role_tag.startswith("clfg"):
            raise ValueError(f"unknown role {self.role_tag!r}")
        if not self.system_text.strip() or not self.user_text.strip():
            raise ValueError("request texts must be non-empty")


def normalize_prompt(text: str) -> str:
    parts = _NOTE_SPLIT.split(text)
    out = []
    for part in parts:
        if part.startswith(NOTE_OPEN) and part.endswith(NOTE_CLOSE):
            out.append(part)
        else:
            out.append(re.sub(r"\s+", " ", part))
    return "".join(out).strip()


def request_key(req: ChatRequest, messages: list[dict]) -> str:
    canon = {
        "role": req.role_tag,
        "schema": req.response_schema_id,
        "temperature": req.temperature,
        "seed": req.seed,
        "messages": [{"role": m["role"], "content": normalize_prompt(m["content"])} for m in messages],
    }
    blob = json.dumps(canon, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Backend(Protocol):
    kind: str

    def complete(self, req: ChatRequest, messages: list[dict]) -> str: ...


class LLMClient:
    """Sends requests to a backend and returns payloads that pass their schema.

    On a schema violation the validator messages are appended to the
    conversation and the model is asked again, at most ``max_repairs`` times.
    """

    def __init__(self, backend: Backend, registry: SchemaRegistry | None = None, max_repairs: int = MAX_REPAIRS):
        self.backend = backend
        self.registry = registry or default_registry()
        self.max_repairs = max_repairs
        self.calls = 0
        self.repairs = 0
        self._lock = threading.Lock()

    def register_schema(self, schema_id: str, schema: dict) -> None:
        self.registry.register(schema_id, schema)

    def complete_structured(self, req: ChatRequest) -> dict:
        if req.response_schema_id not in self.registry:
            raise LLMError(f"schema {req.response_schema_id!r} is not registered")
        messages = [
            {"role": "system", "content": req.system_text},
            {"role": "user", "content": req.user_text},
        ]
        raw = ""
        for attempt in range(self.max_repairs + 1):
            with self._lock:
                self.calls += 1
            raw = self.backend.complete(req, messages)
            try:
                payload = json.loads(raw)
                problems = self.registry.errors(req.response_schema_id, payload)
            except json.JSONDecodeError as exc:
                payload, problems = None, [f"response is not JSON: {exc.msg}"]
            if not problems:
                return payload
            if attempt == self.max_repairs:
                break
            with self._lock:
                self.repairs += 1
            log.info("schema repair %d for %s: %s", attempt + 1, req.role_tag, problems[0])
            messages = messages + [
                {"role": "assistant", "content": raw},
                {
                    "role": "user",
                    "content": "Your reply did not match the required JSON schema:\n- "
                    + "\n- ".join(problems[:10])
                    + "\nReply again with corrected JSON only.",
                },
            ]
        raise SchemaError(
            f"{req.role_tag} response failed schema {req.response_schema_id!r} after {self.max_repairs} repairs",
            raw,
        )
