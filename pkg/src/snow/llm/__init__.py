from .backends import (
    API_KEY_ENV,
    Cassette,
    LiveBackend,
    MockBackend,
    NetworkDisabledError,
    RateLimiter,
    ReplayBackend,
    network_allowed,
    set_network_allowed,
)
from .client import (
    NOTE_CLOSE,
    NOTE_OPEN,
    CassetteMissError,
    ChatRequest,
    LLMClient,
    LLMError,
    SchemaError,
    TransportError,
    normalize_prompt,
    request_key,
)
from .schemas import SchemaRegistry, SchemaRegistryError, default_registry

__all__ = [
    "API_KEY_ENV", "Cassette", "CassetteMissError", "ChatRequest", "LLMClient", "LLMError", "LiveBackend",
    "MockBackend", "NOTE_CLOSE", "NOTE_OPEN", "NetworkDisabledError", "RateLimiter", "ReplayBackend",
    "SchemaError", "SchemaRegistry", "SchemaRegistryError", "TransportError", "default_registry",
    "network_allowed", "normalize_prompt", "request_key", "set_network_allowed",
]
