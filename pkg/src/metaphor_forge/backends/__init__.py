from .base import (
    BackendConfig,
    ChatBackend,
    ChatMessage,
    EmbeddingBackend,
    EmbeddingVector,
    ImageBackend,
    config_from_env,
    cosine,
)
from .errors import (
    BackendError,
    BackendTimeout,
    DimensionMismatch,
    ExhaustedRetries,
    HttpStatusError,
    PayloadDecode,
)
from .http import HttpChatBackend, HttpEmbeddingBackend, HttpImageBackend
from .mock import MockChatBackend, MockEmbeddingBackend, MockImageBackend

__all__ = [
    "BackendConfig", "BackendError", "BackendTimeout", "ChatBackend",
    "ChatMessage", "DimensionMismatch", "EmbeddingBackend", "EmbeddingVector",
    "ExhaustedRetries", "HttpChatBackend", "HttpEmbeddingBackend",
    "HttpImageBackend", "HttpStatusError", "ImageBackend", "MockChatBackend",
    "MockEmbeddingBackend", "MockImageBackend", "PayloadDecode",
    "config_from_env", "cosine",
]
