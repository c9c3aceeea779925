"""Shared backend types and client protocols.

Four model roles sit behind these interfaces: a chat LLM, a
text-to-image generator, a VLM judge (a chat backend that accepts
images), and an embedding provider.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, Sequence

from ..model import GenerationParams, ImageArtifact, VisualPrompt
from .errors import DimensionMismatch


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "http://localhost:8000"
    api_key: Optional[str] = None
    model_name: str = ""
    timeout: float = 120.0
    max_retries: int = 3
    retry_backoff: float = 0.5
    max_concurrency: int = 4  # protects single-GPU servers
    temperature: Optional[float] = None
    per_token_embeddings: bool = True
    embedding_dimension: int = 512

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must be in [0, 10]")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")


def config_from_env(role: str, base: BackendConfig) -> BackendConfig:
    """Apply METAPHOR_FORGE_{ROLE}_URL / _KEY environment overrides."""
    prefix = f"METAPHOR_FORGE_{role.upper()}"
    url = os.environ.get(f"{prefix}_URL")
    key = os.environ.get(f"{prefix}_KEY")
    if url:
        base = replace(base, base_url=url)
    if key:
        base = replace(base, api_key=key)
    return base


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    text: str
    images: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class EmbeddingVector:
    """One embedding response.

    `values` holds a single row for sequence granularity, or one row
    per token (with `tokens` set) for per-token granularity.
    """

    values: tuple[tuple[float, ...], ...]
    modality: str  # "text" | "image"
    tokens: Optional[tuple[str, ...]] = None
    dimension: int = field(default=0)

    def __post_init__(self):
        if not self.values:
            raise ValueError("empty embedding response")
        dims = {len(row) for row in self.values}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent dimensions {sorted(dims)}")
        dim = dims.pop()
        if self.dimension and self.dimension != dim:
            raise DimensionMismatch(f"declared {self.dimension}, got {dim}")
        if not self.dimension:
            object.__setattr__(self, "dimension", dim)
        if self.tokens is not None and len(self.tokens) != len(self.values):
            raise DimensionMismatch("token count does not match vector count")
        for row in self.values:
            for x in row:
                if not math.isfinite(x):
                    raise ValueError("embedding contains non-finite values")

    @property
    def per_token(self) -> bool:
        return self.tokens is not None

    def pooled(self) -> tuple[float, ...]:
        """Mean-pool per-token rows into a single vector."""
        if len(self.values) == 1:
            return self.values[0]
        n = len(self.values)
        return tuple(sum(col) / n for col in zip(*self.values))


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"cosine of {len(a)}-dim and {len(b)}-dim vectors")
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


class ChatBackend(Protocol):
    def chat_complete(self, system: str, messages: Sequence[ChatMessage]) -> str:
        """Return the raw assistant text, untouched."""
        ...


class ImageBackend(Protocol):
    def generate_image(self, prompt: VisualPrompt,
                       params: GenerationParams) -> ImageArtifact:
        ...


class EmbeddingBackend(Protocol):
    def embed_text(self, text: str, per_token: bool = False) -> EmbeddingVector:
        ...

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        ...

    @property
    def supports_per_token(self) -> bool:
        ...
