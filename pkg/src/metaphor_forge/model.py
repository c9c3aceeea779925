"""Core domain records shared by the whole pipeline.

All types here are immutable value objects: two instances with equal
fields are interchangeable, and they are safe to share across threads.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

PROMPT_TOKEN_BUDGET = 77

TokenCounter = Callable[[str], int]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def split_tokens(text: str) -> list[str]:
    """Whitespace-plus-punctuation token split.

    An approximation of the CLIP text-encoder tokenizer: words and
    punctuation marks each count as one token.
    """
    return _TOKEN_RE.findall(text)


def default_token_counter(text: str) -> int:
    return len(split_tokens(text))


class EmptyMetaphor(ValueError):
    """Raised when a metaphor is empty after trimming."""


class InvalidField(ValueError):
    """Raised when a value-object constructor receives an invalid field."""


@dataclass(frozen=True)
class Metaphor:
    """One figurative sentence to visualize."""

    id: str
    text: str
    category: Optional[str] = None

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidField("Metaphor.text must be non-empty")
        if not self.id:
            raise InvalidField("Metaphor.id must be non-empty")


def validate_metaphor(raw: str, *, id: Optional[str] = None,
                      category: Optional[str] = None) -> Metaphor:
    """Trim and wrap a raw metaphor string.

    The id defaults to a content hash so reruns over the same dataset
    produce stable identifiers.
    """
    text = raw.strip()
    if not text:
        raise EmptyMetaphor("metaphor text is empty")
    if id is None:
        id = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return Metaphor(id=id, text=text, category=category)


@dataclass(frozen=True)
class Decomposition:
    """Source / target / meaning breakdown of one metaphor.

    Fixed once produced: the whole refinement loop runs against the
    same decomposition.
    """

    source: str
    target: str
    meaning: str
    reasoning: str = ""

    def __post_init__(self):
        for name in ("source", "target", "meaning"):
            if not getattr(self, name).strip():
                raise InvalidField(f"Decomposition.{name} must be non-empty")


@dataclass(frozen=True)
class PromptOrigin:
    """Where a visual prompt came from: the initial decomposition or a
    refinement iteration."""

    kind: str  # "initial" | "refined"
    iteration: int = 0

    def __post_init__(self):
        if self.kind not in ("initial", "refined"):
            raise InvalidField(f"unknown prompt origin {self.kind!r}")
        if self.kind == "refined" and self.iteration < 1:
            raise InvalidField("refined prompts start at iteration 1")


INITIAL = PromptOrigin("initial")


def refined(iteration: int) -> PromptOrigin:
    return PromptOrigin("refined", iteration)


@dataclass(frozen=True)
class VisualPrompt:
    """The text handed to the image generator, with its token budget.

    Prompts over the 77-token budget are kept as-is and flagged; the
    length reward penalizes them downstream instead of truncating.
    """

    text: str
    token_count: int
    origin: PromptOrigin = INITIAL

    def __post_init__(self):
        if self.token_count < 0:
            raise InvalidField("token_count must be non-negative")

    @property
    def over_budget(self) -> bool:
        return self.token_count > PROMPT_TOKEN_BUDGET

    @classmethod
    def from_text(cls, text: str, origin: PromptOrigin = INITIAL,
                  counter: TokenCounter = default_token_counter) -> "VisualPrompt":
        return cls(text=text, token_count=counter(text), origin=origin)


@dataclass(frozen=True)
class GenerationParams:
    """Diffusion-generator hyperparameters."""

    guidance_scale: float = 4.5
    inference_steps: int = 8
    width: int = 768
    height: int = 768
    seed: Optional[int] = None

    def __post_init__(self):
        if self.guidance_scale <= 0:
            raise InvalidField("guidance_scale must be positive")
        if self.inference_steps <= 0:
            raise InvalidField("inference_steps must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidField("image dimensions must be positive")
        if self.seed is not None and self.seed < 0:
            raise InvalidField("seed must be non-negative")


# Default generation profiles: fast turbo sampling vs. the slower
# low-guidance profile that produced better alignment in practice.
GENERATION_PROFILES = {
    "turbo": GenerationParams(guidance_scale=4.5, inference_steps=8,
                              width=768, height=768),
    "quality": GenerationParams(guidance_scale=1.5, inference_steps=20,
                                width=1024, height=1024),
}


@dataclass(frozen=True)
class ImageArtifact:
    """A generated image: opaque PNG bytes plus provenance."""

    bytes: bytes
    content_hash: str = field(default="")
    params: GenerationParams = field(default_factory=GenerationParams)
    prompt_text: str = ""

    def __post_init__(self):
        if not self.bytes:
            raise InvalidField("ImageArtifact.bytes must be non-empty")
        expected = hashlib.sha256(self.bytes).hexdigest()
        if self.content_hash and self.content_hash != expected:
            raise InvalidField("content_hash does not match bytes")
        if not self.content_hash:
            object.__setattr__(self, "content_hash", expected)
