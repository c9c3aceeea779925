"""Reward metrics, the weighted composite, the completion cache, and
group-relative advantages.

The composite is a plain weighted sum over eight base metrics
(decomposition quality, CLIP alignment, three judge scores, three
BERT-style similarities), optionally extended with format and length
rewards for the policy-optimization consumer. Scoring a completion is
expensive (one image generation plus one VLM analysis), so results
are cached by a content digest with single-flight semantics.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import prompts
from .backends.base import EmbeddingBackend, ImageBackend, cosine
from .decomposer import Decomposer
from .judge import VlmJudge
from .model import (
    PROMPT_TOKEN_BUDGET,
    Decomposition,
    GenerationParams,
    ImageArtifact,
    Metaphor,
    VisualPrompt,
)
from .parsing import ParseError, parse_tagged


class MissingComponent(ValueError):
    """A weighted component was required but not supplied."""


@dataclass(frozen=True)
class WeightConfig:
    w_decomposition: float = 0.20
    w_clip: float = 0.20
    w_s_presence: float = 0.10
    w_t_presence: float = 0.10
    w_m_align: float = 0.10
    w_bert_s: float = 0.10
    w_bert_t: float = 0.10
    w_bert_m: float = 0.10
    w_format: float = 0.10
    w_length: float = 0.10
    include_grpo_extras: bool = False
    normalize: bool = False  # divide the total by the weight sum
    clip_scale: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name.startswith("w_") and value < 0:
                raise ValueError(f"{name} must be non-negative")

    def base_sum(self) -> float:
        return math.fsum((self.w_decomposition, self.w_clip,
                          self.w_s_presence, self.w_t_presence,
                          self.w_m_align, self.w_bert_s, self.w_bert_t,
                          self.w_bert_m))

    def active_sum(self) -> float:
        if not self.include_grpo_extras:
            return self.base_sum()
        return math.fsum((self.base_sum(), self.w_format, self.w_length))


@dataclass(frozen=True)
class RewardBreakdown:
    decomposition: float
    clip: float
    s_presence: float
    t_presence: float
    m_align: float
    bert_s: float
    bert_t: float
    bert_m: float
    total: float
    format: Optional[float] = None
    length: Optional[float] = None
    fallback_flags: frozenset[str] = frozenset()

    def components(self) -> dict[str, float]:
        out = {
            "decomposition": self.decomposition, "clip": self.clip,
            "s_presence": self.s_presence, "t_presence": self.t_presence,
            "m_align": self.m_align, "bert_s": self.bert_s,
            "bert_t": self.bert_t, "bert_m": self.bert_m,
        }
        if self.format is not None:
            out["format"] = self.format
        if self.length is not None:
            out["length"] = self.length
        return out

    def to_json(self) -> dict:
        d = asdict(self)
        d["fallback_flags"] = sorted(self.fallback_flags)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RewardBreakdown":
        d = dict(d)
        d["fallback_flags"] = frozenset(d.get("fallback_flags", ()))
        return cls(**d)


def composite_reward(*, decomposition: float, clip: float, s_presence: float,
                     t_presence: float, m_align: float, bert_s: float,
                     bert_t: float, bert_m: float,
                     format: Optional[float] = None,
                     length: Optional[float] = None,
                     weights: WeightConfig = WeightConfig(),
                     fallback_flags: Iterable[str] = ()) -> RewardBreakdown:
    """Weighted sum of the reward components. Linear, deterministic,
    and unnormalized unless the config says otherwise."""
    total = (weights.w_decomposition * decomposition
             + weights.w_clip * clip
             + weights.w_s_presence * s_presence
             + weights.w_t_presence * t_presence
             + weights.w_m_align * m_align
             + weights.w_bert_s * bert_s
             + weights.w_bert_t * bert_t
             + weights.w_bert_m * bert_m)
    if weights.include_grpo_extras:
        if format is None or length is None:
            raise MissingComponent(
                "format and length rewards required when extras are enabled")
        total += weights.w_format * format + weights.w_length * length
    else:
        format = None
        length = None
    if weights.normalize:
        total /= weights.active_sum()
    return RewardBreakdown(
        decomposition=decomposition, clip=clip, s_presence=s_presence,
        t_presence=t_presence, m_align=m_align, bert_s=bert_s,
        bert_t=bert_t, bert_m=bert_m, format=format, length=length,
        total=total, fallback_flags=frozenset(fallback_flags))


def clip_score(embed: EmbeddingBackend, image: ImageArtifact,
               prompt: VisualPrompt, scale: float = 1.0) -> float:
    """Clamped cosine between image and prompt embeddings."""
    img_vec = embed.embed_image(image.bytes).pooled()
    txt_vec = embed.embed_text(prompt.text).pooled()
    return scale * max(0.0, cosine(img_vec, txt_vec))


def bert_similarity(embed: EmbeddingBackend, reference: str,
                    candidate: str) -> tuple[float, bool]:
    """Greedy token-matching F1 between two texts.

    Recall: mean over reference tokens of the best cosine against any
    candidate token; precision is the mirror image; F1 the harmonic
    mean, clamped into [0, 1]. Falls back to sequence-level cosine
    (second return value True) when the backend cannot emit per-token
    vectors.
    """
    if not reference.strip() or not candidate.strip():
        raise ValueError("both texts must be non-empty")
    if not embed.supports_per_token:
        value = max(0.0, min(1.0, cosine(embed.embed_text(reference).pooled(),
                                         embed.embed_text(candidate).pooled())))
        return value, True
    ref = embed.embed_text(reference, per_token=True).values
    cand = embed.embed_text(candidate, per_token=True).values
    sims = [[cosine(r, c) for c in cand] for r in ref]
    recall = sum(max(row) for row in sims) / len(ref)
    precision = sum(max(sims[i][j] for i in range(len(ref)))
                    for j in range(len(cand))) / len(cand)
    if precision + recall <= 0:
        return 0.0, False
    f1 = 2 * precision * recall / (precision + recall)
    return max(0.0, min(1.0, f1)), False


def format_reward(raw_completion: str,
                  required_tags: Iterable[str] = prompts.DECOMPOSE_TAGS) -> float:
    """Fraction of required tags present and well-formed."""
    tags = list(required_tags)
    ok = 0
    for tag in tags:
        try:
            parse_tagged(raw_completion, [tag])
            ok += 1
        except ParseError:
            pass
    return ok / len(tags)


def length_reward(prompt: VisualPrompt) -> float:
    """1.0 within the token budget, then linear decay to 0 at twice it."""
    over = prompt.token_count - PROMPT_TOKEN_BUDGET
    if over <= 0:
        return 1.0
    return max(0.0, 1.0 - over / PROMPT_TOKEN_BUDGET)


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Mean-centered advantages (debiased: no std-dev division)."""
    if not rewards:
        raise ValueError("reward group must be non-empty")
    if all(r == rewards[0] for r in rewards):
        return [0.0] * len(rewards)
    mean = math.fsum(rewards) / len(rewards)
    return [r - mean for r in rewards]


@dataclass(frozen=True)
class CompletionKey:
    digest: str

    @classmethod
    def build(cls, metaphor: Metaphor, d: Decomposition, prompt: VisualPrompt,
              params: GenerationParams) -> "CompletionKey":
        h = hashlib.sha256()
        for part in (metaphor.id, d.source, d.target, d.meaning,
                     prompt.text, str(params.guidance_scale),
                     str(params.inference_steps), str(params.width),
                     str(params.height), str(params.seed)):
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
        return cls(h.hexdigest())


@dataclass
class ScoredCompletion:
    key: CompletionKey
    breakdown: RewardBreakdown
    analysis_s_prime: str = ""
    analysis_t_prime: str = ""
    analysis_m_prime: str = ""
    image_hash: str = ""
    image_bytes: bytes = field(default=b"", repr=False)
    from_cache: bool = False


class RewardScorer:
    """Scores one completion end to end, with a single-flight cache.

    A cache hit returns the stored breakdown with zero backend calls;
    concurrent misses on the same key coalesce into one evaluation.
    Failures are never cached.
    """

    def __init__(self, image_backend: ImageBackend, judge: VlmJudge,
                 embed: EmbeddingBackend, decomposer: Decomposer,
                 cache_dir: Optional[Path] = None):
        self.image_backend = image_backend
        self.judge = judge
        self.embed = embed
        self.decomposer = decomposer
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._cache: dict[str, ScoredCompletion] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def _key_lock(self, digest: str) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(digest, threading.Lock())

    def _load_disk(self, digest: str) -> Optional[ScoredCompletion]:
        if not self.cache_dir:
            return None
        path = self.cache_dir / f"{digest}.json"
        if not path.exists():
            return None
        data = json.loads(path.read_text())
        return ScoredCompletion(
            key=CompletionKey(digest),
            breakdown=RewardBreakdown.from_json(data["breakdown"]),
            analysis_s_prime=data.get("s_prime", ""),
            analysis_t_prime=data.get("t_prime", ""),
            analysis_m_prime=data.get("m_prime", ""),
            image_hash=data.get("image_hash", ""),
            from_cache=True)

    def _store_disk(self, digest: str, scored: ScoredCompletion):
        if not self.cache_dir:
            return
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "breakdown": scored.breakdown.to_json(),
            "s_prime": scored.analysis_s_prime,
            "t_prime": scored.analysis_t_prime,
            "m_prime": scored.analysis_m_prime,
            "image_hash": scored.image_hash,
        }
        (self.cache_dir / f"{digest}.json").write_text(json.dumps(payload))

    def score_completion(self, metaphor: Metaphor, d: Decomposition,
                         prompt: VisualPrompt, params: GenerationParams,
                         weights: WeightConfig = WeightConfig(),
                         format_value: Optional[float] = None,
                         ) -> ScoredCompletion:
        key = CompletionKey.build(metaphor, d, prompt, params)
        with self._master:
            hit = self._cache.get(key.digest)
        if hit is not None:
            return hit
        with self._key_lock(key.digest):
            with self._master:
                hit = self._cache.get(key.digest)
            if hit is not None:
                return hit
            hit = self._load_disk(key.digest)
            if hit is None:
                hit = self._evaluate(key, metaphor, d, prompt, params,
                                     weights, format_value)
            with self._master:
                self._cache[key.digest] = hit
            return hit

    def _evaluate(self, key: CompletionKey, metaphor: Metaphor,
                  d: Decomposition, prompt: VisualPrompt,
                  params: GenerationParams, weights: WeightConfig,
                  format_value: Optional[float]) -> ScoredCompletion:
        flags: set[str] = set()
        decomp_score = self.decomposer.score_decomposition(metaphor, d)
        image = self.image_backend.generate_image(prompt, params)
        analysis = self.judge.analyze_with_stm(image, metaphor, d)
        clip = clip_score(self.embed, image, prompt, scale=weights.clip_scale)
        bert_s, fb_s = bert_similarity(self.embed, d.source, analysis.s_prime)
        bert_t, fb_t = bert_similarity(self.embed, d.target, analysis.t_prime)
        bert_m, fb_m = bert_similarity(self.embed, d.meaning, analysis.m_prime)
        if fb_s or fb_t or fb_m:
            flags.add("bert_sequence_fallback")
        if prompt.over_budget:
            flags.add("prompt_over_budget")
        fmt = length = None
        if weights.include_grpo_extras:
            fmt = format_value if format_value is not None else 1.0
            length = length_reward(prompt)
        breakdown = composite_reward(
            decomposition=decomp_score.score, clip=clip,
            s_presence=analysis.s_presence, t_presence=analysis.t_presence,
            m_align=analysis.m_align, bert_s=bert_s, bert_t=bert_t,
            bert_m=bert_m, format=fmt, length=length, weights=weights,
            fallback_flags=flags)
        scored = ScoredCompletion(
            key=key, breakdown=breakdown,
            analysis_s_prime=analysis.s_prime,
            analysis_t_prime=analysis.t_prime,
            analysis_m_prime=analysis.m_prime,
            image_hash=image.content_hash,
            image_bytes=image.bytes)
        self._store_disk(key.digest, scored)
        return scored
