"""HTTP reward service for external policy-optimization trainers.

POST /v1/score scores a batch of raw LLM completions (each expected
to carry the five decomposition tags) and optionally returns
group-relative advantages; GET /v1/health reports backend
reachability. Scoring is cache-backed, so resubmitting a batch is
cheap and idempotent.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import replace
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import prompts
from .backends.errors import BackendError
from .model import (
    Decomposition,
    GenerationParams,
    InvalidField,
    VisualPrompt,
    default_token_counter,
    validate_metaphor,
)
from .parsing import ParseError, parse_tagged
from .rewards import (
    RewardScorer,
    WeightConfig,
    format_reward,
    group_advantages,
    length_reward,
)

DEFAULT_MAX_BATCH = 64
PROBE_CACHE_SECONDS = 5.0

Probe = Callable[[], bool]


class ScoreItem(BaseModel):
    metaphor_text: str
    completion_raw: str
    generation_params: Optional[dict] = None


class ScoreRequest(BaseModel):
    items: list[ScoreItem] = Field(min_length=1)
    group_id: Optional[str] = None
    weights_override: Optional[dict] = None


def _zero_breakdown(fmt: float, length: float,
                    weights: WeightConfig) -> dict:
    total = weights.w_format * fmt + weights.w_length * length
    if weights.normalize:
        total /= weights.active_sum()
    return {
        "decomposition": 0.0, "clip": 0.0, "s_presence": 0.0,
        "t_presence": 0.0, "m_align": 0.0, "bert_s": 0.0, "bert_t": 0.0,
        "bert_m": 0.0, "format": fmt, "length": length, "total": total,
        "fallback_flags": ["unparsable_completion"],
    }


class _HealthCache:
    def __init__(self, probes: dict[str, Probe], ttl: float):
        self.probes = probes
        self.ttl = ttl
        self._lock = threading.Lock()
        self._at = -float("inf")
        self._result: dict[str, bool] = {}

    def check(self) -> dict[str, bool]:
        with self._lock:
            now = time.monotonic()
            if now - self._at < self.ttl:
                return dict(self._result)
            result = {}
            for name, probe in self.probes.items():
                try:
                    result[name] = bool(probe())
                except Exception:  # noqa: BLE001 - a failing probe means "down"
                    result[name] = False
            self._at = now
            self._result = result
            return dict(result)


def create_app(scorer: RewardScorer,
               weights: WeightConfig = WeightConfig(),
               probes: Optional[dict[str, Probe]] = None,
               max_batch: int = DEFAULT_MAX_BATCH,
               auth_token: Optional[str] = None,
               default_params: GenerationParams = GenerationParams()) -> FastAPI:
    app = FastAPI(title="metaphor-forge reward service")
    weights = replace(weights, include_grpo_extras=True)
    health = _HealthCache(probes or {}, PROBE_CACHE_SECONDS)
    token = auth_token if auth_token is not None else os.environ.get(
        "METAPHOR_FORGE_TOKEN")

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request,
                                  exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"detail": str(exc.errors()[:3])})

    def _authorized(request: Request) -> bool:
        if not token:
            return True
        return request.headers.get("Authorization") == f"Bearer {token}"

    def _score_item(item: ScoreItem, active: WeightConfig) -> dict:
        fmt = format_reward(item.completion_raw, prompts.DECOMPOSE_TAGS)
        try:
            tags = parse_tagged(item.completion_raw, prompts.DECOMPOSE_TAGS)
            decomposition = Decomposition(
                source=tags["source"], target=tags["target"],
                meaning=tags["intended_meaning"],
                reasoning=tags["reasoning"])
            prompt = VisualPrompt.from_text(tags["visual_prompt"])
        except (ParseError, InvalidField):
            # Trainers need a reward for every sampled candidate, so
            # unparsable completions score zero on all model-derived
            # components instead of being rejected.
            length = length_reward(VisualPrompt.from_text(
                item.completion_raw or " "))
            return {"key": None, "parse_ok": False, "error": None,
                    "breakdown": _zero_breakdown(fmt, length, active)}
        params = default_params
        if item.generation_params:
            params = GenerationParams(**item.generation_params)
        metaphor = validate_metaphor(item.metaphor_text)
        try:
            scored = scorer.score_completion(metaphor, decomposition, prompt,
                                             params, active, format_value=fmt)
        except BackendError as e:
            return {"key": None, "parse_ok": True, "error": str(e),
                    "breakdown": None}
        return {"key": scored.key.digest, "parse_ok": True, "error": None,
                "breakdown": scored.breakdown.to_json()}

    @app.post("/v1/score")
    def score(request: Request, body: ScoreRequest):
        if not _authorized(request):
            return JSONResponse(status_code=401,
                                content={"detail": "missing or bad token"})
        if len(body.items) > max_batch:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch exceeds {max_batch} items"})
        active = weights
        if body.weights_override:
            active = replace(WeightConfig(**body.weights_override),
                             include_grpo_extras=True)
        results = [_score_item(item, active) for item in body.items]
        response: dict = {"results": results}
        had_errors = any(r["error"] for r in results)
        if body.group_id is not None and not had_errors:
            totals = [r["breakdown"]["total"] for r in results]
            response["advantages"] = group_advantages(totals)
        if had_errors:
            return JSONResponse(status_code=502, content=response)
        return response

    @app.get("/v1/health")
    def health_endpoint():
        reachability = health.check()
        status = "ok" if all(reachability.values()) else "degraded"
        return {"status": status, "backends": reachability}

    return app
