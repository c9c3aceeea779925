"""The training-free refinement loop: generate, evaluate, refine for a
fixed number of iterations, then keep the best-scoring iteration."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import prompts
from .backends.base import ChatBackend, ChatMessage
from .decomposer import Decomposer, DecompositionScore, ask_with_reask
from .judge import VlmAnalysis
from .model import (
    Decomposition,
    GenerationParams,
    Metaphor,
    TokenCounter,
    VisualPrompt,
    default_token_counter,
    refined,
)
from .parsing import ParseError
from .rewards import RewardBreakdown, RewardScorer, WeightConfig


class RunFailed(RuntimeError):
    """Every iteration of a run failed."""


@dataclass(frozen=True)
class IterationRecord:
    index: int
    prompt: VisualPrompt
    image_hash: str = ""
    image_path: str = ""
    analysis: Optional[VlmAnalysis] = None
    breakdown: Optional[RewardBreakdown] = None
    refinement_raw: Optional[str] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.breakdown is None

    @property
    def reward(self) -> float:
        # Failed iterations sort below everything real.
        if self.breakdown is None:
            return -math.inf
        return self.breakdown.total


@dataclass(frozen=True)
class RunRecord:
    metaphor: Metaphor
    decomposition: Decomposition
    decomposition_score: DecompositionScore
    iterations: tuple[IterationRecord, ...]
    selected_index: int
    config_snapshot: dict = field(default_factory=dict)

    @property
    def selected(self) -> IterationRecord:
        return self.iterations[self.selected_index]

    def to_json(self) -> dict:
        return {
            "metaphor": {"id": self.metaphor.id, "text": self.metaphor.text,
                         "category": self.metaphor.category},
            "decomposition": {
                "source": self.decomposition.source,
                "target": self.decomposition.target,
                "meaning": self.decomposition.meaning,
                "reasoning": self.decomposition.reasoning,
            },
            "decomposition_score": self.decomposition_score.score,
            "selected_index": self.selected_index,
            "config": self.config_snapshot,
            "iterations": [
                {
                    "index": it.index,
                    "prompt": it.prompt.text,
                    "token_count": it.prompt.token_count,
                    "over_budget": it.prompt.over_budget,
                    "image_hash": it.image_hash,
                    "image_path": it.image_path,
                    "reward": None if it.failed else it.breakdown.total,
                    "components": None if it.failed else it.breakdown.components(),
                    "fallback_flags": (sorted(it.breakdown.fallback_flags)
                                       if it.breakdown else []),
                    "analysis": None if it.analysis is None else {
                        "s_prime": it.analysis.s_prime,
                        "t_prime": it.analysis.t_prime,
                        "m_prime": it.analysis.m_prime,
                        "s_presence": it.analysis.s_presence,
                        "t_presence": it.analysis.t_presence,
                        "m_align": it.analysis.m_align,
                    },
                    "error": it.error,
                }
                for it in self.iterations
            ],
        }


def select_best(iterations: tuple[IterationRecord, ...]) -> int:
    """Argmax of iteration reward; earliest index on ties."""
    best = 0
    for i, it in enumerate(iterations):
        if it.reward > iterations[best].reward:
            best = i
    return best


def _strip_reply(text: str) -> str:
    """Remove code fences and wrapping quotes from a refinement reply."""
    t = text.strip()
    if t.startswith("```"):
        t = t[3:]
        first_newline = t.find("\n")
        if first_newline >= 0 and t[:first_newline].strip().isalpha():
            t = t[first_newline + 1:]  # drop a language marker line
        if t.rstrip().endswith("```"):
            t = t.rstrip()[:-3]
        t = t.strip()
    for quote in ('"', "'"):
        if len(t) >= 2 and t.startswith(quote) and t.endswith(quote):
            t = t[1:-1].strip()
            break
    return t


class Refinery:
    def __init__(self, llm: ChatBackend, decomposer: Decomposer,
                 scorer: RewardScorer,
                 token_counter: TokenCounter = default_token_counter,
                 out_dir: Optional[Path] = None):
        self.llm = llm
        self.decomposer = decomposer
        self.scorer = scorer
        self.token_counter = token_counter
        self.out_dir = Path(out_dir) if out_dir else None
        self._write_lock = threading.Lock()

    def refine_prompt(self, metaphor: Metaphor, d: Decomposition,
                      decomposition_score: DecompositionScore,
                      current: VisualPrompt, breakdown: RewardBreakdown,
                      analysis: VlmAnalysis) -> tuple[VisualPrompt, str]:
        """One feedback round: returns the next prompt and the raw
        reply. An empty reply (after one re-ask) falls back to the
        current prompt text."""
        summary = "\n".join(f"  - {name}: {value:.4f}"
                            for name, value in breakdown.components().items())
        request = prompts.REFINE_TEMPLATE.format(
            metaphor=metaphor.text, s=d.source, t=d.target, m=d.meaning,
            decomposition_quality=decomposition_score.score,
            current_prompt=current.text, reward=breakdown.total,
            scores_summary=summary,
            s_prime=analysis.s_prime or "Not identified",
            t_prime=analysis.t_prime or "Not identified",
            m_prime=analysis.m_prime or "Not interpreted")

        def parse(raw: str) -> str:
            stripped = _strip_reply(raw)
            if not stripped:
                raise ParseError("empty refinement reply")
            return stripped

        next_index = (current.origin.iteration + 1
                      if current.origin.kind == "refined" else 1)
        try:
            text, raw = ask_with_reask(self.llm, "",
                                       [ChatMessage("user", request)], parse)
        except ParseError:
            fallback = VisualPrompt(text=current.text,
                                    token_count=current.token_count,
                                    origin=refined(next_index))
            return fallback, ""
        return (VisualPrompt.from_text(text, origin=refined(next_index),
                                       counter=self.token_counter), raw)

    def run_metaphor(self, metaphor: Metaphor, n_iterations: int = 10,
                     params: GenerationParams = GenerationParams(),
                     weights: WeightConfig = WeightConfig(),
                     config_snapshot: Optional[dict] = None) -> RunRecord:
        if n_iterations < 1:
            raise ValueError("n_iterations must be at least 1")
        decomposition, prompt = self.decomposer.decompose(metaphor)
        decomp_score = self.decomposer.score_decomposition(metaphor,
                                                           decomposition)
        iterations: list[IterationRecord] = []
        for i in range(n_iterations):
            record, next_prompt = self._run_iteration(
                i, metaphor, decomposition, decomp_score, prompt, params,
                weights, refine=i < n_iterations - 1)
            iterations.append(record)
            if next_prompt is not None:
                prompt = next_prompt
            # On failure the loop continues with the previous prompt.
        if all(it.failed for it in iterations):
            raise RunFailed(f"all {n_iterations} iterations failed for "
                            f"metaphor {metaphor.id}")
        run = RunRecord(
            metaphor=metaphor, decomposition=decomposition,
            decomposition_score=decomp_score, iterations=tuple(iterations),
            selected_index=select_best(tuple(iterations)),
            config_snapshot=config_snapshot or {})
        if self.out_dir:
            self._persist(run)
        return run

    def _run_iteration(self, index: int, metaphor: Metaphor,
                       d: Decomposition, decomp_score: DecompositionScore,
                       prompt: VisualPrompt, params: GenerationParams,
                       weights: WeightConfig, refine: bool,
                       ) -> tuple[IterationRecord, Optional[VisualPrompt]]:
        try:
            scored = self.scorer.score_completion(metaphor, d, prompt, params,
                                                  weights)
        except Exception as e:  # noqa: BLE001 - any backend fault skips the iteration
            return IterationRecord(index=index, prompt=prompt,
                                   error=str(e)), None
        analysis = VlmAnalysis(
            s_prime=scored.analysis_s_prime or "Not identified",
            t_prime=scored.analysis_t_prime or "Not identified",
            m_prime=scored.analysis_m_prime or "Not interpreted",
            s_presence=scored.breakdown.s_presence,
            t_presence=scored.breakdown.t_presence,
            m_align=scored.breakdown.m_align)
        image_path = ""
        if self.out_dir and scored.image_bytes:
            path = self.out_dir / metaphor.id / f"iter_{index}.png"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(scored.image_bytes)
            image_path = str(path.relative_to(self.out_dir))
        refinement_raw = None
        next_prompt = None
        if refine:
            next_prompt, refinement_raw = self.refine_prompt(
                metaphor, d, decomp_score, prompt, scored.breakdown, analysis)
        record = IterationRecord(
            index=index, prompt=prompt, image_hash=scored.image_hash,
            image_path=image_path, analysis=analysis,
            breakdown=scored.breakdown, refinement_raw=refinement_raw)
        return record, next_prompt

    def _persist(self, run: RunRecord):
        runs_path = self.out_dir / "runs.jsonl"
        line = json.dumps(run.to_json(), sort_keys=True)
        with self._write_lock:
            with open(runs_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
