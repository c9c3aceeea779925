"""Metaphor decomposition and decomposition scoring.

One LLM call turns a metaphor into its source / target / meaning
breakdown plus the initial visual prompt; a second judge call scores
that breakdown once per metaphor.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional

from . import prompts
from .backends.base import ChatBackend, ChatMessage
from .model import (
    Decomposition,
    Metaphor,
    TokenCounter,
    VisualPrompt,
    default_token_counter,
)
from .parsing import ParseError, parse_score, parse_tagged


@dataclass(frozen=True)
class DecompositionScore:
    score: float
    explanation: str = ""
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


def ask_with_reask(backend: ChatBackend, system: str,
                   messages: list[ChatMessage],
                   parse: Callable[[str], object]):
    """One chat round-trip with a single corrective re-ask on parse
    failure. Systematic formatting failures surface as the second
    attempt's ParseError."""
    raw = backend.chat_complete(system, messages)
    try:
        return parse(raw), raw
    except ParseError:
        retry = messages[:-1] + [
            ChatMessage(role=messages[-1].role,
                        text=messages[-1].text + prompts.REASK_SUFFIX,
                        images=messages[-1].images)
        ]
        raw = backend.chat_complete(system, retry)
        return parse(raw), raw


class Decomposer:
    """Decomposes metaphors and scores the decompositions.

    The judge backend defaults to the same chat backend; production
    config usually points it at the VLM.
    """

    def __init__(self, llm: ChatBackend, judge: Optional[ChatBackend] = None,
                 token_counter: TokenCounter = default_token_counter):
        self.llm = llm
        self.judge = judge if judge is not None else llm
        self.token_counter = token_counter
        self._score_memo: dict[tuple, DecompositionScore] = {}
        self._memo_lock = threading.Lock()

    def decompose(self, metaphor: Metaphor) -> tuple[Decomposition, VisualPrompt]:
        request = prompts.DECOMPOSE_TEMPLATE.format(metaphor=metaphor.text)
        messages = [
            ChatMessage("user", prompts.DECOMPOSE_EXAMPLE_USER),
            ChatMessage("assistant", prompts.DECOMPOSE_EXAMPLE_ASSISTANT),
            ChatMessage("user", request),
        ]
        tags, _ = ask_with_reask(
            self.llm, "", messages,
            lambda raw: parse_tagged(raw, prompts.DECOMPOSE_TAGS))
        decomposition = Decomposition(
            source=tags["source"],
            target=tags["target"],
            meaning=tags["intended_meaning"],
            reasoning=tags["reasoning"],
        )
        prompt = VisualPrompt.from_text(tags["visual_prompt"],
                                        counter=self.token_counter)
        return decomposition, prompt

    def score_decomposition(self, metaphor: Metaphor,
                            d: Decomposition) -> DecompositionScore:
        key = (metaphor.id, d.source, d.target, d.meaning)
        with self._memo_lock:
            cached = self._score_memo.get(key)
        if cached is not None:
            return cached

        request = prompts.DECOMPOSITION_SCORE_TEMPLATE.format(
            metaphor=metaphor.text, s=d.source, t=d.target, m=d.meaning)

        def parse(raw: str) -> DecompositionScore:
            tags = parse_tagged(raw, prompts.SCORE_TAGS)
            score, clamped = parse_score("decomposition_score",
                                         tags["decomposition_score"])
            return DecompositionScore(score=score,
                                      explanation=tags["explanation"],
                                      clamped=clamped)

        result, _ = ask_with_reask(self.judge, "",
                                   [ChatMessage("user", request)], parse)
        with self._memo_lock:
            # First writer wins; concurrent scorers of the same pair
            # converge on one stored value.
            return self._score_memo.setdefault(key, result)
