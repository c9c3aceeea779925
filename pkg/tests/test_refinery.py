from types import SimpleNamespace
import json

import pytest

from metaphor_forge.backends import MockChatBackend
from metaphor_forge.decomposer import Decomposer, DecompositionScore
from metaphor_forge.judge import VlmAnalysis
from metaphor_forge.model import (
    Decomposition,
    GenerationParams,
    VisualPrompt,
    validate_metaphor,
)
from metaphor_forge.refinery import (
    IterationRecord,
    Refinery,
    RunFailed,
    select_best,
    _strip_reply,
)
from metaphor_forge.rewards import (
    CompletionKey,
    RewardBreakdown,
    ScoredCompletion,
)
from tests.conftest import MockStack

METAPHOR = validate_metaphor("The mind is an ocean")
ANALYSIS = VlmAnalysis(s_prime="An ocean", t_prime="Depth of thought",
                       m_prime="Minds run deep", s_presence=0.9,
                       t_presence=0.6, m_align=0.7)


def breakdown_with_total(total: float) -> RewardBreakdown:
    return RewardBreakdown(decomposition=0.5, clip=0.2, s_presence=0.9,
                           t_presence=0.6, m_align=0.7, bert_s=0.8,
                           bert_t=0.8, bert_m=0.8, total=total)


class ScriptedScorer:
    """Returns pre-set totals, one per call, regardless of inputs.
    `None` entries simulate a failed (backend-erroring) iteration."""

    def __init__(self, totals):
        self.totals = list(totals)
        self.calls = 0

    def score_completion(self, metaphor, d, prompt, params, weights=None,
                         format_value=None):
        total = self.totals[self.calls]
        self.calls += 1
        if total is None:
            raise RuntimeError("scripted backend outage")
        return ScoredCompletion(
            key=CompletionKey.build(metaphor, d, prompt, params),
            breakdown=breakdown_with_total(total),
            analysis_s_prime=ANALYSIS.s_prime,
            analysis_t_prime=ANALYSIS.t_prime,
            analysis_m_prime=ANALYSIS.m_prime,
            image_hash="feed" * 16, image_bytes=b"\x89PNG fake")


def scripted_refinery(totals, out_dir=None, seed=0):
    llm = MockChatBackend(seed=seed)
    decomposer = Decomposer(llm, judge=MockChatBackend(seed=seed + 1))
    return Refinery(llm, decomposer, ScriptedScorer(totals), out_dir=out_dir)


class TestSelection:
    def test_argmax_selects_middle(self):
        run = scripted_refinery([0.3, 0.8, 0.5]).run_metaphor(
            METAPHOR, n_iterations=3)
        assert run.selected_index == 1
        assert run.selected.breakdown.total == 0.8

    def test_tie_earliest_wins(self):
        run = scripted_refinery([0.6, 0.6]).run_metaphor(METAPHOR,
                                                         n_iterations=2)
        assert run.selected_index == 0

    def test_single_iteration(self):
        run = scripted_refinery([0.01]).run_metaphor(METAPHOR, n_iterations=1)
        assert run.selected_index == 0
        assert len(run.iterations) == 1

    def test_matches_independent_linear_scan(self):
        totals = [0.2, 0.9, 0.9, 0.1, 0.7]
        run = scripted_refinery(totals).run_metaphor(METAPHOR,
                                                     n_iterations=5)
        best, best_i = float("-inf"), 0
        for i, it in enumerate(run.iterations):
            if it.breakdown.total > best:
                best, best_i = it.breakdown.total, i
        assert run.selected_index == best_i == 1

    def test_select_best_skips_failures(self):
        records = (
            IterationRecord(index=0, prompt=VisualPrompt.from_text("a"),
                            error="boom"),
            IterationRecord(index=1, prompt=VisualPrompt.from_text("b"),
                            breakdown=breakdown_with_total(0.2),
                            analysis=ANALYSIS),
        )
        assert select_best(records) == 1


class TestLoopContracts:
    def test_one_decomposition_and_score_per_run(self):
        llm = MockChatBackend(seed=0)
        judge = MockChatBackend(seed=1)
        decomposer = Decomposer(llm, judge=judge)
        refinery = Refinery(llm, decomposer, ScriptedScorer([0.5] * 6))
        refinery.run_metaphor(METAPHOR, n_iterations=6)
        # One decompose call + five refinement calls on the llm; one
        # decomposition-score call on the judge.
        assert judge.calls == 1
        assert llm.calls == 1 + 5

    def test_n_generations_and_n_minus_1_refinements(self):
        stack = MockStack(seed=3)
        run = stack.refinery.run_metaphor(METAPHOR, n_iterations=4)
        assert stack.image.calls == 4
        assert sum(1 for it in run.iterations
                   if it.refinement_raw is not None) == 3
        assert run.iterations[-1].refinement_raw is None

    def test_deterministic_with_seeded_mocks(self):
        a = MockStack(seed=11).refinery.run_metaphor(METAPHOR, n_iterations=3)
        b = MockStack(seed=11).refinery.run_metaphor(METAPHOR, n_iterations=3)
        assert a.to_json() == b.to_json()

    def test_failed_iteration_continues_with_previous_prompt(self):
        refinery = scripted_refinery([0.4, None, 0.6])
        run = refinery.run_metaphor(METAPHOR, n_iterations=3)
        assert run.iterations[1].failed
        assert run.iterations[1].error == "scripted backend outage"
        assert run.selected_index == 2
        assert len(run.iterations) == 3

    def test_all_failed_raises(self):
        with pytest.raises(RunFailed):
            scripted_refinery([None, None]).run_metaphor(METAPHOR,
                                                         n_iterations=2)

    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            scripted_refinery([]).run_metaphor(METAPHOR, n_iterations=0)

    def test_writes_images_and_runs_jsonl(self, tmp_path):
        refinery = scripted_refinery([0.3, 0.8], out_dir=tmp_path)
        run = refinery.run_metaphor(METAPHOR, n_iterations=2)
        for i in range(2):
            assert (tmp_path / METAPHOR.id / f"iter_{i}.png").exists()
        lines = (tmp_path / "runs.jsonl").read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["selected_index"] == run.selected_index
        assert len(record["iterations"]) == 2


class TestRefinePrompt:
    def make(self, script):
        llm = MockChatBackend(script=script)
        decomposer = Decomposer(MockChatBackend(seed=0),
                                judge=MockChatBackend(seed=1))
        return Refinery(llm, decomposer, ScriptedScorer([])), llm

    DECOMP = Decomposition(source="An ocean", target="The mind",
                           meaning="Thought has hidden depths")
    SCORE = DecompositionScore(score=0.75)
    CURRENT = VisualPrompt.from_text("a calm sea under stars")

    def refine(self, refinery):
        return refinery.refine_prompt(METAPHOR, self.DECOMP, self.SCORE,
                                      self.CURRENT,
                                      breakdown_with_total(0.55), ANALYSIS)

    def test_reply_becomes_next_prompt(self):
        refinery, _ = self.make(["a deep ocean with glowing thoughts"])
        prompt, raw = self.refine(refinery)
        assert prompt.text == "a deep ocean with glowing thoughts"
        assert prompt.origin.kind == "refined"
        assert prompt.origin.iteration == 1

    def test_quotes_stripped_and_tokens_recounted(self):
        refinery, _ = self.make(['"a deep ocean of ideas"'])
        prompt, _ = self.refine(refinery)
        assert prompt.text == "a deep ocean of ideas"
        assert prompt.token_count == 5

    def test_code_fence_stripped(self):
        refinery, _ = self.make(["```\na quiet tide of memory\n```"])
        prompt, _ = self.refine(refinery)
        assert prompt.text == "a quiet tide of memory"

    def test_over_budget_reply_accepted_and_flagged(self):
        long_reply = " ".join(["wave"] * 90)
        refinery, _ = self.make([long_reply])
        prompt, _ = self.refine(refinery)
        assert prompt.over_budget
        assert prompt.text == long_reply

    def test_empty_reply_falls_back_to_current(self):
        refinery, llm = self.make(["", "   "])
        prompt, raw = self.refine(refinery)
        assert prompt.text == self.CURRENT.text
        assert prompt.origin.kind == "refined"
        assert raw == ""
        assert llm.calls == 2  # one re-ask before giving up

    def test_absent_perceptions_rendered_as_not_identified(self):
        captured = {}

        class Spy:
            def chat_complete(self, system, messages):
                captured["prompt"] = messages[-1].text
                return "a revised scene"

        decomposer = Decomposer(MockChatBackend(seed=0))
        refinery = Refinery(Spy(), decomposer, ScriptedScorer([]))
        # The judge type forbids empty perceptions, so simulate a
        # degenerate analysis with a stand-in object.
        analysis = SimpleNamespace(s_prime="", t_prime="", m_prime="",
                                   s_presence=0.5, t_presence=0.5,
                                   m_align=0.5)
        refinery.refine_prompt(METAPHOR, self.DECOMP, self.SCORE,
                               self.CURRENT, breakdown_with_total(0.5),
                               analysis)
        assert "Perceived Source (S'): Not identified" in captured["prompt"]
        assert "Perceived Target (T'): Not identified" in captured["prompt"]
        assert "Perceived Meaning (M'): Not interpreted" in captured["prompt"]


def test_strip_reply_variants():
    assert _strip_reply('"quoted"') == "quoted"
    assert _strip_reply("```text\nbody\n```") == "body"
    assert _strip_reply("```\nbody\n```") == "body"
    assert _strip_reply("  plain  ") == "plain"
