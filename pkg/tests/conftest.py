import pytest

from metaphor_forge.backends import (
    MockChatBackend,
    MockEmbeddingBackend,
    MockImageBackend,
)
from metaphor_forge.decomposer import Decomposer
from metaphor_forge.judge import VlmJudge
from metaphor_forge.refinery import Refinery
from metaphor_forge.rewards import RewardScorer


class MockStack:
    """Fully mock-backed pipeline wiring for tests."""

    def __init__(self, seed: int = 0, out_dir=None):
        self.llm = MockChatBackend(seed=seed)
        self.vlm = MockChatBackend(seed=seed + 1)
        self.image = MockImageBackend(seed=seed)
        self.embed = MockEmbeddingBackend(seed=seed)
        self.decomposer = Decomposer(self.llm, judge=self.vlm)
        self.judge = VlmJudge(self.vlm)
        self.scorer = RewardScorer(self.image, self.judge, self.embed,
                                   self.decomposer)
        self.refinery = Refinery(self.llm, self.decomposer, self.scorer,
                                 out_dir=out_dir)


def pytest_terminal_summary(terminalreporter):
    # Echo the acceptance pass/fail lines after the run so they
    # survive output capture.
    from tests._acceptance_log import lines

    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def stack():
    return MockStack(seed=0)


@pytest.fixture
def embed():
    return MockEmbeddingBackend(seed=0)
