"""Visual metaphor generation, scoring, and iterative refinement."""

from .decomposer import Decomposer, DecompositionScore
from .judge import NoStmAnalysis, VlmAnalysis, VlmJudge
from .model import (
    Decomposition,
    GenerationParams,
    ImageArtifact,
    Metaphor,
    VisualPrompt,
    validate_metaphor,
)
from .refinery import IterationRecord, Refinery, RunRecord
from .rewards import (
    CompletionKey,
    RewardBreakdown,
    RewardScorer,
    WeightConfig,
    bert_similarity,
    clip_score,
    composite_reward,
    format_reward,
    group_advantages,
    length_reward,
)
from .service import create_app

__all__ = [
    "CompletionKey", "Decomposer", "Decomposition", "DecompositionScore",
    "GenerationParams", "ImageArtifact", "IterationRecord", "Metaphor",
    "NoStmAnalysis", "Refinery", "RewardBreakdown", "RewardScorer",
    "RunRecord", "VisualPrompt", "VlmAnalysis", "VlmJudge", "WeightConfig",
    "bert_similarity", "clip_score", "composite_reward", "create_app",
    "format_reward", "group_advantages", "length_reward", "validate_metaphor",
]

__version__ = "0.1.0"
