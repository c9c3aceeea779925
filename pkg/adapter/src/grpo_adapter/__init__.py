from .config import AdapterConfig, load_config
from .rewards import RewardClient, RewardServiceError, reward_fn
from .smoke_train import (
    CANDIDATE_BANK,
    NonFiniteLoss,
    StepMetrics,
    smoke_train,
)

__all__ = [
    "AdapterConfig",
    "CANDIDATE_BANK",
    "NonFiniteLoss",
    "RewardClient",
    "RewardServiceError",
    "StepMetrics",
    "load_config",
    "reward_fn",
    "smoke_train",
]
