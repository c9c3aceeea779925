"""Toy policy-gradient loop proving the reward plumbing end to end.

This is a mechanical health check, not a training claim: a tiny
categorical policy over a fixed bank of candidate completions takes a
few mean-centered policy-gradient steps against live service rewards.
The real fine-tuning loss lives in the external trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .config import AdapterConfig
from .rewards import RewardClient, reward_fn

DEFAULT_METAPHOR = "Hope is a lighthouse"


def _candidate(scene: str) -> str:
    return (
        "<reasoning>Hope guides like a beacon.</reasoning>\n"
        "<source>A lighthouse</source>\n"
        "<target>Hope</target>\n"
        "<intended_meaning>Hope guides through dark times.</intended_meaning>\n"
        f"<visual_prompt>A lighthouse beam over {scene}.</visual_prompt>")


CANDIDATE_BANK = tuple(_candidate(scene) for scene in (
    "a stormy night sea", "calm dawn waters", "a fog-bound harbor",
    "breaking winter waves", "a starlit coastline", "drifting sea ice"))


class NonFiniteLoss(RuntimeError):
    """A training step produced a NaN or infinite loss; the run aborts."""


@dataclass(frozen=True)
class StepMetrics:
    step: int
    mean_reward: float
    loss: float
    advantages: tuple[float, ...]


def smoke_train(config: AdapterConfig, steps: int = 2, seed: int = 0,
                lr: float = 0.1, metaphor_text: str = DEFAULT_METAPHOR,
                client: Optional[RewardClient] = None) -> list[StepMetrics]:
    if steps < 1:
        raise ValueError("steps must be at least 1")
    generator = torch.Generator().manual_seed(seed)
    logits = torch.nn.Parameter(torch.zeros(len(CANDIDATE_BANK)))
    optimizer = torch.optim.SGD([logits], lr=lr)
    log: list[StepMetrics] = []
    for step in range(steps):
        probs = torch.softmax(logits, dim=0)
        picks = torch.multinomial(probs, config.group_size,
                                  replacement=True, generator=generator)
        completions = [CANDIDATE_BANK[i] for i in picks.tolist()]
        rewards = reward_fn([metaphor_text] * len(completions), completions,
                            config=config, client=client)
        reward_tensor = torch.tensor(rewards, dtype=torch.float32)
        advantages = reward_tensor - reward_tensor.mean()
        log_probs = torch.log_softmax(logits, dim=0)[picks]
        loss = -(advantages.detach() * log_probs).mean()
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"step {step}: loss {loss.item()}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        log.append(StepMetrics(step=step,
                               mean_reward=reward_tensor.mean().item(),
                               loss=loss.item(),
                               advantages=tuple(advantages.tolist())))
    return log
