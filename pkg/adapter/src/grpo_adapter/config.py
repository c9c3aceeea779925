"""Adapter configuration, loaded from YAML with an env override."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import yaml

# Documented trainer defaults, passed through opaquely to the external
# trainer; the adapter itself never interprets them.
DEFAULT_TRAINER_PASSTHROUGH: dict[str, Any] = {
    "lora_rank": 32,
    "lora_alpha": 64,
    "learning_rate": 5e-5,
    "batch_size": 4,
    "loss_type": "dr_grpo",
}


@dataclass(frozen=True)
class AdapterConfig:
    service_url: str = "http://127.0.0.1:8000"
    group_size: int = 4
    max_seq_tokens: int = 512
    max_retries: int = 3
    auth_token: Optional[str] = None
    trainer_passthrough: Mapping[str, Any] = field(
        default_factory=lambda: dict(DEFAULT_TRAINER_PASSTHROUGH))

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")
        if self.max_seq_tokens < 1:
            raise ValueError("max_seq_tokens must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def load_config(path: Optional[str] = None,
                env: Mapping[str, str] = os.environ) -> AdapterConfig:
    """Build a config from an optional YAML file.

    The REWARD_SERVICE_URL environment variable overrides the file's
    service_url when set.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        raw.update(loaded)
    if env.get("REWARD_SERVICE_URL"):
        raw["service_url"] = env["REWARD_SERVICE_URL"]
    passthrough = dict(DEFAULT_TRAINER_PASSTHROUGH)
    passthrough.update(raw.pop("trainer_passthrough", {}))
    known = {k: raw[k] for k in
             ("service_url", "group_size", "max_seq_tokens", "max_retries",
              "auth_token") if k in raw}
    return AdapterConfig(trainer_passthrough=passthrough, **known)
