"""Reward-function glue: every reward a trainer sees comes from the
scoring service's /v1/score endpoint, never from client-side math."""

from __future__ import annotations

import time
import uuid
from typing import Callable, Optional, Sequence

import httpx

from .config import AdapterConfig


class RewardServiceError(RuntimeError):
    """The scoring service could not produce rewards.

    Raised instead of returning zeros: training must not silently
    proceed on fabricated rewards.
    """


class RewardClient:
    """Blocking HTTP client for the scoring service with bounded retries."""

    def __init__(self, config: AdapterConfig,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep
        headers = {}
        if config.auth_token:
            headers["Authorization"] = f"Bearer {config.auth_token}"
        self._client = httpx.Client(base_url=config.service_url,
                                    headers=headers, transport=transport,
                                    timeout=30.0)

    def close(self):
        self._client.close()

    def score_group(self, prompts: Sequence[str],
                    completions: Sequence[str],
                    group_id: Optional[str] = None) -> dict:
        body = {
            "items": [{"metaphor_text": p, "completion_raw": c}
                      for p, c in zip(prompts, completions)],
            "group_id": group_id or uuid.uuid4().hex,
        }
        attempts = self.config.max_retries + 1
        last: Exception | str = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self._sleep(0.2 * 2 ** (attempt - 1))
            try:
                response = self._client.post("/v1/score", json=body)
            except httpx.TransportError as e:
                last = e
                continue
            if response.status_code < 400:
                return response.json()
            last = f"HTTP {response.status_code}: {response.text[:200]}"
            if response.status_code < 500:
                break  # client errors will not heal on retry
        raise RewardServiceError(
            f"scoring service failed after {attempts} attempt(s): {last}")


def reward_fn(prompts: Sequence[str], completions: Sequence[str],
              config: Optional[AdapterConfig] = None,
              client: Optional[RewardClient] = None) -> list[float]:
    """Score completions through the service, one request per group.

    Returns one composite-reward total per completion, in completion
    order. Each value is read straight off a ScoreResponse item.
    """
    if len(prompts) != len(completions):
        raise ValueError("prompts and completions must have equal length")
    if not completions:
        return []
    config = config or (client.config if client else AdapterConfig())
    owned = client is None
    client = client or RewardClient(config)
    try:
        rewards: list[float] = []
        size = config.group_size
        for start in range(0, len(completions), size):
            body = client.score_group(prompts[start:start + size],
                                      completions[start:start + size])
            for result in body["results"]:
                if result.get("error"):
                    raise RewardServiceError(
                        f"service reported item error: {result['error']}")
                rewards.append(float(result["breakdown"]["total"]))
        return rewards
    finally:
        if owned:
            client.close()
