"""OpenAI-compatible HTTP clients for the four model roles.

Wire shapes:
  chat        POST {base_url}/v1/chat/completions
  images      POST {base_url}/v1/images/generations  (base64 PNG out)
  embeddings  POST {base_url}/v1/embeddings          (+ `granularity` extension)

Every client retries transient failures (5xx, timeouts, connection
errors) with exponential backoff, fails fast on 4xx, and caps its own
in-flight requests with a semaphore so a single-GPU server is never
flooded.
"""

from __future__ import annotations

import base64
import binascii
import threading
import time
from typing import Callable, Optional, Sequence

import httpx

from ..model import GenerationParams, ImageArtifact, VisualPrompt
from .base import BackendConfig, ChatMessage, EmbeddingVector
from .errors import (
    BackendTimeout,
    ExhaustedRetries,
    HttpStatusError,
    PayloadDecode,
)

Sleeper = Callable[[float], None]


class _HttpClient:
    def __init__(self, config: BackendConfig,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Sleeper = time.sleep):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.max_concurrency)
        self._sleep = sleep
        headers = {}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url,
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )
        self.retry_count = 0  # cumulative, for tests and diagnostics

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        attempts = self.config.max_retries + 1
        last: Exception = RuntimeError("unreachable")
        with self._gate:
            for attempt in range(attempts):
                if attempt > 0:
                    self._sleep(self.config.retry_backoff * 2 ** (attempt - 1))
                    self.retry_count += 1
                try:
                    resp = self._client.post(path, json=payload)
                except httpx.TimeoutException as e:
                    last = BackendTimeout(str(e))
                    continue
                except httpx.TransportError as e:
                    last = BackendTimeout(f"transport failure: {e}")
                    continue
                if resp.status_code >= 400:
                    err = HttpStatusError(resp.status_code, resp.text[:200])
                    if not err.retryable:
                        raise err
                    last = err
                    continue
                try:
                    return resp.json()
                except ValueError as e:
                    raise PayloadDecode(f"non-JSON response: {e}") from e
        raise ExhaustedRetries(attempts, last)


class HttpChatBackend(_HttpClient):
    """Chat LLM / VLM client. Images travel base64-embedded in the
    message content, OpenAI vision style."""

    def chat_complete(self, system: str, messages: Sequence[ChatMessage]) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        wire = []
        if system:
            wire.append({"role": "system", "content": system})
        for m in messages:
            if m.images:
                content = [{"type": "text", "text": m.text}]
                for img in m.images:
                    b64 = base64.b64encode(img).decode("ascii")
                    content.append({
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{b64}"},
                    })
                wire.append({"role": m.role, "content": content})
            else:
                wire.append({"role": m.role, "content": m.text})
        payload = {"model": self.config.model_name, "messages": wire}
        if self.config.temperature is not None:
            payload["temperature"] = self.config.temperature
        data = self._post("/v1/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise PayloadDecode(f"unexpected chat response shape: {e}") from e


class HttpImageBackend(_HttpClient):
    def generate_image(self, prompt: VisualPrompt,
                       params: GenerationParams) -> ImageArtifact:
        if not prompt.text:
            raise ValueError("prompt text must be non-empty")
        payload = {
            "model": self.config.model_name,
            "prompt": prompt.text,
            "size": f"{params.width}x{params.height}",
            "guidance_scale": params.guidance_scale,
            "num_inference_steps": params.inference_steps,
            "response_format": "b64_json",
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        data = self._post("/v1/images/generations", payload)
        try:
            b64 = data["data"][0]["b64_json"]
            raw = base64.b64decode(b64, validate=True)
        except (KeyError, IndexError, TypeError, binascii.Error) as e:
            raise PayloadDecode(f"no image payload in response: {e}") from e
        if not raw:
            raise PayloadDecode("empty image payload")
        return ImageArtifact(bytes=raw, params=params, prompt_text=prompt.text)


class HttpEmbeddingBackend(_HttpClient):
    @property
    def supports_per_token(self) -> bool:
        return self.config.per_token_embeddings

    def _embed(self, input_value, modality: str, per_token: bool) -> EmbeddingVector:
        payload = {
            "model": self.config.model_name,
            "input": input_value,
            "granularity": "token" if per_token else "sequence",
        }
        data = self._post("/v1/embeddings", payload)
        try:
            rows = [tuple(item["embedding"]) for item in data["data"]]
        except (KeyError, TypeError) as e:
            raise PayloadDecode(f"unexpected embeddings shape: {e}") from e
        tokens = None
        if per_token:
            tokens = tuple(item.get("token", "") for item in data["data"])
        return EmbeddingVector(values=tuple(rows), modality=modality, tokens=tokens)

    def embed_text(self, text: str, per_token: bool = False) -> EmbeddingVector:
        if not text:
            raise ValueError("text must be non-empty")
        return self._embed(text, "text", per_token)

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise ValueError("image payload must be non-empty")
        b64 = base64.b64encode(image_bytes).decode("ascii")
        return self._embed({"image_b64": b64}, "image", per_token=False)
