"""Deterministic in-process mock backends.

Every mock is a pure function of its inputs plus a seed: two calls
with equal arguments return byte-identical results, which is what the
refinement-loop and caching tests rely on. The chat mock recognizes
which pipeline template it is being asked to answer (by markers in the
prompt text) and synthesizes a well-formed reply for it.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
import zlib
from typing import Optional, Sequence

from ..model import GenerationParams, ImageArtifact, VisualPrompt, split_tokens
from .base import ChatMessage, EmbeddingVector


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(struct.pack(">I", len(p)))
        h.update(p)
    return h.digest()


def _fraction(digest: bytes, salt: str) -> float:
    """Deterministic value in [0, 1] from a digest and a salt."""
    h = hashlib.sha256(digest + salt.encode()).digest()
    return int.from_bytes(h[:8], "big") / float(2 ** 64 - 1)


_ADJECTIVES = ["luminous", "weathered", "stark", "vivid", "muted",
               "sprawling", "delicate", "towering", "fractured", "serene"]


def _pick(digest: bytes, salt: str, options: list[str]) -> str:
    return options[int(_fraction(digest, salt) * len(options)) % len(options)]


class MockChatBackend:
    """Template-aware canned chat completions.

    With a `script`, replies are consumed from it in order regardless
    of input (for argmax / tie-break tests). Without one, replies are
    synthesized deterministically from a hash of the conversation.
    """

    def __init__(self, seed: int = 0, script: Optional[Sequence[str]] = None):
        self.seed = seed
        self._script = list(script) if script is not None else None
        self._script_pos = 0
        self._lock = threading.Lock()
        self.calls = 0

    def chat_complete(self, system: str, messages: Sequence[ChatMessage]) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        with self._lock:
            self.calls += 1
            if self._script is not None:
                reply = self._script[self._script_pos % len(self._script)]
                self._script_pos += 1
                return reply
        parts = [struct.pack(">q", self.seed), system.encode()]
        for m in messages:
            parts.append(m.role.encode())
            parts.append(m.text.encode())
            parts.extend(m.images)
        d = _digest(*parts)
        prompt = messages[-1].text
        if "Identify the Source (S), Target (T), and Meaning (M)" in prompt:
            return self._decompose_reply(prompt, d)
        if "expert in linguistics" in prompt:
            return self._score_reply(d)
        if "expert art critic" in prompt and "XML-style tags" in prompt:
            return self._analysis_xml_reply(prompt, d)
        if "expert art critic" in prompt and "'s_prime'" in prompt:
            return self._analysis_json_reply(prompt, d)
        if "'visual_description'" in prompt:
            return self._no_stm_reply(d)
        if "suggest a revised image generation prompt" in prompt:
            return self._refine_reply(prompt, d)
        return f"mock completion {d.hex()[:16]}"

    @staticmethod
    def _metaphor_words(prompt: str) -> list[str]:
        # Pull the quoted metaphor out of the request, if present.
        start = prompt.find('"')
        end = prompt.find('"', start + 1)
        if not (0 <= start < end):
            start = prompt.find("'")
            end = prompt.find("'", start + 1)
        text = prompt[start + 1:end] if 0 <= start < end else prompt
        words = [w for w in split_tokens(text) if w.isalpha()]
        content = [w for w in words if len(w) > 3]
        return content or words or ["thing"]

    def _decompose_reply(self, prompt: str, d: bytes) -> str:
        words = self._metaphor_words(prompt)
        source = words[-1].capitalize()
        target = words[0].capitalize()
        adj = _pick(d, "adj", _ADJECTIVES)
        meaning = f"{target} shares the essential qualities of {source.lower()}."
        visual = (f"A {adj} {source.lower()} rendered in rich detail, its form "
                  f"evoking {target.lower()}. Dramatic lighting, painterly "
                  f"composition, variant {d.hex()[:6]}.")
        return (f"<reasoning>The metaphor maps {source.lower()} onto "
                f"{target.lower()}.</reasoning>\n"
                f"<source>{source}</source>\n"
                f"<target>{target}</target>\n"
                f"<intended_meaning>{meaning}</intended_meaning>\n"
                f"<visual_prompt>{visual}</visual_prompt>")

    def _score_reply(self, d: bytes) -> str:
        score = round(0.5 + 0.5 * _fraction(d, "decomp_score"), 2)
        return (f"<decomposition_score>{score}</decomposition_score>\n"
                f"<explanation>The mapping is coherent overall.</explanation>")

    def _analysis_scores(self, d: bytes) -> tuple[float, float, float]:
        return (round(0.3 + 0.7 * _fraction(d, "s_presence"), 2),
                round(0.1 + 0.9 * _fraction(d, "t_presence"), 2),
                round(0.2 + 0.8 * _fraction(d, "m_align"), 2))

    def _perceived(self, prompt: str, d: bytes) -> tuple[str, str, str]:
        words = self._metaphor_words(prompt)
        adj = _pick(d, "perceived", _ADJECTIVES)
        s_p = f"A {adj} {words[-1].lower()} dominates the frame."
        t_p = f"The composition hints at {words[0].lower()} through color and light."
        m_p = f"The image suggests {words[0].lower()} resembles {words[-1].lower()}."
        return s_p, t_p, m_p

    def _analysis_xml_reply(self, prompt: str, d: bytes) -> str:
        s, t, m = self._analysis_scores(d)
        s_p, t_p, m_p = self._perceived(prompt, d)
        return (f"<s_prime>{s_p}</s_prime>\n"
                f"<t_prime>{t_p}</t_prime>\n"
                f"<m_prime>{m_p}</m_prime>\n"
                f"<s_presence_score>{s}</s_presence_score>\n"
                f"<t_presence_score>{t}</t_presence_score>\n"
                f"<meaning_alignment_score>{m}</meaning_alignment_score>")

    def _analysis_json_reply(self, prompt: str, d: bytes) -> str:
        s, t, m = self._analysis_scores(d)
        s_p, t_p, m_p = self._perceived(prompt, d)
        return json.dumps({
            "s_prime": s_p, "t_prime": t_p, "m_prime": m_p,
            "s_presence_score": s, "t_presence_score": t,
            "meaning_alignment_score": m,
        })

    def _no_stm_reply(self, d: bytes) -> str:
        score = round(_fraction(d, "alignment"), 2)
        return json.dumps({
            "visual_description": "A stylized scene with strong central focus.",
            "metaphorical_alignment": "The image gestures at the figurative sense.",
            "alignment_score": score,
        })

    def _refine_reply(self, prompt: str, d: bytes) -> str:
        words = self._metaphor_words(prompt)
        adj = _pick(d, "refine", _ADJECTIVES)
        return (f"A {adj} {words[-1].lower()} entwined with symbols of "
                f"{words[0].lower()}, atmospheric depth, refined framing, "
                f"variant {d.hex()[:6]}.")


def _mock_png(width: int, height: int, seed_bytes: bytes) -> bytes:
    """A real (tiny) grayscale PNG whose pixels repeat a digest."""
    def chunk(tag: bytes, body: bytes) -> bytes:
        return (struct.pack(">I", len(body)) + tag + body
                + struct.pack(">I", zlib.crc32(tag + body)))

    # Cap the encoded raster; callers only hash the bytes.
    w, h = min(width, 64), min(height, 64)
    pattern = (seed_bytes * (w // len(seed_bytes) + 1))[:w]
    raster = b"".join(b"\x00" + bytes((b + y) % 256 for b in pattern)
                      for y in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raster))
            + chunk(b"IEND", b""))


class MockImageBackend:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0
        self._lock = threading.Lock()

    def generate_image(self, prompt: VisualPrompt,
                       params: GenerationParams) -> ImageArtifact:
        if not prompt.text:
            raise ValueError("prompt text must be non-empty")
        with self._lock:
            self.calls += 1
        d = _digest(struct.pack(">q", self.seed),
                    prompt.text.encode(),
                    repr(params).encode())
        png = _mock_png(params.width, params.height, d)
        return ImageArtifact(bytes=png, params=params, prompt_text=prompt.text)


class MockEmbeddingBackend:
    """Hash-seeded unit vectors; per-token or pooled sequence level."""

    def __init__(self, seed: int = 0, dimension: int = 32,
                 per_token: bool = True):
        self.seed = seed
        self.dimension = dimension
        self._per_token = per_token
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def supports_per_token(self) -> bool:
        return self._per_token

    def _unit_vector(self, key: str) -> tuple[float, ...]:
        raw = hashlib.shake_256(f"{self.seed}:{key}".encode()).digest(
            2 * self.dimension)
        vals = [int.from_bytes(raw[2 * i:2 * i + 2], "big") - 32768
                for i in range(self.dimension)]
        norm = sum(v * v for v in vals) ** 0.5 or 1.0
        return tuple(v / norm for v in vals)

    def token_vector(self, token: str) -> tuple[float, ...]:
        return self._unit_vector(f"tok:{token}")

    def embed_text(self, text: str, per_token: bool = False) -> EmbeddingVector:
        if not text:
            raise ValueError("text must be non-empty")
        with self._lock:
            self.calls += 1
        tokens = split_tokens(text) or [text]
        if per_token:
            if not self._per_token:
                raise ValueError("per-token granularity disabled")
            return EmbeddingVector(
                values=tuple(self.token_vector(t) for t in tokens),
                modality="text", tokens=tuple(tokens))
        rows = [self.token_vector(t) for t in tokens]
        pooled = [sum(col) / len(rows) for col in zip(*rows)]
        norm = sum(v * v for v in pooled) ** 0.5 or 1.0
        return EmbeddingVector(values=(tuple(v / norm for v in pooled),),
                               modality="text")

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise ValueError("image payload must be non-empty")
        with self._lock:
            self.calls += 1
        key = "img:" + hashlib.sha256(image_bytes).hexdigest()
        return EmbeddingVector(values=(self._unit_vector(key),),
                               modality="image")
