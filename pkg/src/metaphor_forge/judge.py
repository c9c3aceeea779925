"""VLM judging of generated images.

Two critics: the with-STM path produces the perceived source / target
/ meaning plus three scores, and the no-STM path (for generators that
cannot emit text) produces a single alignment score. The with-STM
critic speaks either XML tags (used by the pipeline) or JSON (used
for zero-shot evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import prompts
from .backends.base import ChatBackend, ChatMessage
from .decomposer import ask_with_reask
from .model import Decomposition, ImageArtifact, Metaphor
from .parsing import (
    MissingKey,
    UnparsableScore,
    extract_json,
    parse_score,
    parse_tagged,
)


@dataclass(frozen=True)
class VlmAnalysis:
    s_prime: str
    t_prime: str
    m_prime: str
    s_presence: float
    t_presence: float
    m_align: float
    clamped: bool = False

    def __post_init__(self):
        for name in ("s_presence", "t_presence", "m_align"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("s_prime", "t_prime", "m_prime"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} must be non-empty")


@dataclass(frozen=True)
class NoStmAnalysis:
    visual_description: str
    metaphorical_alignment: str
    alignment_score: float
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alignment_score <= 1.0:
            raise ValueError("alignment_score must be in [0, 1]")


def _coerce_score(key: str, value) -> tuple[float, bool]:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise UnparsableScore(key, repr(value))
    return parse_score(key, str(value))


class VlmJudge:
    def __init__(self, vlm: ChatBackend, dialect: str = "xml"):
        if dialect not in ("xml", "json"):
            raise ValueError(f"unknown judge dialect {dialect!r}")
        self.vlm = vlm
        self.dialect = dialect

    def analyze_with_stm(self, image: ImageArtifact, metaphor: Metaphor,
                         d: Decomposition) -> VlmAnalysis:
        template = (prompts.VLM_ANALYSIS_XML_TEMPLATE if self.dialect == "xml"
                    else prompts.VLM_ANALYSIS_JSON_TEMPLATE)
        request = template.format(metaphor=metaphor.text, s=d.source,
                                  t=d.target, m=d.meaning)
        messages = [ChatMessage("user", request, images=(image.bytes,))]
        parse = (self._parse_xml_analysis if self.dialect == "xml"
                 else self._parse_json_analysis)
        analysis, _ = ask_with_reask(self.vlm, "", messages, parse)
        return analysis

    @staticmethod
    def _parse_xml_analysis(raw: str) -> VlmAnalysis:
        tags = parse_tagged(raw, prompts.ANALYSIS_TAGS)
        s, cs = parse_score("s_presence_score", tags["s_presence_score"])
        t, ct = parse_score("t_presence_score", tags["t_presence_score"])
        m, cm = parse_score("meaning_alignment_score",
                            tags["meaning_alignment_score"])
        return VlmAnalysis(s_prime=tags["s_prime"], t_prime=tags["t_prime"],
                           m_prime=tags["m_prime"], s_presence=s,
                           t_presence=t, m_align=m, clamped=cs or ct or cm)

    @staticmethod
    def _parse_json_analysis(raw: str) -> VlmAnalysis:
        obj = extract_json(raw)
        for key in prompts.WITH_STM_KEYS:
            if key not in obj:
                raise MissingKey(key)
        s, cs = _coerce_score("s_presence_score", obj["s_presence_score"])
        t, ct = _coerce_score("t_presence_score", obj["t_presence_score"])
        m, cm = _coerce_score("meaning_alignment_score",
                              obj["meaning_alignment_score"])
        return VlmAnalysis(s_prime=str(obj["s_prime"]),
                           t_prime=str(obj["t_prime"]),
                           m_prime=str(obj["m_prime"]),
                           s_presence=s, t_presence=t, m_align=m,
                           clamped=cs or ct or cm)

    def analyze_without_stm(self, image: ImageArtifact,
                            metaphor: Metaphor) -> NoStmAnalysis:
        request = prompts.VLM_NO_STM_TEMPLATE.format(metaphor=metaphor.text)
        messages = [ChatMessage("user", request, images=(image.bytes,))]

        def parse(raw: str) -> NoStmAnalysis:
            obj = extract_json(raw)
            for key in prompts.NO_STM_KEYS:
                if key not in obj:
                    raise MissingKey(key)
            score, clamped = _coerce_score("alignment_score",
                                           obj["alignment_score"])
            return NoStmAnalysis(
                visual_description=str(obj["visual_description"]),
                metaphorical_alignment=str(obj["metaphorical_alignment"]),
                alignment_score=score, clamped=clamped)

        analysis, _ = ask_with_reask(self.vlm, "", messages, parse)
        return analysis
