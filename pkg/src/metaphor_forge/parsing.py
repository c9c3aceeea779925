"""Structured-output parsing: XML-style tag blocks and embedded JSON.

Model replies arrive wrapped in arbitrary prose, code fences, and
whitespace; these parsers pull out just the structured part and fail
with typed errors, never exceptions from the regex or json machinery.
"""

from __future__ import annotations

import json
import re
from typing import Iterable, Mapping


class ParseError(ValueError):
    """Base class for reply-parsing failures."""


class MissingTag(ParseError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"required tag <{tag}> not found")


class MalformedTag(ParseError):
    def __init__(self, tag: str, reason: str):
        self.tag = tag
        super().__init__(f"malformed tag <{tag}>: {reason}")


class UnparsableScore(ParseError):
    def __init__(self, tag: str, content: str):
        self.tag = tag
        super().__init__(f"<{tag}> holds non-numeric content {content!r}")


class UnparsableJson(ParseError):
    pass


class MissingKey(ParseError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"required JSON key {key!r} not found")


def parse_tagged(raw: str, required: Iterable[str]) -> dict[str, str]:
    """Extract `<tag>content</tag>` pairs from a raw completion.

    The first occurrence of each tag wins; content is trimmed.
    Surrounding prose and code fences are ignored. An opening tag
    without a matching closing tag, or the same tag nested inside its
    own content, is rejected.
    """
    required = list(required)
    if not required:
        raise ValueError("required tag set must be non-empty")
    out: dict[str, str] = {}
    for tag in required:
        open_tag, close_tag = f"<{tag}>", f"</{tag}>"
        start = raw.find(open_tag)
        if start < 0:
            raise MissingTag(tag)
        end = raw.find(close_tag, start + len(open_tag))
        if end < 0:
            raise MalformedTag(tag, "opening tag without closing tag")
        content = raw[start + len(open_tag):end]
        if open_tag in content:
            raise MalformedTag(tag, "nested identical tag")
        out[tag] = content.strip()
    return out


def render_tagged(mapping: Mapping[str, str]) -> str:
    """Inverse of parse_tagged for contents free of angle-bracket tags."""
    return "\n".join(f"<{k}>{v}</{k}>" for k, v in mapping.items())


_NUMBER_RE = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


def parse_score(tag: str, content: str) -> tuple[float, bool]:
    """Parse a [0, 1] score from tag content.

    Returns (score, clamped). Out-of-range values are clamped rather
    than rejected so flaky judges still yield a bounded signal.
    """
    m = _NUMBER_RE.fullmatch(content.strip())
    if not m:
        raise UnparsableScore(tag, content)
    value = float(m.group())
    clamped = not 0.0 <= value <= 1.0
    return min(1.0, max(0.0, value)), clamped


def extract_json(raw: str) -> dict:
    """Parse the first balanced top-level JSON object in a reply.

    Prefix noise (prose, ```json fences) and trailing text are
    ignored; string contents containing braces are handled.
    """
    start = raw.find("{")
    while start >= 0:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(raw)):
            c = raw[i]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
                continue
            if c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    candidate = raw[start:i + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = raw.find("{", start + 1)
    raise UnparsableJson(f"no balanced JSON object in reply: {raw[:80]!r}")
