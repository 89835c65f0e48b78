"""Parsers for structured LLM output: judgment tags, citations, lenient JSON.

All functions here are pure and thread-safe.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import (
    AmbiguousCitationError,
    InvalidOutcomeError,
    MalformedTagError,
    MissingTagError,
    ParseError,
    SchemaError,
)

# Citation surfaces recognized by default: "fact N", "(N)", "[N]".
DEFAULT_CITATION_PATTERNS = (
    r"\bfact\s*#?\s*(\d+)\b",
    r"\((\d+)\)",
    r"\[(\d+)\]",
)

NO_CITATION_PHRASE = "no citation"


@dataclass(frozen=True)
class TagSpec:
    """A named judgment tag and the outcomes its content may take."""

    tag_name: str
    allowed_outcomes: tuple[str, ...]

    def __post_init__(self):
        if not self.tag_name or not all(c.isalnum() or c == "_" for c in self.tag_name):
            raise SchemaError(f"tag_name {self.tag_name!r} must be alphanumeric/underscore")
        if not self.allowed_outcomes:
            raise SchemaError("allowed_outcomes is empty")
        lowered = [o.lower() for o in self.allowed_outcomes]
        if len(lowered) != len(set(lowered)):
            raise SchemaError("allowed_outcomes contains case-insensitive duplicates")


def extract_tag(response_text: str, spec: TagSpec) -> str:
    """Return the canonical outcome from the last `<tag>...</tag>` span.

    Text outside the tags (chain-of-thought) is ignored. When the tag is
    repeated, the final occurrence is authoritative. Content is matched
    case-insensitively against the allowed outcomes and returned in the
    spec's canonical casing.
    """
    tag = re.escape(spec.tag_name)
    opens = len(re.findall(rf"<{tag}>", response_text, re.IGNORECASE))
    closes = len(re.findall(rf"</{tag}>", response_text, re.IGNORECASE))
    if opens == 0 and closes == 0:
        raise MissingTagError(f"no <{spec.tag_name}> tag in response")
    if opens != closes:
        raise MalformedTagError(
            f"unbalanced <{spec.tag_name}> tags ({opens} open, {closes} close)"
        )
    spans = re.findall(rf"<{tag}>(.*?)</{tag}>", response_text, re.IGNORECASE | re.DOTALL)
    if not spans:
        raise MalformedTagError(f"<{spec.tag_name}> tags present but never paired")
    content = spans[-1].strip()
    by_lower = {o.lower(): o for o in spec.allowed_outcomes}
    canonical = by_lower.get(content.lower())
    if canonical is None:
        raise InvalidOutcomeError(
            f"tag content {content!r} not among allowed outcomes "
            f"{list(spec.allowed_outcomes)}",
            raw_content=content,
        )
    return canonical


def parse_citation(
    response_text: str, patterns: tuple[str, ...] = DEFAULT_CITATION_PATTERNS
) -> int | None:
    """Extract the single cited context index, or None.

    The phrase "no citation" (any casing) short-circuits to None. Otherwise
    the distinct integers appearing inside any citation pattern are
    collected; exactly one is the citation, zero means None, and two or
    more distinct values are an error (prompts allow one citation at most).
    """
    if NO_CITATION_PHRASE in response_text.lower():
        return None
    cited: set[int] = set()
    for pattern in patterns:
        for match in re.finditer(pattern, response_text, re.IGNORECASE):
            cited.add(int(match.group(1)))
    if not cited:
        return None
    if len(cited) > 1:
        raise AmbiguousCitationError(
            f"multiple distinct citations {sorted(cited)} in response"
        )
    return cited.pop()


_CODE_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*$|^```\s*$", re.MULTILINE)


def parse_lenient_json(text: str) -> object:
    """Parse a JSON object out of an LLM response.

    Strips Markdown code fences, then falls back to the outermost
    `{...}` or `[...]` slice when leading/trailing prose is present.
    """
    stripped = _CODE_FENCE.sub("", text).strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        pass
    for open_ch, close_ch in (("{", "}"), ("[", "]")):
        start = stripped.find(open_ch)
        end = stripped.rfind(close_ch)
        if start != -1 and end > start:
            try:
                return json.loads(stripped[start : end + 1])
            except json.JSONDecodeError:
                continue
    raise ParseError(f"response is not parseable JSON: {text[:200]!r}")
