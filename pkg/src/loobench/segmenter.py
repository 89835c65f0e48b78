"""Rule-based sentence segmentation.

A boundary is terminal punctuation (. ! ?) followed by whitespace and a
capital letter, unless the word ending in "." is a known abbreviation
(stop-list shipped as a data file). Deterministic by construction; no
NLP dependency.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .models import Sentence

_BOUNDARY = re.compile(r"([.!?]+)(\s+)")
_TRAILING_WORD = re.compile(r"([A-Za-z][A-Za-z.]*\.)$")


@lru_cache(maxsize=1)
def abbreviation_stoplist() -> frozenset[str]:
    text = resources.files("loobench.data").joinpath("abbreviations.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def _is_abbreviation(prefix: str) -> bool:
    match = _TRAILING_WORD.search(prefix)
    return bool(match) and match.group(1).lower() in abbreviation_stoplist()


def segment_sentences(body: str) -> list[Sentence]:
    """Split `body` into 1-indexed sentences.

    Whitespace between sentences is dropped; every non-whitespace character
    of the body survives in exactly one sentence.
    """
    breaks: list[int] = []
    for match in _BOUNDARY.finditer(body):
        after = match.end()
        if after >= len(body) or not body[after].isupper():
            continue
        prefix = body[: match.end(1)]
        if match.group(1).endswith(".") and _is_abbreviation(prefix):
            continue
        breaks.append(match.end(1))

    pieces: list[str] = []
    start = 0
    for cut in breaks:
        pieces.append(body[start:cut])
        start = cut
    pieces.append(body[start:])

    sentences = [p.strip() for p in pieces if p.strip()]
    return [Sentence(index=i, text=text) for i, text in enumerate(sentences, start=1)]
