"""Diversity curation of QA pairs.

Two passes, both order-preserving: a keyword pass dropping pairs whose
TF-IDF uniqueness falls below a threshold of the observed range, then a
greedy semantic pass keeping pairs whose embedding stays a minimum cosine
distance from everything already kept.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .models import QAPair

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class FilterConfig:
    keyword_threshold: float = 0.3
    semantic_threshold: float = 0.3
    apply_keyword: bool = True
    apply_semantic: bool = True

    def __post_init__(self):
        for name in ("keyword_threshold", "semantic_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def pair_text(pair: QAPair) -> str:
    return f"{pair.question} {pair.answer}"


def tfidf_vectors(pairs: Sequence[QAPair]) -> list[dict[str, float]]:
    """L2-normalized tf-idf weights over a shared vocabulary.

    tf is the raw in-document count; idf(t) = ln((1+N)/(1+df(t))) + 1.
    """
    if not pairs:
        raise ValidationError("tfidf_vectors requires at least one pair")
    docs = [_tokenize(pair_text(p)) for p in pairs]
    df: dict[str, int] = {}
    for tokens in docs:
        for token in set(tokens):
            df[token] = df.get(token, 0) + 1
    if not df:
        raise ValidationError("empty vocabulary: no tokens in any pair")
    n = len(docs)
    idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
    vectors: list[dict[str, float]] = []
    for tokens in docs:
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        weights = {t: c * idf[t] for t, c in counts.items()}
        norm = math.sqrt(sum(w * w for w in weights.values()))
        vectors.append({t: w / norm for t, w in weights.items()} if norm else {})
    return vectors


def sparse_cosine(u: dict[str, float], v: dict[str, float]) -> float:
    if len(v) < len(u):
        u, v = v, u
    return sum(w * v[t] for t, w in u.items() if t in v)


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise ValidationError(f"dimension mismatch: {len(u)} vs {len(v)}")
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine similarity undefined for zero vector")
    return sum(x * y for x, y in zip(u, v)) / (nu * nv)


def cosine_distance(u: Sequence[float], v: Sequence[float]) -> float:
    """1 minus cosine similarity; 0 for identical directions, 2 for opposite."""
    return 1.0 - cosine_similarity(u, v)


def keyword_uniqueness(pairs: Sequence[QAPair]) -> list[float]:
    """Per-pair uniqueness: 1 minus the highest tf-idf cosine to any other
    pair. A lone pair is maximally unique."""
    if len(pairs) == 1:
        return [1.0]
    vectors = tfidf_vectors(pairs)
    scores: list[float] = []
    for i, u in enumerate(vectors):
        best = max(sparse_cosine(u, v) for j, v in enumerate(vectors) if j != i)
        scores.append(1.0 - best)
    return scores


def keyword_filter(pairs: Sequence[QAPair], threshold: float) -> list[QAPair]:
    """Keep pairs whose uniqueness clears `threshold` of the score range.

    Cutoff is min + threshold * (max - min); a degenerate range (all scores
    equal) keeps everything rather than eliminating a uniform corpus.
    """
    if not pairs:
        raise ValidationError("keyword_filter requires at least one pair")
    scores = keyword_uniqueness(pairs)
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return list(pairs)
    cutoff = lo + threshold * (hi - lo)
    return [p for p, s in zip(pairs, scores) if s >= cutoff]


def semantic_filter(
    pairs: Sequence[QAPair],
    embeddings: Sequence[Sequence[float]],
    threshold: float,
) -> list[QAPair]:
    """Greedy pass in input order: keep a pair iff its cosine distance to
    every already-kept pair is at least `threshold`."""
    if len(pairs) != len(embeddings):
        raise ValidationError(
            f"{len(pairs)} pairs but {len(embeddings)} embeddings"
        )
    dims = {len(e) for e in embeddings}
    if len(dims) > 1:
        raise ValidationError(f"embedding dimensions differ: {sorted(dims)}")
    kept: list[QAPair] = []
    kept_vecs: list[Sequence[float]] = []
    for pair, vec in zip(pairs, embeddings):
        if all(cosine_distance(vec, kv) >= threshold for kv in kept_vecs):
            kept.append(pair)
            kept_vecs.append(vec)
    return kept


def apply_filters(
    pairs: Sequence[QAPair],
    config: FilterConfig,
    embeddings: Sequence[Sequence[float]] | None = None,
) -> list[QAPair]:
    """Keyword pass first, then semantic; embeddings follow their pairs."""
    retained = list(pairs)
    vectors = list(embeddings) if embeddings is not None else None
    if config.apply_keyword:
        kept = keyword_filter(retained, config.keyword_threshold)
        if vectors is not None:
            kept_ids = {p.pair_id for p in kept}
            vectors = [v for p, v in zip(retained, vectors) if p.pair_id in kept_ids]
        retained = kept
    if config.apply_semantic:
        if vectors is None:
            raise ValidationError("semantic filtering requires embeddings")
        retained = semantic_filter(retained, vectors, config.semantic_threshold)
    return retained
