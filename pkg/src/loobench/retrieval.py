"""Context construction for leave-one-out experiments.

Every strategy sees only the knowledge base with the held-out pair already
removed; nothing a strategy does can leak the answer back in. Strategies
are looked up by kind in a registry, so custom ones plug in beside the
four built-ins.
"""

from __future__ import annotations

from typing import Callable, Sequence

from . import prompts
from .errors import ShortfallError, ValidationError
from .filtering import cosine_similarity
from .gateway import ChatRequest, LlmClient
from .models import ContextItem, QAPair, RetrievalStrategy
from .parsing import parse_lenient_json

# builder(held_out, remaining, strategy, client) -> chosen pairs, in context order
StrategyBuilder = Callable[
    [QAPair, list[QAPair], RetrievalStrategy, "LlmClient | None"], list[QAPair]
]

_REGISTRY: dict[str, StrategyBuilder] = {}


def register_strategy(kind: str, builder: StrategyBuilder) -> None:
    _REGISTRY[kind] = builder


def strategy_kinds() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def pair_embedding_text(pair: QAPair) -> str:
    return f"Q: {pair.question}\nA: {pair.answer}"


def ensure_embeddings(pairs: Sequence[QAPair], client: LlmClient) -> list[QAPair]:
    """Attach embeddings of the rendered Q/A text to pairs missing one."""
    missing = [p for p in pairs if p.embedding is None]
    if not missing:
        return list(pairs)
    vectors = client.embed([pair_embedding_text(p) for p in missing])
    by_id = {p.pair_id: v for p, v in zip(missing, vectors)}
    return [
        p if p.embedding is not None else p.with_embedding(by_id[p.pair_id])
        for p in pairs
    ]


def _require_embeddings(pairs: Sequence[QAPair], kind: str) -> None:
    lacking = [p.pair_id for p in pairs if p.embedding is None]
    if lacking:
        raise ValidationError(
            f"{kind} requires embeddings; pairs missing them: {lacking}"
        )


def top_k_by_similarity(
    query_vector: Sequence[float], pairs: Sequence[QAPair], k: int
) -> list[QAPair]:
    """Highest-cosine pairs first; ties broken by lower pair_id. Fewer than
    k candidates means all of them."""
    scored = [
        (cosine_similarity(query_vector, p.embedding), p) for p in pairs
    ]
    scored.sort(key=lambda sp: (-sp[0], sp[1].pair_id))
    return [p for _, p in scored[: min(k, len(scored))]]


def hyde_query_vector(
    question: str, client: LlmClient, count: int = 3
) -> list[float]:
    """Query vector from hypothetical answers.

    Generates `count` hypothetical answers, embeds each independently, and
    returns their component-wise mean. The mean is not re-normalized:
    cosine ranking is invariant under positive scaling.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    system = f"{prompts.hyde_system_prompt(count)}\n\n{prompts.HYDE_JSON_SUFFIX}"
    response = client.chat(ChatRequest(system_prompt=system, user_message=question))
    parsed = parse_lenient_json(response)
    answers: list[str] = []
    if isinstance(parsed, dict) and isinstance(parsed.get("answers"), list):
        answers = [str(a).strip() for a in parsed["answers"] if str(a).strip()]
    if len(answers) < count:
        raise ShortfallError(
            f"requested {count} hypothetical answers, parsed {len(answers)}",
            got=len(answers),
            wanted=count,
        )
    vectors = client.embed(answers[:count])
    dim = len(vectors[0])
    return [sum(v[i] for v in vectors) / count for i in range(dim)]


def mean_vector(vectors: Sequence[Sequence[float]]) -> list[float]:
    dim = len(vectors[0])
    return [sum(v[i] for v in vectors) / len(vectors) for i in range(dim)]


def _build_direct(held_out, remaining, strategy, client):
    return []


def _build_long_in_context(held_out, remaining, strategy, client):
    return sorted(remaining, key=lambda p: p.pair_id)


def _build_basic_rag(held_out, remaining, strategy, client):
    _require_embeddings(remaining, "basic_rag")
    if client is None:
        raise ValidationError("basic_rag requires a client to embed the question")
    query = client.embed([held_out.question])[0]
    return top_k_by_similarity(query, remaining, strategy.k)


def _build_hyde_rag(held_out, remaining, strategy, client):
    _require_embeddings(remaining, "hyde_rag")
    if client is None:
        raise ValidationError("hyde_rag requires a client for hypothetical answers")
    query = hyde_query_vector(held_out.question, client, strategy.hyde_answer_count)
    return top_k_by_similarity(query, remaining, strategy.k)


register_strategy("direct", _build_direct)
register_strategy("long_in_context", _build_long_in_context)
register_strategy("basic_rag", _build_basic_rag)
register_strategy("hyde_rag", _build_hyde_rag)


def build_context(
    question_id: int,
    pairs: Sequence[QAPair],
    strategy: RetrievalStrategy,
    client: LlmClient | None = None,
) -> list[ContextItem]:
    """Context for the question of pair `question_id`, drawn exclusively
    from the knowledge base with that pair removed."""
    held_out = next((p for p in pairs if p.pair_id == question_id), None)
    if held_out is None:
        raise ValidationError(f"pair {question_id} not in knowledge base")
    if strategy.kind not in _REGISTRY:
        raise ValidationError(f"unknown retrieval strategy {strategy.kind!r}")
    remaining = [p for p in pairs if p.pair_id != question_id]
    if strategy.kind != "direct" and not remaining:
        raise ValidationError("knowledge base needs at least 2 pairs for retrieval")
    chosen = _REGISTRY[strategy.kind](held_out, remaining, strategy, client)
    if any(p.pair_id == question_id for p in chosen):
        raise ValidationError(
            f"strategy {strategy.kind} leaked the held-out pair {question_id}"
        )
    return [
        ContextItem(
            context_index=i,
            pair_id=p.pair_id,
            question=p.question,
            answer=p.answer,
        )
        for i, p in enumerate(chosen, start=1)
    ]
