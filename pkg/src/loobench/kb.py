"""Knowledge-base construction: source text to facts to grounded QA pairs.

With mock clients everything here is a pure function of (document, configs,
seed): batches, ids, and orderings are all deterministic.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import prompts
from .errors import (
    EmptyExtractionError,
    EmptyFieldError,
    GenerationParseError,
    GroundingError,
    ParseError,
    ShortfallError,
    ValidationError,
)
from .gateway import ChatRequest, LlmClient
from .models import NO_FACT, AtomicFact, FactList, QAPair, QASet, Sentence, SourceDocument
from .parsing import parse_lenient_json
from .segmenter import segment_sentences
from .store import Artifact, ArtifactStore


@dataclass(frozen=True)
class FactExtractionConfig:
    prompt_identifier: str = prompts.FACT_EXTRACTION_PROMPT_ID
    prompt_text: str = prompts.FACT_EXTRACTION_PROMPT
    batch_size: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


@dataclass(frozen=True)
class QAGenConfig:
    prompt_identifier: str = prompts.QA_GENERATION_PROMPT_ID
    prompt_text: str = prompts.QA_GENERATION_PROMPT

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise ValidationError("prompt_text is empty")


def fan_out(fn, items: Sequence, max_workers: int) -> list:
    """Run `fn` over `items`, results in input order."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def build_source_document(
    title: str,
    body: str,
    store: ArtifactStore,
    metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    doc = SourceDocument(title=title, body=body, sentences=tuple(segment_sentences(body)))
    header = store.new_header(
        "source_document", (), {"title": title, **(metadata or {})}, artifact_id=artifact_id
    )
    return Artifact(header=header, payload=doc)


def _batched(seq: Sequence, size: int):
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def _coerce_sentence_index(value) -> int:
    # Responses occasionally cite several sentences; the first one wins.
    if isinstance(value, list) and value:
        value = value[0]
    return int(value)


def extract_facts(
    document: Artifact,
    config: FactExtractionConfig,
    client: LlmClient,
    store: ArtifactStore,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """One LLM pass per sentence batch, yielding a grounded fact list.

    Every fact must cite a sentence index present in the document;
    responses citing unknown indices fail the whole extraction.
    """
    doc: SourceDocument = document.payload
    if not doc.sentences:
        raise ValidationError("document has no sentences")
    system = f"{config.prompt_text}\n\n{prompts.FACT_JSON_SUFFIX}"
    raw_facts: list[tuple[str, int]] = []
    for batch in _batched(doc.sentences, config.batch_size):
        message = prompts.render_fact_extraction_message(batch)
        response = client.chat(ChatRequest(system_prompt=system, user_message=message))
        parsed = parse_lenient_json(response)
        if not isinstance(parsed, dict) or not isinstance(parsed.get("facts"), list):
            raise ParseError(f"fact extraction response lacks a facts list: {response[:200]!r}")
        for item in parsed["facts"]:
            try:
                raw_facts.append((str(item["text"]), _coerce_sentence_index(item["source_sentence"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed fact entry {item!r}") from exc
    if not raw_facts:
        raise EmptyExtractionError("extraction produced no facts")
    known = {s.index for s in doc.sentences}
    offenders = [(text, idx) for text, idx in raw_facts if idx not in known]
    if offenders:
        listing = "; ".join(f"{t!r} -> sentence {i}" for t, i in offenders)
        raise GroundingError(f"facts cite unknown sentences: {listing}")
    facts = tuple(
        AtomicFact(fact_id=i, text=text, source_sentence=idx)
        for i, (text, idx) in enumerate(raw_facts, start=1)
    )
    header = store.new_header(
        "fact_list",
        (document.header.artifact_id,),
        {
            "prompt_identifier": config.prompt_identifier,
            "model": client.config.model,
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=FactList(facts=facts))


def generate_qa(fact: AtomicFact, config: QAGenConfig, client: LlmClient) -> QAPair:
    """One grounded question/answer pair for a single fact."""
    system = f"{config.prompt_text}\n\n{prompts.QA_JSON_SUFFIX}"
    message = prompts.render_qa_generation_message(fact.text)
    response = client.chat(ChatRequest(system_prompt=system, user_message=message))
    try:
        parsed = parse_lenient_json(response)
    except ParseError as exc:
        raise GenerationParseError(str(exc)) from exc
    if not isinstance(parsed, dict) or "question" not in parsed or "answer" not in parsed:
        raise GenerationParseError(
            f"expected question/answer object, got {response[:200]!r}"
        )
    question = str(parsed["question"]).strip()
    answer = str(parsed["answer"]).strip()
    if not question or not answer:
        raise EmptyFieldError(f"empty question or answer for fact {fact.fact_id}")
    return QAPair(
        pair_id=fact.fact_id,
        question=question,
        answer=answer,
        source_fact_id=fact.fact_id,
    )


def generate_qa_set(
    fact_list: Artifact,
    config: QAGenConfig,
    client: LlmClient,
    store: ArtifactStore,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """One QAPair per fact; pair order follows fact_id regardless of how
    concurrent generation completes."""
    facts = fact_list.payload.facts
    pairs = fan_out(
        lambda f: generate_qa(f, config, client), facts, client.config.max_inflight
    )
    header = store.new_header(
        "qa_set",
        (fact_list.header.artifact_id,),
        {
            "prompt_identifier": config.prompt_identifier,
            "model": client.config.model,
            "ground_truth": "present",
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=QASet(pairs=tuple(pairs)))


def generate_synthetic_queries(topic: str, n: int, client: LlmClient) -> list[str]:
    """Topic-related questions with no associated answers."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    system = f"{prompts.SYNTHETIC_QUERY_PROMPT}\n\n{prompts.SYNTHETIC_JSON_SUFFIX}"
    message = prompts.render_synthetic_query_message(topic, n)
    response = client.chat(ChatRequest(system_prompt=system, user_message=message))
    parsed = parse_lenient_json(response)
    questions: list[str] = []
    if isinstance(parsed, dict) and isinstance(parsed.get("questions"), list):
        questions = [str(q).strip() for q in parsed["questions"] if str(q).strip()]
    if len(questions) < n:
        raise ShortfallError(
            f"requested {n} synthetic questions, parsed {len(questions)}",
            got=len(questions),
            wanted=n,
        )
    return questions[:n]


def synthetic_qa_set(
    topic: str,
    n: int,
    client: LlmClient,
    store: ArtifactStore,
    upstream_id: str,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """Package synthetic queries as a qa_set that downstream evaluation will
    refuse to judge for abstention/factuality (no ground truth exists)."""
    questions = generate_synthetic_queries(topic, n, client)
    pairs = tuple(
        QAPair(pair_id=i, question=q, answer="", source_fact_id=NO_FACT)
        for i, q in enumerate(questions, start=1)
    )
    header = store.new_header(
        "qa_set",
        (upstream_id,),
        {
            "prompt_identifier": prompts.SYNTHETIC_QUERY_PROMPT_ID,
            "model": client.config.model,
            "ground_truth": "absent",
            "topic": topic,
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=QASet(pairs=pairs))


def load_faq_entries(path: str | Path) -> list[tuple[str, str]]:
    """Read a JSON-lines FAQ file: one {"question", "answer"} object per line."""
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            entries.append((str(obj["question"]).strip(), str(obj["answer"]).strip()))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: not a question/answer object") from exc
    if not entries:
        raise ValidationError(f"{path}: no FAQ entries found")
    return entries


def ingest_faq(
    title: str,
    path: str | Path,
    store: ArtifactStore,
    metadata: dict[str, Any] | None = None,
) -> tuple[Artifact, Artifact, Artifact]:
    """Direct FAQ ingestion: existing QA pairs bypass LLM extraction.

    Each entry becomes one source sentence, one fact, and one QA pair, so
    FAQ-derived stores carry the same lineage shape as extracted ones.
    """
    entries = load_faq_entries(path)
    lines = [f"Q: {q} A: {a}" for q, a in entries]
    doc = SourceDocument(
        title=title,
        body="\n".join(lines),
        sentences=tuple(Sentence(index=i, text=line) for i, line in enumerate(lines, 1)),
    )
    doc_header = store.new_header("source_document", (), {"title": title, **(metadata or {})})
    doc_artifact = Artifact(header=doc_header, payload=doc)

    facts = tuple(
        AtomicFact(fact_id=i, text=f"{q} {a}", source_sentence=i)
        for i, (q, a) in enumerate(entries, 1)
    )
    fact_header = store.new_header(
        "fact_list",
        (doc_header.artifact_id,),
        {"prompt_identifier": "direct_faq", "model": "none", **(metadata or {})},
    )
    fact_artifact = Artifact(header=fact_header, payload=FactList(facts=facts))

    pairs = tuple(
        QAPair(pair_id=i, question=q, answer=a, source_fact_id=i)
        for i, (q, a) in enumerate(entries, 1)
    )
    qa_header = store.new_header(
        "qa_set",
        (fact_header.artifact_id,),
        {
            "prompt_identifier": "direct_faq",
            "model": "none",
            "ground_truth": "present",
            **(metadata or {}),
        },
    )
    qa_artifact = Artifact(header=qa_header, payload=QASet(pairs=pairs))
    return doc_artifact, fact_artifact, qa_artifact
