"""Shared fixtures: deterministic stores and a hand-built demo artifact
chain (source -> facts -> qa_set -> experiment -> evaluation)."""

from __future__ import annotations

import itertools

import pytest

from loobench import models
from loobench.store import Artifact, ArtifactStore

FIXED_CLOCK = "2025-01-01T00:00:00Z"


def make_store(root, counter_start: int = 0) -> ArtifactStore:
    counter = itertools.count(counter_start)
    return ArtifactStore(
        root,
        clock=lambda: FIXED_CLOCK,
        id_factory=lambda: f"{next(counter):032x}",
    )


@pytest.fixture
def store(tmp_path) -> ArtifactStore:
    return make_store(tmp_path / "store")


DEMO_SENTENCES = (
    "The botanic garden opens at six in the morning.",
    "Entry to the garden is free for children under twelve.",
    "The north gate closes at midnight on weekends.",
    "Guided heritage tours run every Saturday afternoon.",
)

DEMO_QA = (
    ("What time does the botanic garden open?", "Six in the morning."),
    ("Who enters the garden for free?", "Children under twelve."),
    ("When does the north gate close on weekends?", "Midnight."),
    ("On which day do guided heritage tours run?", "Saturday afternoon."),
)


def demo_document() -> models.SourceDocument:
    return models.SourceDocument(
        title="garden rules",
        body=" ".join(DEMO_SENTENCES),
        sentences=tuple(
            models.Sentence(index=i, text=s) for i, s in enumerate(DEMO_SENTENCES, 1)
        ),
    )


def demo_facts() -> models.FactList:
    return models.FactList(
        facts=tuple(
            models.AtomicFact(fact_id=i, text=s, source_sentence=i)
            for i, s in enumerate(DEMO_SENTENCES, 1)
        )
    )


def demo_pairs(embeddings: bool = False) -> models.QASet:
    from loobench.gateway import mock_embedding
    from loobench.retrieval import pair_embedding_text

    pairs = []
    for i, (q, a) in enumerate(DEMO_QA, 1):
        pair = models.QAPair(pair_id=i, question=q, answer=a, source_fact_id=i)
        if embeddings:
            pair = pair.with_embedding(mock_embedding(pair_embedding_text(pair)))
        pairs.append(pair)
    return models.QASet(pairs=tuple(pairs))


def build_demo_chain(store: ArtifactStore) -> dict[str, Artifact]:
    """Persist the full demo pipeline by hand: data spine of 5 artifacts
    plus the experiment and evaluation spec side branches."""
    artifacts: dict[str, Artifact] = {}

    doc = Artifact(
        header=store.new_header("source_document", (), {"title": "garden rules"}),
        payload=demo_document(),
    )
    store.save(doc)
    artifacts["source_document"] = doc

    facts = Artifact(
        header=store.new_header(
            "fact_list",
            (doc.header.artifact_id,),
            {"prompt_identifier": "fact_extraction_v1", "model": "mock"},
        ),
        payload=demo_facts(),
    )
    store.save(facts)
    artifacts["fact_list"] = facts

    qa = Artifact(
        header=store.new_header(
            "qa_set",
            (facts.header.artifact_id,),
            {
                "prompt_identifier": "qa_generation_v1",
                "model": "mock",
                "ground_truth": "present",
            },
        ),
        payload=demo_pairs(embeddings=True),
    )
    store.save(qa)
    artifacts["qa_set"] = qa

    prompt = models.PromptSpec(
        name="basic", identifier="basic_citation_v1", text="answer with citations",
        requires_context=False,
    )
    strategy = models.RetrievalStrategy(kind="long_in_context")
    spec = Artifact(
        header=store.new_header(
            "experiment_spec",
            (qa.header.artifact_id,),
            {
                "prompt_identifier": prompt.identifier,
                "strategy": strategy.kind,
                "k": strategy.k,
                "model": "mock",
                "kb_artifact_id": qa.header.artifact_id,
            },
        ),
        payload=models.ExperimentSpec(
            prompt=prompt,
            strategy=strategy,
            target_model="mock",
            kb_artifact_id=qa.header.artifact_id,
        ),
    )
    store.save(spec)
    artifacts["experiment_spec"] = spec

    pairs = qa.payload.pairs
    responses = []
    for pair in pairs:
        context = tuple(
            models.ContextItem(
                context_index=n, pair_id=p.pair_id, question=p.question, answer=p.answer
            )
            for n, p in enumerate((x for x in pairs if x.pair_id != pair.pair_id), 1)
        )
        responses.append(
            models.SavedResponse(
                question_id=pair.pair_id,
                raw_text="I don't know. no citation",
                cited_context_index=None,
                context_snapshot=context,
                prompt_identifier=prompt.identifier,
                model="mock",
                timestamp=FIXED_CLOCK,
            )
        )
    output = Artifact(
        header=store.new_header(
            "experiment_output",
            (qa.header.artifact_id, spec.header.artifact_id),
            {
                "prompt_identifier": prompt.identifier,
                "strategy": strategy.kind,
                "model": "mock",
                "ground_truth": "present",
            },
        ),
        payload=models.ExperimentOutput(responses=tuple(responses)),
    )
    store.save(output)
    artifacts["experiment_output"] = output

    eval_spec = Artifact(
        header=store.new_header(
            "evaluation_spec", (), {"prompt_identifier": "abstention_prompt_v1"}
        ),
        payload=models.EvaluationSpec(
            evaluation_name="AbstentionCheck",
            prompt_identifier="abstention_prompt_v1",
            prompt_content="judge abstention",
            evaluation_outcomes=("Yes", "No", "Uncertain"),
            tag_name="abstention",
            uses_expected_answer=False,
        ),
    )
    store.save(eval_spec)
    artifacts["evaluation_spec"] = eval_spec

    entries = tuple(
        models.EvaluatedResponse(
            question_id=pair.pair_id,
            outcomes={"AbstentionCheck": "Yes" if pair.pair_id % 2 else "No"},
            judge_model="mock",
            judge_raw={"AbstentionCheck": "<abstention>x</abstention>"},
        )
        for pair in pairs
    )
    evaluated = Artifact(
        header=store.new_header(
            "evaluated_output",
            (output.header.artifact_id, eval_spec.header.artifact_id),
            {
                "model": "mock",
                "prompt_identifier": prompt.identifier,
                "strategy": strategy.kind,
            },
        ),
        payload=models.EvaluatedOutput(entries=entries),
    )
    store.save(evaluated)
    artifacts["evaluated_output"] = evaluated
    return artifacts
