import pytest

from loobench import prompts
from loobench.errors import MockMissError, RunFailureError, ValidationError
from loobench.experiment import (
    create_experiment_spec,
    run_experiment,
    valid_combinations,
    validate_config,
)
from loobench.gateway import ClientConfig, MockClient, MockScript
from loobench.models import ContextItem, PromptSpec, RetrievalStrategy

from conftest import build_demo_chain, make_store

MOCK = ClientConfig(provider="mock", model="mock-chat", embedding_model="mock-embed")

ALL_PROMPTS = tuple(prompts.BUILTIN_PROMPTS.values())
ALL_STRATEGIES = tuple(
    RetrievalStrategy(kind=k) for k in ("direct", "long_in_context", "basic_rag", "hyde_rag")
)


def test_conservative_direct_invalid():
    reason = validate_config(
        prompts.BUILTIN_PROMPTS["conservative"], RetrievalStrategy(kind="direct")
    )
    assert reason is not None and "direct" in reason


def test_basic_direct_valid():
    assert validate_config(
        prompts.BUILTIN_PROMPTS["basic"], RetrievalStrategy(kind="direct")
    ) is None


def test_exactly_ten_valid_combinations():
    combos = valid_combinations(ALL_PROMPTS, ALL_STRATEGIES)
    assert len(combos) == 10
    invalid = {
        (p.name, s.kind)
        for p in ALL_PROMPTS
        for s in ALL_STRATEGIES
        if validate_config(p, s) is not None
    }
    assert invalid == {("conservative", "direct"), ("opinion_based", "direct")}


def test_create_experiment_spec_rejects_invalid(store):
    artifacts = build_demo_chain(store)
    with pytest.raises(ValidationError, match="direct"):
        create_experiment_spec(
            store,
            artifacts["qa_set"],
            prompts.BUILTIN_PROMPTS["opinion_based"],
            RetrievalStrategy(kind="direct"),
            "mock-chat",
        )


def test_experiment_message_template_bit_exact():
    items = (
        ContextItem(1, 4, "What opens?", "The gate."),
        ContextItem(2, 7, "Who pays?", "Nobody."),
    )
    message = prompts.render_experiment_message("Is it open?", items)
    assert message == (
        "Context:\n"
        "1. Q: What opens? A: The gate.\n"
        "2. Q: Who pays? A: Nobody.\n"
        "\n"
        "Question: Is it open?"
    )
    assert prompts.render_experiment_message("Q?", ()) == (
        "Context:\n(no context provided)\n\nQuestion: Q?"
    )


def _direct_spec(store, artifacts):
    return create_experiment_spec(
        store,
        artifacts["qa_set"],
        prompts.BUILTIN_PROMPTS["basic"],
        RetrievalStrategy(kind="direct"),
        "mock-chat",
    )


def test_run_experiment_scripted_direct(store):
    artifacts = build_demo_chain(store)
    spec = _direct_spec(store, artifacts)
    store.save(spec)
    client = MockClient(MOCK, MockScript(fallback="I don't know. no citation"))
    output = run_experiment(spec, client, store)
    responses = output.payload.responses
    assert len(responses) == 4
    assert all(r.cited_context_index is None for r in responses)
    assert all(r.context_snapshot == () for r in responses)
    assert output.header.upstream_ids == (
        artifacts["qa_set"].header.artifact_id,
        spec.header.artifact_id,
    )
    store.save(output)


def test_run_experiment_loo_invariant(store):
    artifacts = build_demo_chain(store)
    spec = create_experiment_spec(
        store,
        artifacts["qa_set"],
        prompts.BUILTIN_PROMPTS["conservative"],
        RetrievalStrategy(kind="long_in_context"),
        "mock-chat",
    )
    store.save(spec)
    client = MockClient(MOCK, MockScript(fallback="I don't know. no citation"))
    output = run_experiment(spec, client, store)
    for response in output.payload.responses:
        assert response.question_id not in [
            c.pair_id for c in response.context_snapshot
        ]
        assert len(response.context_snapshot) == 3


def test_run_experiment_citation_parsed(store):
    artifacts = build_demo_chain(store)
    spec = create_experiment_spec(
        store,
        artifacts["qa_set"],
        prompts.BUILTIN_PROMPTS["basic"],
        RetrievalStrategy(kind="long_in_context"),
        "mock-chat",
    )
    store.save(spec)
    client = MockClient(MOCK, MockScript(fallback="Answer (fact 2). "))
    output = run_experiment(spec, client, store)
    assert all(r.cited_context_index == 2 for r in output.payload.responses)


def test_run_experiment_out_of_range_citation_noted(store):
    artifacts = build_demo_chain(store)
    spec = create_experiment_spec(
        store,
        artifacts["qa_set"],
        prompts.BUILTIN_PROMPTS["basic"],
        RetrievalStrategy(kind="long_in_context"),
        "mock-chat",
    )
    store.save(spec)
    client = MockClient(MOCK, MockScript(fallback="see fact 9"))
    output = run_experiment(spec, client, store)
    for response in output.payload.responses:
        assert response.cited_context_index is None
        assert "outside" in response.error


def test_run_experiment_ambiguous_citation_recorded(store):
    artifacts = build_demo_chain(store)
    spec = create_experiment_spec(
        store,
        artifacts["qa_set"],
        prompts.BUILTIN_PROMPTS["basic"],
        RetrievalStrategy(kind="long_in_context"),
        "mock-chat",
    )
    store.save(spec)
    client = MockClient(MOCK, MockScript(fallback="fact 1 and fact 2 apply"))
    output = run_experiment(spec, client, store)
    for response in output.payload.responses:
        assert response.cited_context_index is None
        assert "citation" in response.error
        assert response.raw_text  # raw output retained


def test_run_experiment_too_many_failures_aborts(store):
    artifacts = build_demo_chain(store)
    spec = _direct_spec(store, artifacts)
    store.save(spec)
    client = MockClient(MOCK, MockScript(chat_map={}))  # every call misses
    with pytest.raises(RunFailureError):
        run_experiment(spec, client, store)


def test_run_experiment_results_ordered_by_pair_id(store):
    import random as _random
    import time

    artifacts = build_demo_chain(store)
    spec = _direct_spec(store, artifacts)
    store.save(spec)

    class JitterClient(MockClient):
        def _chat_once(self, request):
            time.sleep(_random.random() * 0.01)
            return "I don't know. no citation"

    output = run_experiment(spec, JitterClient(MOCK), store)
    ids = [r.question_id for r in output.payload.responses]
    assert ids == sorted(ids)
