"""Leave-one-out experiment assembly and execution.

An experiment spec freezes prompt, strategy, target model, and knowledge
base. Running it asks the target model every question in the KB with the
sourcing pair excluded from the context, records the raw response plus the
exact context shown, and parses the citation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from . import prompts
from .errors import AmbiguousCitationError, ProviderError, RunFailureError, ValidationError
from .gateway import ChatRequest, LlmClient
from .kb import fan_out
from .models import (
    ContextItem,
    ExperimentOutput,
    ExperimentSpec,
    PromptSpec,
    QAPair,
    RetrievalStrategy,
    SavedResponse,
)
from .parsing import parse_citation
from .retrieval import build_context
from .store import Artifact, ArtifactStore

# Abort threshold: an output where more than this fraction of questions
# failed is not trustworthy.
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class ExperimentInput:
    question_id: int
    question: str
    expected_answer: str
    context: tuple[ContextItem, ...]


def validate_config(prompt: PromptSpec, strategy: RetrievalStrategy) -> str | None:
    """Reason the combination is invalid, or None when it is fine.

    Context-requiring prompts cannot run without retrieval.
    """
    if prompt.requires_context and strategy.kind == "direct":
        return (
            f"prompt {prompt.name!r} requires context and cannot be combined "
            "with the direct (no-context) strategy"
        )
    return None


def valid_combinations(
    prompt_specs: Sequence[PromptSpec], strategies: Sequence[RetrievalStrategy]
) -> list[tuple[PromptSpec, RetrievalStrategy]]:
    return [
        (p, s)
        for p in prompt_specs
        for s in strategies
        if validate_config(p, s) is None
    ]


def create_experiment_spec(
    store: ArtifactStore,
    kb_artifact: Artifact,
    prompt: PromptSpec,
    strategy: RetrievalStrategy,
    target_model: str,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    reason = validate_config(prompt, strategy)
    if reason:
        raise ValidationError(reason)
    spec = ExperimentSpec(
        prompt=prompt,
        strategy=strategy,
        target_model=target_model,
        kb_artifact_id=kb_artifact.header.artifact_id,
    )
    header = store.new_header(
        "experiment_spec",
        (kb_artifact.header.artifact_id,),
        {
            "prompt_identifier": prompt.identifier,
            "strategy": strategy.kind,
            "k": strategy.k,
            "model": target_model,
            "kb_artifact_id": kb_artifact.header.artifact_id,
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=spec)


def build_input(
    pair: QAPair,
    kb_pairs: Sequence[QAPair],
    strategy: RetrievalStrategy,
    client: LlmClient | None,
) -> ExperimentInput:
    context = build_context(pair.pair_id, kb_pairs, strategy, client)
    return ExperimentInput(
        question_id=pair.pair_id,
        question=pair.question,
        expected_answer=pair.answer,
        context=tuple(context),
    )


def run_experiment(
    spec_artifact: Artifact,
    target_client: LlmClient,
    store: ArtifactStore,
    retrieval_client: LlmClient | None = None,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """Execute the full leave-one-out sweep described by a spec artifact.

    Per-question provider errors become failed entries rather than aborting
    the run; responses are ordered by pair_id whatever order the concurrent
    calls settle in.
    """
    spec: ExperimentSpec = spec_artifact.payload
    reason = validate_config(spec.prompt, spec.strategy)
    if reason:
        raise ValidationError(reason)
    kb_artifact = store.load(spec.kb_artifact_id, "qa_set")
    kb_pairs = kb_artifact.payload.pairs
    retrieval = retrieval_client or target_client

    def ask(pair: QAPair) -> SavedResponse:
        timestamp = store.clock()
        try:
            inp = build_input(pair, kb_pairs, spec.strategy, retrieval)
            message = prompts.render_experiment_message(inp.question, inp.context)
            raw = target_client.chat(
                ChatRequest(system_prompt=spec.prompt.text, user_message=message)
            )
        except ProviderError as exc:
            return SavedResponse(
                question_id=pair.pair_id,
                raw_text="",
                cited_context_index=None,
                context_snapshot=(),
                prompt_identifier=spec.prompt.identifier,
                model=spec.target_model,
                timestamp=timestamp,
                error=str(exc),
            )
        cited: int | None
        error: str | None = None
        try:
            cited = parse_citation(raw)
        except AmbiguousCitationError as exc:
            cited, error = None, str(exc)
        if cited is not None and not 1 <= cited <= len(inp.context):
            error = f"citation {cited} outside the provided context"
            cited = None
        return SavedResponse(
            question_id=pair.pair_id,
            raw_text=raw,
            cited_context_index=cited,
            context_snapshot=inp.context,
            prompt_identifier=spec.prompt.identifier,
            model=spec.target_model,
            timestamp=timestamp,
            error=error,
        )

    responses = fan_out(ask, list(kb_pairs), target_client.config.max_inflight)
    responses.sort(key=lambda r: r.question_id)
    failures = sum(1 for r in responses if r.error is not None and not r.raw_text)
    if responses and failures / len(responses) > MAX_FAILURE_FRACTION:
        raise RunFailureError(
            f"{failures}/{len(responses)} questions failed; aborting run"
        )
    header = store.new_header(
        "experiment_output",
        (spec.kb_artifact_id, spec_artifact.header.artifact_id),
        {
            "prompt_identifier": spec.prompt.identifier,
            "strategy": spec.strategy.kind,
            "k": spec.strategy.k,
            "model": spec.target_model,
            "kb_artifact_id": spec.kb_artifact_id,
            "ground_truth": kb_artifact.header.metadata.get("ground_truth", "present"),
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=ExperimentOutput(responses=tuple(responses)))
