"""Judge-LLM evaluation, the derived metrics, and judge validation.

Abstention is judged first; factuality (and any spec listed after the
abstention check) is only judged for responses that did not abstain.
Judge responses that yield no parseable tag are recorded with the
`unparseable` sentinel and count conservatively: in every denominator,
in no numerator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any, Hashable, Sequence

from . import prompts
from .agreement import cohen_kappa
from .errors import ParseError, ProviderError, RunFailureError, ValidationError
from .gateway import ChatRequest, LlmClient
from .kb import fan_out
from .models import (
    UNPARSEABLE,
    EvaluatedOutput,
    EvaluatedResponse,
    EvaluationSpec,
    validate_evaluation_spec,
)
from .parsing import TagSpec, extract_tag
from .store import Artifact, ArtifactStore

ABSTENTION_CHECK = "AbstentionCheck"
FACTUALITY_CHECK = "FactualityCheck"

ABSTAINED = "Yes"
FACTUAL_TIERS = ("tier_1", "tier_2")

MAX_UNPARSEABLE_FRACTION = 0.10


def default_abstention_spec() -> EvaluationSpec:
    return create_evaluation_spec(
        evaluation_name=ABSTENTION_CHECK,
        prompt_identifier=prompts.ABSTENTION_PROMPT_ID,
        prompt_content=prompts.ABSTENTION_PROMPT,
        outcomes=("Yes", "No", "Uncertain"),
        tag_name="abstention",
        uses_expected_answer=False,
    )


def default_factuality_spec() -> EvaluationSpec:
    return create_evaluation_spec(
        evaluation_name=FACTUALITY_CHECK,
        prompt_identifier=prompts.FACTUALITY_PROMPT_ID,
        prompt_content=prompts.FACTUALITY_PROMPT,
        outcomes=("tier_1", "tier_2", "tier_3"),
        tag_name="factuality",
        uses_expected_answer=True,
    )


def create_evaluation_spec(
    evaluation_name: str,
    prompt_identifier: str,
    prompt_content: str,
    outcomes: Sequence[str],
    tag_name: str,
    uses_expected_answer: bool = True,
) -> EvaluationSpec:
    spec = EvaluationSpec(
        evaluation_name=evaluation_name,
        prompt_identifier=prompt_identifier,
        prompt_content=prompt_content,
        evaluation_outcomes=tuple(outcomes),
        tag_name=tag_name,
        uses_expected_answer=uses_expected_answer,
    )
    validate_evaluation_spec(spec)
    return spec


def evaluation_spec_artifact(
    store: ArtifactStore,
    spec: EvaluationSpec,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    header = store.new_header(
        "evaluation_spec",
        (),
        {
            "prompt_identifier": spec.prompt_identifier,
            "evaluation_name": spec.evaluation_name,
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=spec)


def _judge_system_prompt(spec: EvaluationSpec) -> str:
    rider = prompts.render_tag_instruction(spec.tag_name, spec.evaluation_outcomes)
    return f"{spec.prompt_content}\n\n{rider}"


def evaluate_responses(
    output_artifact: Artifact,
    spec_artifacts: Sequence[Artifact],
    judge_client: LlmClient,
    store: ArtifactStore,
    abstention_gate: str = ABSTENTION_CHECK,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """Judge every response against every spec, in spec order.

    Specs listed after the one named `abstention_gate` are skipped for
    responses that spec judged `Yes`. A knowledge base with no ground
    truth refuses any spec that references expected answers.
    """
    responses = output_artifact.payload.responses
    if not responses:
        raise ValidationError("experiment output has no responses")
    specs = [a.payload for a in spec_artifacts]
    for spec in specs:
        validate_evaluation_spec(spec)
    kb_artifact = store.load(output_artifact.header.upstream_ids[0], "qa_set")
    truth_absent = kb_artifact.header.metadata.get("ground_truth") == "absent"
    if truth_absent:
        offending = [s.evaluation_name for s in specs if s.uses_expected_answer]
        if offending:
            raise ValidationError(
                "knowledge base has no ground truth answers; specs requiring "
                f"expected answers rejected: {offending}"
            )
    pairs_by_id = {p.pair_id: p for p in kb_artifact.payload.pairs}
    gate_index = next(
        (i for i, s in enumerate(specs) if s.evaluation_name == abstention_gate), None
    )

    def judge(response) -> EvaluatedResponse:
        outcomes: dict[str, str] = {}
        raws: dict[str, str] = {}
        if response.error is not None and not response.raw_text:
            return EvaluatedResponse(
                question_id=response.question_id,
                outcomes=outcomes,
                judge_model=judge_client.config.model,
                judge_raw=raws,
            )
        pair = pairs_by_id.get(response.question_id)
        if pair is None:
            raise ValidationError(
                f"response {response.question_id} has no pair in the knowledge base"
            )
        for i, spec in enumerate(specs):
            message = prompts.render_judge_message(
                pair.question,
                response.raw_text,
                pair.answer if spec.uses_expected_answer else None,
            )
            raw = judge_client.chat(
                ChatRequest(system_prompt=_judge_system_prompt(spec), user_message=message)
            )
            raws[spec.evaluation_name] = raw
            try:
                outcome = extract_tag(
                    raw, TagSpec(spec.tag_name, spec.evaluation_outcomes)
                )
            except ParseError:
                outcome = UNPARSEABLE
            outcomes[spec.evaluation_name] = outcome
            if gate_index is not None and i == gate_index and outcome == ABSTAINED:
                break
        return EvaluatedResponse(
            question_id=response.question_id,
            outcomes=outcomes,
            judge_model=judge_client.config.model,
            judge_raw=raws,
        )

    try:
        entries = fan_out(judge, list(responses), judge_client.config.max_inflight)
    except ProviderError as exc:
        raise RunFailureError(f"judge call failed: {exc}") from exc
    judged = sum(len(e.outcomes) for e in entries)
    unparseable = sum(
        1 for e in entries for o in e.outcomes.values() if o == UNPARSEABLE
    )
    if judged and unparseable / judged > MAX_UNPARSEABLE_FRACTION:
        raise RunFailureError(
            f"{unparseable}/{judged} judge outcomes were unparseable; aborting"
        )
    header = store.new_header(
        "evaluated_output",
        (output_artifact.header.artifact_id,)
        + tuple(a.header.artifact_id for a in spec_artifacts),
        {
            "model": judge_client.config.model,
            "prompt_identifier": output_artifact.header.metadata.get("prompt_identifier", ""),
            "strategy": output_artifact.header.metadata.get("strategy", ""),
            "target_model": output_artifact.header.metadata.get("model", ""),
            **(
                {"domain": output_artifact.header.metadata["domain"]}
                if "domain" in output_artifact.header.metadata
                else {}
            ),
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=EvaluatedOutput(entries=tuple(entries)))


# ---------------------------------------------------------------------------
# Metrics.


def compute_abstention_rate(
    evaluated: EvaluatedOutput, abstention: str = ABSTENTION_CHECK
) -> float:
    """Percent of all evaluated responses judged as abstentions. Uncertain
    and unparseable outcomes stay in the denominator only."""
    if not evaluated.entries:
        raise ValidationError("no evaluated responses")
    yes = sum(1 for e in evaluated.entries if e.outcomes.get(abstention) == ABSTAINED)
    return 100.0 * yes / len(evaluated.entries)


def compute_factuality_rate(
    evaluated: EvaluatedOutput,
    factuality: str = FACTUALITY_CHECK,
    abstention: str = ABSTENTION_CHECK,
    factual_outcomes: Sequence[str] = FACTUAL_TIERS,
) -> float | None:
    """Percent of non-abstained responses judged factually acceptable.

    Non-abstained means anything but an explicit Yes (Uncertain counts as
    non-abstention). All non-abstained responses are in the denominator,
    including unparseable ones; None when nothing was non-abstained.
    """
    non_abstained = [
        e for e in evaluated.entries if e.outcomes.get(abstention) != ABSTAINED
    ]
    if not non_abstained:
        return None
    factual = sum(
        1 for e in non_abstained if e.outcomes.get(factuality) in set(factual_outcomes)
    )
    return 100.0 * factual / len(non_abstained)


@dataclass(frozen=True)
class MetricsReport:
    breakdown: dict[str, str]
    total: int
    abstained: int
    uncertain: int
    non_abstained: int
    abstention_rate: float
    factuality_rate: float | None
    outcome_counts: dict[str, dict[str, int]]

    def to_json(self) -> dict:
        return asdict(self)


def build_metrics(
    evaluated_artifact: Artifact,
    breakdown_keys: Sequence[str] = ("prompt_identifier", "strategy", "domain"),
    abstention: str = ABSTENTION_CHECK,
    factuality: str = FACTUALITY_CHECK,
) -> MetricsReport:
    evaluated: EvaluatedOutput = evaluated_artifact.payload
    metadata = evaluated_artifact.header.metadata
    counts: dict[str, dict[str, int]] = {}
    for entry in evaluated.entries:
        for name, outcome in entry.outcomes.items():
            counts.setdefault(name, {})
            counts[name][outcome] = counts[name].get(outcome, 0) + 1
    abstained = counts.get(abstention, {}).get(ABSTAINED, 0)
    uncertain = counts.get(abstention, {}).get("Uncertain", 0)
    total = len(evaluated.entries)
    return MetricsReport(
        breakdown={k: str(metadata[k]) for k in breakdown_keys if k in metadata},
        total=total,
        abstained=abstained,
        uncertain=uncertain,
        non_abstained=total - abstained,
        abstention_rate=compute_abstention_rate(evaluated, abstention),
        factuality_rate=compute_factuality_rate(evaluated, factuality, abstention),
        outcome_counts=counts,
    )


def render_metrics_table(reports: Sequence[MetricsReport]) -> str:
    """Plain-text table, one row per prompt x strategy configuration."""
    headers = ("System prompt", "Retrieval method", "Abstention (%)", "Factuality (%)")
    rows = []
    for r in reports:
        factuality = "-" if r.factuality_rate is None else f"{r.factuality_rate:.2f}"
        rows.append(
            (
                r.breakdown.get("prompt_identifier", "?"),
                r.breakdown.get("strategy", "?"),
                f"{r.abstention_rate:.2f}",
                factuality,
            )
        )
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
        for i in range(4)
    ]
    lines = [
        "  ".join(headers[i].ljust(widths[i]) for i in range(4)),
        "  ".join("-" * widths[i] for i in range(4)),
    ]
    for row in rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(4)))
    return "\n".join(lines)


def reports_to_json(reports: Sequence[MetricsReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Judge validation against human labels.


@dataclass(frozen=True)
class ConfusionReport:
    positive_class: str
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    kappa: float | None

    def to_json(self) -> dict:
        return asdict(self)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def validate_evaluator(
    auto: Sequence[Hashable], human: Sequence[Hashable], positive_class: Hashable
) -> ConfusionReport:
    """Binary confusion metrics of automated outcomes against human ground
    truth, binarizing multi-class labels as positive_class vs rest."""
    if len(auto) != len(human):
        raise ValidationError(f"length mismatch: {len(auto)} auto vs {len(human)} human")
    if not auto:
        raise ValidationError("no labels to compare")
    auto_bin = [x == positive_class for x in auto]
    human_bin = [x == positive_class for x in human]
    tp = sum(1 for a, h in zip(auto_bin, human_bin) if a and h)
    tn = sum(1 for a, h in zip(auto_bin, human_bin) if not a and not h)
    fp = sum(1 for a, h in zip(auto_bin, human_bin) if a and not h)
    fn = sum(1 for a, h in zip(auto_bin, human_bin) if not a and h)
    total = len(auto)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return ConfusionReport(
        positive_class=str(positive_class),
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        kappa=cohen_kappa(auto_bin, human_bin),
    )


@dataclass(frozen=True)
class CrossTab:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: dict[str, dict[str, float]]
    normalize: str

    def to_json(self) -> dict:
        return asdict(self)


def cross_tabulate(
    labels_a: Sequence[Hashable],
    labels_b: Sequence[Hashable],
    normalize: str = "by_a",
) -> CrossTab:
    """Co-occurrence percentages of two label lists.

    Rows and columns appear in first-appearance order; `by_a` makes each
    row sum to 100, `by_b` each column.
    """
    if len(labels_a) != len(labels_b):
        raise ValidationError(
            f"length mismatch: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise ValidationError("no labels to tabulate")
    if normalize not in ("by_a", "by_b"):
        raise ValidationError(f"normalize must be by_a or by_b, got {normalize!r}")
    rows = list(dict.fromkeys(str(x) for x in labels_a))
    cols = list(dict.fromkeys(str(x) for x in labels_b))
    counts = {r: {c: 0 for c in cols} for r in rows}
    for a, b in zip(labels_a, labels_b):
        counts[str(a)][str(b)] += 1
    values: dict[str, dict[str, float]] = {r: {} for r in rows}
    if normalize == "by_a":
        for r in rows:
            row_total = sum(counts[r].values())
            for c in cols:
                values[r][c] = 100.0 * counts[r][c] / row_total if row_total else 0.0
    else:
        for c in cols:
            col_total = sum(counts[r][c] for r in rows)
            for r in rows:
                values[r][c] = 100.0 * counts[r][c] / col_total if col_total else 0.0
    return CrossTab(rows=tuple(rows), cols=tuple(cols), values=values, normalize=normalize)
