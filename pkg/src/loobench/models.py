"""Domain types for every persisted artifact payload.

Each type is an immutable value object with a `validate_*` function that
raises SchemaError naming the offending field. Serialization lives in
`store`; these types only know their own shape and invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import SchemaError

# Sentinel source_fact_id for questions that have no backing fact
# (random synthetic query sets, ground_truth == "absent").
NO_FACT = 0


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str


@dataclass(frozen=True)
class SourceDocument:
    title: str
    body: str
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class AtomicFact:
    fact_id: int
    text: str
    source_sentence: int


@dataclass(frozen=True)
class FactList:
    facts: tuple[AtomicFact, ...]


@dataclass(frozen=True)
class QAPair:
    pair_id: int
    question: str
    answer: str
    source_fact_id: int
    embedding: tuple[float, ...] | None = None

    def with_embedding(self, vector: list[float]) -> "QAPair":
        return replace(self, embedding=tuple(float(x) for x in vector))


@dataclass(frozen=True)
class QASet:
    pairs: tuple[QAPair, ...]


@dataclass(frozen=True)
class PromptSpec:
    """A named system prompt for the target model.

    `requires_context` marks prompts that are meaningless without retrieved
    context and therefore cannot be paired with the no-context strategy.
    """

    name: str
    identifier: str
    text: str
    requires_context: bool


@dataclass(frozen=True)
class RetrievalStrategy:
    """Configuration record for a context-construction strategy.

    `kind` names a registered builder (four built-ins, extensible via
    `retrieval.register_strategy`). `k` bounds the context size for the
    similarity-based strategies; `hyde_answer_count` is the number of
    hypothetical answers averaged into the query vector.
    """

    kind: str
    k: int = 5
    hyde_answer_count: int = 3


@dataclass(frozen=True)
class ExperimentSpec:
    prompt: PromptSpec
    strategy: RetrievalStrategy
    target_model: str
    kb_artifact_id: str


@dataclass(frozen=True)
class ContextItem:
    context_index: int
    pair_id: int
    question: str
    answer: str


@dataclass(frozen=True)
class SavedResponse:
    question_id: int
    raw_text: str
    cited_context_index: int | None
    context_snapshot: tuple[ContextItem, ...]
    prompt_identifier: str
    model: str
    timestamp: str
    error: str | None = None


@dataclass(frozen=True)
class ExperimentOutput:
    responses: tuple[SavedResponse, ...]


@dataclass(frozen=True)
class EvaluationSpec:
    evaluation_name: str
    prompt_identifier: str
    prompt_content: str
    evaluation_outcomes: tuple[str, ...]
    tag_name: str
    uses_expected_answer: bool = True


# Outcome recorded when the judge response yields no parseable tag.
UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class EvaluatedResponse:
    question_id: int
    outcomes: dict[str, str] = field(default_factory=dict)
    judge_model: str = ""
    judge_raw: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluatedOutput:
    entries: tuple[EvaluatedResponse, ...]


@dataclass(frozen=True)
class LabelItem:
    """One sampled response presented to annotators."""

    item_id: str
    source_artifact_id: str
    question_id: int
    question: str
    model_answer: str
    expected_answer: str | None
    stratum: dict[str, str]
    auto_outcomes: dict[str, str]


@dataclass(frozen=True)
class LabelSchema:
    evaluation_name: str
    outcomes: tuple[str, ...]
    tag_name: str


@dataclass(frozen=True)
class LabelSessionState:
    """Snapshot of a labeling session; live sessions mutate a copy of this."""

    session_id: str
    schema: LabelSchema
    items: tuple[LabelItem, ...]
    annotators: tuple[str, ...]
    order: dict[str, tuple[str, ...]]
    labels: dict[str, dict[str, str]]
    seed: int
    source_artifact_ids: tuple[str, ...]
    status: str = "open"
    consensus: dict[str, str] | None = None


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaError(message)


def _ws_free(text: str) -> str:
    return "".join(text.split())


def validate_source_document(doc: SourceDocument) -> None:
    for i, sentence in enumerate(doc.sentences, start=1):
        _require(sentence.index == i, f"sentence indices not contiguous at position {i}")
        _require(bool(sentence.text.strip()), f"sentence {i} is empty")
    joined = _ws_free("".join(s.text for s in doc.sentences))
    _require(
        joined == _ws_free(doc.body),
        "sentences do not reconstruct body (modulo whitespace)",
    )


def validate_fact_list(facts: FactList, sentence_count: int | None = None) -> None:
    for fact in facts.facts:
        _require(bool(fact.text.strip()), f"fact {fact.fact_id} text is empty")
        _require(fact.source_sentence >= 1, f"fact {fact.fact_id} source_sentence must be >= 1")
        if sentence_count is not None:
            _require(
                fact.source_sentence <= sentence_count,
                f"fact {fact.fact_id} cites unknown sentence {fact.source_sentence}",
            )
    ids = [f.fact_id for f in facts.facts]
    _require(len(ids) == len(set(ids)), "fact_id not unique")


def validate_qa_set(qa: QASet, ground_truth_absent: bool = False) -> None:
    ids = [p.pair_id for p in qa.pairs]
    _require(len(ids) == len(set(ids)), "pair_id not unique")
    for pair in qa.pairs:
        _require(bool(pair.question.strip()), f"pair {pair.pair_id} question is empty")
        if ground_truth_absent:
            _require(
                pair.source_fact_id == NO_FACT,
                f"pair {pair.pair_id} cites a fact in a ground-truth-free set",
            )
        else:
            _require(bool(pair.answer.strip()), f"pair {pair.pair_id} answer is empty")
            _require(
                pair.source_fact_id != NO_FACT,
                f"pair {pair.pair_id} missing source_fact_id",
            )


def validate_prompt_spec(prompt: PromptSpec) -> None:
    _require(bool(prompt.identifier), "prompt identifier is empty")
    _require(bool(prompt.text.strip()), "prompt text is empty")
    if prompt.name in ("conservative", "opinion_based"):
        _require(
            prompt.requires_context,
            f"{prompt.name} prompt must have requires_context=True",
        )


def validate_strategy(strategy: RetrievalStrategy) -> None:
    _require(strategy.k >= 1, "strategy k must be >= 1")
    _require(strategy.hyde_answer_count >= 1, "hyde_answer_count must be >= 1")
    _require(bool(strategy.kind), "strategy kind is empty")


def validate_experiment_spec(spec: ExperimentSpec) -> None:
    validate_prompt_spec(spec.prompt)
    validate_strategy(spec.strategy)
    _require(bool(spec.target_model), "target_model is empty")
    _require(bool(spec.kb_artifact_id), "kb_artifact_id is empty")


def validate_experiment_output(output: ExperimentOutput) -> None:
    for resp in output.responses:
        indices = {item.context_index for item in resp.context_snapshot}
        _require(
            indices == set(range(1, len(resp.context_snapshot) + 1)),
            f"response {resp.question_id}: context indices not contiguous from 1",
        )
        if resp.cited_context_index is not None:
            _require(
                resp.cited_context_index in indices,
                f"response {resp.question_id}: cited_context_index "
                f"{resp.cited_context_index} outside context",
            )
        _require(
            resp.question_id not in {item.pair_id for item in resp.context_snapshot},
            f"response {resp.question_id}: held-out pair present in its own context",
        )


def validate_evaluation_spec(spec: EvaluationSpec) -> None:
    _require(bool(spec.evaluation_name), "evaluation_name is empty")
    _require(bool(spec.tag_name), "tag_name is empty")
    _require(
        all(c.isalnum() or c == "_" for c in spec.tag_name),
        "tag_name must be alphanumeric/underscore",
    )
    _require(len(spec.evaluation_outcomes) >= 1, "evaluation_outcomes is empty")
    lowered = [o.lower() for o in spec.evaluation_outcomes]
    _require(
        len(lowered) == len(set(lowered)),
        "duplicate outcome (case-insensitive)",
    )
    _require(all(o.strip() for o in spec.evaluation_outcomes), "blank outcome")


def validate_evaluated_output(output: EvaluatedOutput, specs_by_name: dict[str, EvaluationSpec] | None = None) -> None:
    for entry in output.entries:
        for name, outcome in entry.outcomes.items():
            if outcome == UNPARSEABLE:
                continue
            if specs_by_name and name in specs_by_name:
                _require(
                    outcome in specs_by_name[name].evaluation_outcomes,
                    f"question {entry.question_id}: outcome {outcome!r} "
                    f"not allowed for {name}",
                )


def validate_label_session(state: LabelSessionState) -> None:
    item_ids = [item.item_id for item in state.items]
    _require(len(item_ids) == len(set(item_ids)), "item_id not unique")
    _require(len(state.annotators) >= 1, "session needs at least one annotator")
    _require(
        len(set(state.annotators)) == len(state.annotators),
        "annotator ids not unique",
    )
    id_set = set(item_ids)
    for annotator in state.annotators:
        _require(annotator in state.order, f"missing presentation order for {annotator}")
        _require(
            sorted(state.order[annotator]) == sorted(item_ids),
            f"order for {annotator} is not a permutation of the items",
        )
    for annotator, cells in state.labels.items():
        _require(annotator in state.annotators, f"labels from unknown annotator {annotator}")
        for item_id, outcome in cells.items():
            _require(item_id in id_set, f"label for unknown item {item_id}")
            _require(
                outcome in state.schema.outcomes,
                f"label {outcome!r} outside schema outcomes",
            )
    if state.consensus is not None:
        for item_id, outcome in state.consensus.items():
            _require(item_id in id_set, f"consensus for unknown item {item_id}")
            _require(
                outcome in state.schema.outcomes,
                f"consensus label {outcome!r} outside schema outcomes",
            )
    _require(state.status in ("open", "complete"), f"unknown status {state.status!r}")
