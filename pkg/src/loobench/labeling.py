"""Human validation: stratified sampling, label sessions, consensus.

Sessions are working state: they checkpoint to a sidecar file under the
store root after every mutation and become immutable label_session
artifacts only at consensus time. Entered labels are never edited;
corrections happen through the explicit consensus resolution step.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .agreement import cohen_kappa, fleiss_kappa
from .errors import (
    AlreadyLabeledError,
    MissingResolutionError,
    SchemaError,
    StorageError,
    ValidationError,
)
from .models import LabelItem, LabelSchema, LabelSessionState
from .store import (
    Artifact,
    ArtifactStore,
    new_artifact_id,
    session_from_json,
    session_to_json,
    write_json_atomic,
)

import json


def item_id_for(artifact_id: str, question_id: int) -> str:
    return f"{artifact_id}:{question_id}"


def collect_items(
    evaluated_artifacts: Sequence[Artifact],
    store: ArtifactStore,
    dimensions: Sequence[str] = (),
) -> list[LabelItem]:
    """Flatten evaluated outputs into labelable items.

    Question text and expected answer come from the knowledge base two
    lineage hops up; the stratum key is read from the evaluated artifact's
    metadata for the requested dimensions.
    """
    items: list[LabelItem] = []
    for artifact in evaluated_artifacts:
        metadata = artifact.header.metadata
        for dim in dimensions:
            if dim not in metadata:
                raise ValidationError(
                    f"unknown dimension {dim!r}: not in metadata of "
                    f"{artifact.header.artifact_id}"
                )
        stratum = {dim: str(metadata[dim]) for dim in dimensions}
        output = store.load(artifact.header.upstream_ids[0], "experiment_output")
        kb = store.load(output.header.upstream_ids[0], "qa_set")
        truth_absent = kb.header.metadata.get("ground_truth") == "absent"
        pairs = {p.pair_id: p for p in kb.payload.pairs}
        responses = {r.question_id: r for r in output.payload.responses}
        for entry in artifact.payload.entries:
            response = responses.get(entry.question_id)
            pair = pairs.get(entry.question_id)
            if response is None or pair is None:
                raise ValidationError(
                    f"evaluated entry {entry.question_id} missing from lineage"
                )
            items.append(
                LabelItem(
                    item_id=item_id_for(artifact.header.artifact_id, entry.question_id),
                    source_artifact_id=artifact.header.artifact_id,
                    question_id=entry.question_id,
                    question=pair.question,
                    model_answer=response.raw_text,
                    expected_answer=None if truth_absent else pair.answer,
                    stratum=stratum,
                    auto_outcomes=dict(entry.outcomes),
                )
            )
    return items


def stratified_sample(
    evaluated_artifacts: Sequence[Artifact],
    dimensions: Sequence[str],
    n_per_stratum: int,
    seed: int,
    store: ArtifactStore,
) -> list[LabelItem]:
    """min(n, |stratum|) items per stratum, uniform without replacement,
    deterministic under seed."""
    if n_per_stratum < 1:
        raise ValidationError("n_per_stratum must be >= 1")
    items = collect_items(evaluated_artifacts, store, dimensions)
    strata: dict[tuple, list[LabelItem]] = {}
    for item in items:
        key = tuple(item.stratum[d] for d in dimensions)
        strata.setdefault(key, []).append(item)
    rng = random.Random(seed)
    sampled: list[LabelItem] = []
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda it: it.item_id)
        if len(members) <= n_per_stratum:
            sampled.extend(members)
        else:
            sampled.extend(rng.sample(members, n_per_stratum))
    return sampled


@dataclass(frozen=True)
class AgreementStats:
    co_labeled: int
    cohen: float | None
    fleiss: float | None
    accuracy_vs_auto: float | None
    disagreements: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "co_labeled": self.co_labeled,
            "cohen_kappa": self.cohen,
            "fleiss_kappa": self.fleiss,
            "accuracy_vs_auto": self.accuracy_vs_auto,
            "disagreements": list(self.disagreements),
        }


class LabelSession:
    """Mutable wrapper over LabelSessionState with the labeling rules."""

    def __init__(self, state: LabelSessionState):
        self.state = state

    @classmethod
    def create(
        cls,
        items: Sequence[LabelItem],
        annotators: Sequence[str],
        schema: LabelSchema,
        seed: int,
        session_id: str | None = None,
    ) -> "LabelSession":
        if not items:
            raise ValidationError("session needs at least one item")
        if not annotators:
            raise ValidationError("session needs at least one annotator")
        ids = [it.item_id for it in items]
        order: dict[str, tuple[str, ...]] = {}
        for annotator in annotators:
            shuffled = list(ids)
            random.Random(f"{seed}:{annotator}").shuffle(shuffled)
            order[annotator] = tuple(shuffled)
        state = LabelSessionState(
            session_id=session_id or new_artifact_id(),
            schema=schema,
            items=tuple(items),
            annotators=tuple(annotators),
            order=order,
            labels={a: {} for a in annotators},
            seed=seed,
            source_artifact_ids=tuple(
                dict.fromkeys(it.source_artifact_id for it in items)
            ),
        )
        return cls(state)

    # -- queries -------------------------------------------------------------

    @property
    def session_id(self) -> str:
        return self.state.session_id

    def item(self, item_id: str) -> LabelItem:
        for it in self.state.items:
            if it.item_id == item_id:
                return it
        raise ValidationError(f"unknown item {item_id}")

    def next_item(self, annotator: str) -> LabelItem | None:
        """The annotator's next unlabeled item in their shuffled order."""
        self._check_annotator(annotator)
        done = self.state.labels.get(annotator, {})
        for item_id in self.state.order[annotator]:
            if item_id not in done:
                return self.item(item_id)
        return None

    def progress(self, annotator: str) -> tuple[int, int]:
        self._check_annotator(annotator)
        return len(self.state.labels.get(annotator, {})), len(self.state.items)

    def is_complete(self) -> bool:
        return all(
            len(self.state.labels.get(a, {})) == len(self.state.items)
            for a in self.state.annotators
        )

    def _check_annotator(self, annotator: str) -> None:
        if annotator not in self.state.annotators:
            raise ValidationError(f"unknown annotator {annotator!r}")

    # -- mutation ------------------------------------------------------------

    def record_label(self, annotator: str, item_id: str, outcome: str) -> None:
        self._check_annotator(annotator)
        self.item(item_id)
        if outcome not in self.state.schema.outcomes:
            raise SchemaError(
                f"outcome {outcome!r} outside schema outcomes "
                f"{list(self.state.schema.outcomes)}"
            )
        cells = self.state.labels.setdefault(annotator, {})
        if item_id in cells:
            raise AlreadyLabeledError(
                f"{annotator} already labeled {item_id} as {cells[item_id]!r}"
            )
        cells[item_id] = outcome
        if self.is_complete():
            self.state = replace(self.state, status="complete")

    # -- statistics ----------------------------------------------------------

    def co_labeled_items(self) -> list[LabelItem]:
        return [
            it
            for it in self.state.items
            if all(it.item_id in self.state.labels.get(a, {}) for a in self.state.annotators)
        ]

    def disagreements(self) -> list[str]:
        """Item ids where fully-labeled annotators differ, in item order."""
        flagged = []
        for it in self.co_labeled_items():
            votes = {self.state.labels[a][it.item_id] for a in self.state.annotators}
            if len(votes) > 1:
                flagged.append(it.item_id)
        return flagged

    def agreement(self) -> AgreementStats:
        """Statistics over items every annotator has labeled.

        Recomputed from scratch on each call, so mid-session numbers always
        equal a batch recomputation.
        """
        items = self.co_labeled_items()
        annotators = self.state.annotators
        cohen = fleiss = accuracy = None
        if items and len(annotators) >= 2:
            if len(annotators) == 2:
                a = [self.state.labels[annotators[0]][it.item_id] for it in items]
                b = [self.state.labels[annotators[1]][it.item_id] for it in items]
                cohen = cohen_kappa(a, b)
            outcomes = list(self.state.schema.outcomes)
            matrix = []
            for it in items:
                row = [0] * len(outcomes)
                for annotator in annotators:
                    row[outcomes.index(self.state.labels[annotator][it.item_id])] += 1
                matrix.append(row)
            fleiss = fleiss_kappa(matrix)
        if items:
            auto_pairs = [
                (it.auto_outcomes.get(self.state.schema.evaluation_name), it)
                for it in items
                if len({self.state.labels[a][it.item_id] for a in annotators}) == 1
            ]
            auto_pairs = [(auto, it) for auto, it in auto_pairs if auto is not None]
            if auto_pairs:
                matches = sum(
                    1
                    for auto, it in auto_pairs
                    if auto == self.state.labels[annotators[0]][it.item_id]
                )
                accuracy = matches / len(auto_pairs)
        return AgreementStats(
            co_labeled=len(items),
            cohen=cohen,
            fleiss=fleiss,
            accuracy_vs_auto=accuracy,
            disagreements=tuple(self.disagreements()),
        )

    # -- consensus -----------------------------------------------------------

    def consensus_labels(self, resolution: dict[str, str]) -> dict[str, str]:
        """Unanimous items take their label; flagged ones take the explicit
        resolution. Fails listing any flagged item left unresolved."""
        if not self.is_complete():
            raise ValidationError("session is not complete")
        flagged = set(self.disagreements())
        missing = sorted(flagged - set(resolution))
        if missing:
            raise MissingResolutionError(
                f"unresolved disagreements: {missing}", item_ids=missing
            )
        extras = sorted(set(resolution) - flagged)
        if extras:
            raise ValidationError(f"resolutions for non-flagged items: {extras}")
        consensus: dict[str, str] = {}
        for it in self.state.items:
            if it.item_id in flagged:
                outcome = resolution[it.item_id]
                if outcome not in self.state.schema.outcomes:
                    raise SchemaError(f"resolution {outcome!r} outside schema outcomes")
                consensus[it.item_id] = outcome
            else:
                consensus[it.item_id] = self.state.labels[self.state.annotators[0]][
                    it.item_id
                ]
        return consensus


# ---------------------------------------------------------------------------
# Persistence: sidecar working file plus final artifact.


def session_path(store: ArtifactStore, session_id: str) -> Path:
    return store.root / "sessions" / f"{session_id}.json"


def checkpoint_session(store: ArtifactStore, session: LabelSession) -> Path:
    path = session_path(store, session.session_id)
    write_json_atomic(path, session_to_json(session.state))
    return path


def load_session(store: ArtifactStore, session_id: str) -> LabelSession:
    path = session_path(store, session_id)
    if not path.exists():
        raise StorageError(f"no such session: {session_id}")
    return LabelSession(session_from_json(json.loads(path.read_text(encoding="utf-8"))))


def consensus_artifact(
    store: ArtifactStore,
    session: LabelSession,
    resolution: dict[str, str],
    artifact_id: str | None = None,
) -> Artifact:
    """Freeze the completed session plus consensus as a label_session
    artifact; this is the human ground truth judge validation reads."""
    consensus = session.consensus_labels(resolution)
    state = replace(session.state, consensus=consensus, status="complete")
    header = store.new_header(
        "label_session",
        tuple(state.source_artifact_ids),
        {
            "evaluation_name": state.schema.evaluation_name,
            "annotators": ",".join(state.annotators),
            "session_id": state.session_id,
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=state)


def consensus_vs_auto(
    artifact: Artifact,
) -> tuple[list[str], list[str]]:
    """Paired (auto, human) outcome lists from a consensus artifact,
    restricted to items whose auto outcome exists and is parseable."""
    state: LabelSessionState = artifact.payload
    if state.consensus is None:
        raise ValidationError("artifact has no consensus labels")
    auto: list[str] = []
    human: list[str] = []
    for it in state.items:
        outcome = it.auto_outcomes.get(state.schema.evaluation_name)
        if outcome is None:
            continue
        auto.append(outcome)
        human.append(state.consensus[it.item_id])
    return auto, human
