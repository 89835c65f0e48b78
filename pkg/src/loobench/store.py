"""Append-only artifact store with schema validation and lineage tracing.

Layout: `<root>/<kind>/<artifact_id>.json`, each file holding
`{"schema_version": "1", "header": {...}, "payload": {...}}` as UTF-8 JSON
with sorted keys. Writes are atomic (temp file + rename). Artifacts are
immutable once written; the store only ever appends.
"""

from __future__ import annotations

import json
import os
import secrets
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from . import models
from .errors import KindMismatchError, LineageError, SchemaError, StorageError

SCHEMA_VERSION = "1"

TOOL_VERSION = "loobench 0.1.0"

KINDS = (
    "source_document",
    "fact_list",
    "qa_set",
    "experiment_spec",
    "experiment_output",
    "evaluation_spec",
    "evaluated_output",
    "label_session",
)

# Allowed upstream kinds per artifact kind, and whether at least one
# upstream is mandatory. source_document and evaluation_spec are roots.
_UPSTREAM_RULES: dict[str, tuple[frozenset[str], bool]] = {
    "source_document": (frozenset(), False),
    "fact_list": (frozenset({"source_document"}), True),
    "qa_set": (frozenset({"fact_list", "qa_set", "source_document"}), True),
    "experiment_spec": (frozenset({"qa_set"}), True),
    "experiment_output": (frozenset({"qa_set", "experiment_spec"}), True),
    "evaluation_spec": (frozenset(), False),
    "evaluated_output": (frozenset({"experiment_output", "evaluation_spec"}), True),
    "label_session": (frozenset({"evaluated_output", "evaluation_spec", "label_session"}), True),
}

# Metadata keys that must be present per kind.
_REQUIRED_METADATA: dict[str, tuple[str, ...]] = {
    "source_document": (),
    "fact_list": ("prompt_identifier", "model"),
    "qa_set": ("prompt_identifier", "model"),
    "experiment_spec": ("prompt_identifier", "strategy", "k", "model", "kb_artifact_id"),
    "experiment_output": ("prompt_identifier", "strategy", "model"),
    "evaluation_spec": ("prompt_identifier",),
    "evaluated_output": ("model",),
    "label_session": (),
}


@dataclass(frozen=True)
class ArtifactHeader:
    artifact_id: str
    kind: str
    created_at: str
    creator: str
    upstream_ids: tuple[str, ...]
    metadata: dict[str, Any]


@dataclass(frozen=True)
class Artifact:
    header: ArtifactHeader
    payload: Any


@dataclass(frozen=True)
class ArtifactRef:
    artifact_id: str
    path: Path


def new_artifact_id() -> str:
    """Random 128-bit id rendered as 32 hex chars."""
    return secrets.token_hex(16)


def utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _validate_header(header: ArtifactHeader) -> None:
    if header.kind not in KINDS:
        raise SchemaError(f"unknown artifact kind {header.kind!r}")
    if not header.artifact_id:
        raise SchemaError("artifact_id is empty")
    for key in _REQUIRED_METADATA[header.kind]:
        if key not in header.metadata:
            raise SchemaError(f"{header.kind} metadata missing required key {key!r}")
    allowed, required = _UPSTREAM_RULES[header.kind]
    if required and not header.upstream_ids:
        raise SchemaError(f"{header.kind} requires at least one upstream artifact")
    if not allowed and header.upstream_ids:
        raise SchemaError(f"{header.kind} must not reference upstream artifacts")


# ---------------------------------------------------------------------------
# Payload (de)serialization per kind.

def _sentence_to_json(s: models.Sentence) -> dict:
    return {"index": s.index, "text": s.text}


def _pair_to_json(p: models.QAPair) -> dict:
    out: dict[str, Any] = {
        "pair_id": p.pair_id,
        "question": p.question,
        "answer": p.answer,
        "source_fact_id": p.source_fact_id,
    }
    if p.embedding is not None:
        out["embedding"] = list(p.embedding)
    return out


def _pair_from_json(d: dict) -> models.QAPair:
    emb = d.get("embedding")
    return models.QAPair(
        pair_id=d["pair_id"],
        question=d["question"],
        answer=d["answer"],
        source_fact_id=d["source_fact_id"],
        embedding=tuple(emb) if emb is not None else None,
    )


def _context_item_to_json(c: models.ContextItem) -> dict:
    return {
        "context_index": c.context_index,
        "pair_id": c.pair_id,
        "question": c.question,
        "answer": c.answer,
    }


def _response_to_json(r: models.SavedResponse) -> dict:
    return {
        "question_id": r.question_id,
        "raw_text": r.raw_text,
        "cited_context_index": r.cited_context_index,
        "context_snapshot": [_context_item_to_json(c) for c in r.context_snapshot],
        "prompt_identifier": r.prompt_identifier,
        "model": r.model,
        "timestamp": r.timestamp,
        "error": r.error,
    }


def _response_from_json(d: dict) -> models.SavedResponse:
    return models.SavedResponse(
        question_id=d["question_id"],
        raw_text=d["raw_text"],
        cited_context_index=d["cited_context_index"],
        context_snapshot=tuple(
            models.ContextItem(
                context_index=c["context_index"],
                pair_id=c["pair_id"],
                question=c["question"],
                answer=c["answer"],
            )
            for c in d["context_snapshot"]
        ),
        prompt_identifier=d["prompt_identifier"],
        model=d["model"],
        timestamp=d["timestamp"],
        error=d.get("error"),
    )


def _label_item_to_json(it: models.LabelItem) -> dict:
    return {
        "item_id": it.item_id,
        "source_artifact_id": it.source_artifact_id,
        "question_id": it.question_id,
        "question": it.question,
        "model_answer": it.model_answer,
        "expected_answer": it.expected_answer,
        "stratum": dict(it.stratum),
        "auto_outcomes": dict(it.auto_outcomes),
    }


def _label_item_from_json(d: dict) -> models.LabelItem:
    return models.LabelItem(
        item_id=d["item_id"],
        source_artifact_id=d["source_artifact_id"],
        question_id=d["question_id"],
        question=d["question"],
        model_answer=d["model_answer"],
        expected_answer=d["expected_answer"],
        stratum=dict(d["stratum"]),
        auto_outcomes=dict(d["auto_outcomes"]),
    )


def session_to_json(state: models.LabelSessionState) -> dict:
    return {
        "session_id": state.session_id,
        "schema": {
            "evaluation_name": state.schema.evaluation_name,
            "outcomes": list(state.schema.outcomes),
            "tag_name": state.schema.tag_name,
        },
        "items": [_label_item_to_json(it) for it in state.items],
        "annotators": list(state.annotators),
        "order": {a: list(ids) for a, ids in state.order.items()},
        "labels": {a: dict(cells) for a, cells in state.labels.items()},
        "seed": state.seed,
        "source_artifact_ids": list(state.source_artifact_ids),
        "status": state.status,
        "consensus": dict(state.consensus) if state.consensus is not None else None,
    }


def session_from_json(d: dict) -> models.LabelSessionState:
    return models.LabelSessionState(
        session_id=d["session_id"],
        schema=models.LabelSchema(
            evaluation_name=d["schema"]["evaluation_name"],
            outcomes=tuple(d["schema"]["outcomes"]),
            tag_name=d["schema"]["tag_name"],
        ),
        items=tuple(_label_item_from_json(it) for it in d["items"]),
        annotators=tuple(d["annotators"]),
        order={a: tuple(ids) for a, ids in d["order"].items()},
        labels={a: dict(cells) for a, cells in d["labels"].items()},
        seed=d["seed"],
        source_artifact_ids=tuple(d["source_artifact_ids"]),
        status=d["status"],
        consensus=dict(d["consensus"]) if d.get("consensus") is not None else None,
    )


def _payload_to_json(kind: str, payload: Any) -> dict:
    if kind == "source_document":
        return {
            "title": payload.title,
            "body": payload.body,
            "sentences": [_sentence_to_json(s) for s in payload.sentences],
        }
    if kind == "fact_list":
        return {
            "facts": [
                {"fact_id": f.fact_id, "text": f.text, "source_sentence": f.source_sentence}
                for f in payload.facts
            ]
        }
    if kind == "qa_set":
        return {"pairs": [_pair_to_json(p) for p in payload.pairs]}
    if kind == "experiment_spec":
        return {
            "prompt": {
                "name": payload.prompt.name,
                "identifier": payload.prompt.identifier,
                "text": payload.prompt.text,
                "requires_context": payload.prompt.requires_context,
            },
            "strategy": {
                "kind": payload.strategy.kind,
                "k": payload.strategy.k,
                "hyde_answer_count": payload.strategy.hyde_answer_count,
            },
            "target_model": payload.target_model,
            "kb_artifact_id": payload.kb_artifact_id,
        }
    if kind == "experiment_output":
        return {"responses": [_response_to_json(r) for r in payload.responses]}
    if kind == "evaluation_spec":
        return {
            "evaluation_name": payload.evaluation_name,
            "prompt_identifier": payload.prompt_identifier,
            "prompt_content": payload.prompt_content,
            "evaluation_outcomes": list(payload.evaluation_outcomes),
            "tag_name": payload.tag_name,
            "uses_expected_answer": payload.uses_expected_answer,
        }
    if kind == "evaluated_output":
        return {
            "entries": [
                {
                    "question_id": e.question_id,
                    "outcomes": dict(e.outcomes),
                    "judge_model": e.judge_model,
                    "judge_raw": dict(e.judge_raw),
                }
                for e in payload.entries
            ]
        }
    if kind == "label_session":
        return session_to_json(payload)
    raise SchemaError(f"unknown artifact kind {kind!r}")


def _payload_from_json(kind: str, data: dict) -> Any:
    if kind == "source_document":
        return models.SourceDocument(
            title=data["title"],
            body=data["body"],
            sentences=tuple(
                models.Sentence(index=s["index"], text=s["text"]) for s in data["sentences"]
            ),
        )
    if kind == "fact_list":
        return models.FactList(
            facts=tuple(
                models.AtomicFact(
                    fact_id=f["fact_id"],
                    text=f["text"],
                    source_sentence=f["source_sentence"],
                )
                for f in data["facts"]
            )
        )
    if kind == "qa_set":
        return models.QASet(pairs=tuple(_pair_from_json(p) for p in data["pairs"]))
    if kind == "experiment_spec":
        return models.ExperimentSpec(
            prompt=models.PromptSpec(
                name=data["prompt"]["name"],
                identifier=data["prompt"]["identifier"],
                text=data["prompt"]["text"],
                requires_context=data["prompt"]["requires_context"],
            ),
            strategy=models.RetrievalStrategy(
                kind=data["strategy"]["kind"],
                k=data["strategy"]["k"],
                hyde_answer_count=data["strategy"]["hyde_answer_count"],
            ),
            target_model=data["target_model"],
            kb_artifact_id=data["kb_artifact_id"],
        )
    if kind == "experiment_output":
        return models.ExperimentOutput(
            responses=tuple(_response_from_json(r) for r in data["responses"])
        )
    if kind == "evaluation_spec":
        return models.EvaluationSpec(
            evaluation_name=data["evaluation_name"],
            prompt_identifier=data["prompt_identifier"],
            prompt_content=data["prompt_content"],
            evaluation_outcomes=tuple(data["evaluation_outcomes"]),
            tag_name=data["tag_name"],
            uses_expected_answer=data["uses_expected_answer"],
        )
    if kind == "evaluated_output":
        return models.EvaluatedOutput(
            entries=tuple(
                models.EvaluatedResponse(
                    question_id=e["question_id"],
                    outcomes=dict(e["outcomes"]),
                    judge_model=e["judge_model"],
                    judge_raw=dict(e["judge_raw"]),
                )
                for e in data["entries"]
            )
        )
    if kind == "label_session":
        return session_from_json(data)
    raise SchemaError(f"unknown artifact kind {kind!r}")


def _validate_payload(kind: str, payload: Any, metadata: dict[str, Any]) -> None:
    if kind == "source_document":
        models.validate_source_document(payload)
    elif kind == "fact_list":
        models.validate_fact_list(payload)
    elif kind == "qa_set":
        models.validate_qa_set(
            payload, ground_truth_absent=metadata.get("ground_truth") == "absent"
        )
    elif kind == "experiment_spec":
        models.validate_experiment_spec(payload)
    elif kind == "experiment_output":
        models.validate_experiment_output(payload)
    elif kind == "evaluation_spec":
        models.validate_evaluation_spec(payload)
    elif kind == "evaluated_output":
        models.validate_evaluated_output(payload)
    elif kind == "label_session":
        models.validate_label_session(payload)


def validate_artifact(artifact: Artifact) -> None:
    _validate_header(artifact.header)
    _validate_payload(artifact.header.kind, artifact.payload, artifact.header.metadata)


def artifact_to_json(artifact: Artifact) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "header": {
            "artifact_id": artifact.header.artifact_id,
            "kind": artifact.header.kind,
            "created_at": artifact.header.created_at,
            "creator": artifact.header.creator,
            "upstream_ids": list(artifact.header.upstream_ids),
            "metadata": dict(artifact.header.metadata),
        },
        "payload": _payload_to_json(artifact.header.kind, artifact.payload),
    }


def artifact_from_json(data: dict) -> Artifact:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {data.get('schema_version')!r}")
    h = data["header"]
    header = ArtifactHeader(
        artifact_id=h["artifact_id"],
        kind=h["kind"],
        created_at=h["created_at"],
        creator=h["creator"],
        upstream_ids=tuple(h["upstream_ids"]),
        metadata=dict(h["metadata"]),
    )
    return Artifact(header=header, payload=_payload_from_json(header.kind, data["payload"]))


def write_json_atomic(path: Path, data: dict) -> None:
    """Serialize to a temp file in the target directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, sort_keys=True, ensure_ascii=False, indent=1)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
        os.replace(tmp_name, path)
    except OSError as exc:
        raise StorageError(f"failed writing {path}: {exc}") from exc
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)


class ArtifactStore:
    """Handle on a store root. Values are immutable; writers must be
    externally serialized (single-writer contract); readers are free.

    `clock` and `id_factory` are injectable so pipelines can produce
    byte-identical artifacts under a fixed seed and clock.
    """

    def __init__(
        self,
        root: str | Path,
        clock: Callable[[], str] | None = None,
        id_factory: Callable[[], str] | None = None,
        creator: str = TOOL_VERSION,
    ):
        self.root = Path(root)
        self.clock = clock or utc_now_rfc3339
        self.id_factory = id_factory or new_artifact_id
        self.creator = creator

    # -- header construction ------------------------------------------------

    def new_header(
        self,
        kind: str,
        upstream_ids: list[str] | tuple[str, ...] = (),
        metadata: dict[str, Any] | None = None,
        artifact_id: str | None = None,
    ) -> ArtifactHeader:
        return ArtifactHeader(
            artifact_id=artifact_id or self.id_factory(),
            kind=kind,
            created_at=self.clock(),
            creator=self.creator,
            upstream_ids=tuple(upstream_ids),
            metadata=dict(metadata or {}),
        )

    # -- lookup --------------------------------------------------------------

    def path_for(self, kind: str, artifact_id: str) -> Path:
        return self.root / kind / f"{artifact_id}.json"

    def find(self, artifact_id: str) -> Path | None:
        for kind in KINDS:
            candidate = self.path_for(kind, artifact_id)
            if candidate.exists():
                return candidate
        return None

    def list_ids(self, kind: str) -> list[str]:
        kind_dir = self.root / kind
        if not kind_dir.is_dir():
            return []
        return sorted(p.stem for p in kind_dir.glob("*.json"))

    # -- save / load ---------------------------------------------------------

    def save(self, artifact: Artifact) -> ArtifactRef:
        return save_artifact(artifact, self.root)

    def load(self, artifact_id: str, expected_kind: str | None = None) -> Artifact:
        path = self.find(artifact_id)
        if path is None:
            raise LineageError(f"artifact {artifact_id} not found in store")
        return load_artifact(path, expected_kind or path.parent.name)

    def header(self, artifact_id: str) -> ArtifactHeader:
        return self.load(artifact_id).header


def save_artifact(artifact: Artifact, destination: str | Path) -> ArtifactRef:
    """Validate, then atomically write `artifact` under the store root.

    Upstream references must already exist in the destination store and be
    of a kind the artifact's pipeline stage allows.
    """
    validate_artifact(artifact)
    store = ArtifactStore(destination)
    allowed, _ = _UPSTREAM_RULES[artifact.header.kind]
    seen: set[str] = set()
    for upstream_id in artifact.header.upstream_ids:
        if upstream_id in seen:
            raise SchemaError(f"duplicate upstream id {upstream_id}")
        seen.add(upstream_id)
        path = store.find(upstream_id)
        if path is None:
            raise SchemaError(f"upstream artifact {upstream_id} not found in store")
        upstream_kind = path.parent.name
        if upstream_kind not in allowed:
            raise SchemaError(
                f"{artifact.header.kind} may not reference upstream kind {upstream_kind}"
            )
    path = store.path_for(artifact.header.kind, artifact.header.artifact_id)
    if path.exists():
        raise StorageError(f"artifact {artifact.header.artifact_id} already exists")
    write_json_atomic(path, artifact_to_json(artifact))
    return ArtifactRef(artifact_id=artifact.header.artifact_id, path=path)


def load_artifact(path: str | Path, expected_kind: str) -> Artifact:
    path = Path(path)
    if not path.exists():
        raise StorageError(f"no such artifact file: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"malformed artifact file {path}: {exc}") from exc
    artifact = artifact_from_json(data)
    if artifact.header.kind != expected_kind:
        raise KindMismatchError(
            f"expected kind {expected_kind!r}, found {artifact.header.kind!r}"
        )
    validate_artifact(artifact)
    return artifact


def trace_lineage(artifact_id: str, store_root: str | Path) -> list[ArtifactHeader]:
    """Transitive upstream closure of `artifact_id`, topologically ordered.

    The queried artifact comes first and source documents last; every
    header appears after all artifacts that depend on it. A reference that
    cannot be resolved raises LineageError naming the missing id.
    """
    store = ArtifactStore(store_root)
    headers: dict[str, ArtifactHeader] = {}
    order: list[str] = []
    visiting: set[str] = set()

    def visit(aid: str, needed_by: str | None) -> None:
        if aid in headers:
            return
        if aid in visiting:
            raise LineageError(f"lineage cycle involving {aid}")
        visiting.add(aid)
        path = store.find(aid)
        if path is None:
            owner = f" (referenced by {needed_by})" if needed_by else ""
            raise LineageError(f"lineage broken: artifact {aid} missing{owner}")
        header = load_artifact(path, path.parent.name).header
        for upstream in header.upstream_ids:
            visit(upstream, aid)
        visiting.discard(aid)
        headers[aid] = header
        order.append(aid)

    visit(artifact_id, None)
    return [headers[aid] for aid in reversed(order)]


def primary_chain(artifact_id: str, store_root: str | Path) -> list[ArtifactHeader]:
    """Follow first-upstream links from an artifact down to its root.

    By convention upstream_ids[0] is the primary data parent (config and
    spec artifacts are listed after it), so this walks the data spine.
    """
    store = ArtifactStore(store_root)
    chain: list[ArtifactHeader] = []
    current: str | None = artifact_id
    while current is not None:
        path = store.find(current)
        if path is None:
            raise LineageError(f"lineage broken: artifact {current} missing")
        header = load_artifact(path, path.parent.name).header
        chain.append(header)
        current = header.upstream_ids[0] if header.upstream_ids else None
    return chain
