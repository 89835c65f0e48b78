"""End-to-end orchestration: document in, metrics report out.

Every stage persists its artifact before the next one runs. A stage whose
output already exists in the store (same upstream ids and config hash) is
skipped, so interrupted or partially invalidated runs resume without
redoing work. Under a fixed seed and clock, artifact ids derive from the
stage identity, making resumed and fresh runs byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import evaluation, experiment, kb, prompts, retrieval
from .errors import LoobenchError, ValidationError
from .filtering import FilterConfig, apply_filters
from .gateway import ClientConfig, LlmClient, MockScript, build_client
from .models import EvaluationSpec, QASet, RetrievalStrategy
from .store import Artifact, ArtifactStore

DEFAULT_PROMPT = "basic"
DEFAULT_STRATEGY = "long_in_context"


class StageError(LoobenchError):
    """A pipeline stage failed; carries where and the last good artifact."""

    def __init__(self, stage: str, last_artifact_id: str | None, cause: Exception):
        super().__init__(
            f"stage {stage!r} failed after artifact "
            f"{last_artifact_id or '(none)'}: {cause}"
        )
        self.stage = stage
        self.last_artifact_id = last_artifact_id
        self.cause = cause


@dataclass
class PipelineConfig:
    store_root: Path
    clients: dict[str, ClientConfig]
    scripts: dict[str, MockScript] = field(default_factory=dict)
    default_client: str = "default"
    prompt: str = DEFAULT_PROMPT
    strategy: str = DEFAULT_STRATEGY
    k: int = 5
    hyde_answer_count: int = 3
    batch_size: int = 50
    filters: FilterConfig = field(default_factory=FilterConfig)
    seed: int | None = None
    fixed_clock: str | None = None
    domain: str | None = None

    def __post_init__(self):
        if self.default_client not in self.clients:
            raise ValidationError(
                f"default client {self.default_client!r} not among clients "
                f"{sorted(self.clients)}"
            )


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Read a PipelineConfig from its JSON file form."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    clients: dict[str, ClientConfig] = {}
    scripts: dict[str, MockScript] = {}
    for name, raw in data.get("clients", {}).items():
        raw = dict(raw)
        script_map = raw.pop("script", None)
        fallback = raw.pop("fallback", None)
        clients[name] = ClientConfig(**raw)
        if script_map is not None or fallback is not None:
            scripts[name] = MockScript(chat_map=script_map or {}, fallback=fallback)
    defaults = data.get("defaults", {})
    filters = FilterConfig(
        keyword_threshold=defaults.get("keyword_threshold", 0.3),
        semantic_threshold=defaults.get("semantic_threshold", 0.3),
        apply_keyword=defaults.get("apply_keyword", True),
        apply_semantic=defaults.get("apply_semantic", True),
    )
    return PipelineConfig(
        store_root=Path(data["store_root"]),
        clients=clients,
        scripts=scripts,
        default_client=data.get("default_client", next(iter(clients), "default")),
        prompt=defaults.get("prompt", DEFAULT_PROMPT),
        strategy=defaults.get("strategy", DEFAULT_STRATEGY),
        k=defaults.get("k", 5),
        hyde_answer_count=defaults.get("hyde_answer_count", 3),
        batch_size=defaults.get("batch_size", 50),
        filters=filters,
        seed=data.get("seed"),
        fixed_clock=data.get("fixed_clock"),
        domain=data.get("domain"),
    )


def config_hash(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def stage_artifact_id(
    seed: int | None, kind: str, conf_hash: str, upstream_ids: Sequence[str]
) -> str | None:
    """Deterministic id under a seed, stable across resumes; None lets the
    store pick a random id."""
    if seed is None:
        return None
    data = f"{seed}|{kind}|{conf_hash}|{','.join(upstream_ids)}"
    return hashlib.sha256(data.encode("utf-8")).hexdigest()[:32]


def build_store(config: PipelineConfig) -> ArtifactStore:
    clock = (lambda: config.fixed_clock) if config.fixed_clock else None
    return ArtifactStore(config.store_root, clock=clock)


def make_client(config: PipelineConfig, name: str | None = None) -> LlmClient:
    chosen = name or config.default_client
    if chosen not in config.clients:
        raise ValidationError(f"no client named {chosen!r} in config")
    return build_client(config.clients[chosen], script=config.scripts.get(chosen))


@dataclass
class StageRecord:
    stage: str
    status: str  # executed | skipped
    artifact_ids: list[str]


@dataclass
class RunReport:
    stages: list[StageRecord]
    report_json: Path | None = None
    report_text: Path | None = None

    def artifact_id(self, stage: str) -> str:
        for record in self.stages:
            if record.stage == stage:
                return record.artifact_ids[-1]
        raise KeyError(stage)

    def status(self, stage: str) -> str:
        for record in self.stages:
            if record.stage == stage:
                return record.status
        raise KeyError(stage)


def _find_existing(
    store: ArtifactStore, kind: str, upstream_ids: Sequence[str], conf_hash: str
) -> Artifact | None:
    for artifact_id in store.list_ids(kind):
        artifact = store.load(artifact_id, kind)
        if (
            tuple(artifact.header.upstream_ids) == tuple(upstream_ids)
            and artifact.header.metadata.get("config_hash") == conf_hash
        ):
            return artifact
    return None


def run_pipeline(
    config: PipelineConfig,
    source_path: str | Path,
    title: str | None = None,
    prompt_name: str | None = None,
    strategy_kind: str | None = None,
    eval_specs: Sequence[EvaluationSpec] | None = None,
    client_name: str | None = None,
) -> RunReport:
    """Run source -> facts -> questions -> filter -> experiment ->
    evaluation -> report, persisting and resuming at every stage."""
    source_path = Path(source_path)
    store = build_store(config)
    client = make_client(config, client_name)
    title = title or source_path.stem
    prompt_name = prompt_name or config.prompt
    strategy_kind = strategy_kind or config.strategy
    if prompt_name not in prompts.BUILTIN_PROMPTS:
        raise ValidationError(
            f"unknown prompt {prompt_name!r}; builtins: {sorted(prompts.BUILTIN_PROMPTS)}"
        )
    prompt = prompts.BUILTIN_PROMPTS[prompt_name]
    strategy = RetrievalStrategy(
        kind=strategy_kind, k=config.k, hyde_answer_count=config.hyde_answer_count
    )
    reason = experiment.validate_config(prompt, strategy)
    if reason:
        raise StageError("create-experiment", None, ValidationError(reason))

    stages: list[StageRecord] = []
    last_artifact: str | None = None
    domain_meta = {"domain": config.domain} if config.domain else {}

    def run_stage(stage: str, kind: str, upstream: Sequence[str], conf: dict, builder):
        nonlocal last_artifact
        conf_hash = config_hash(conf)
        existing = _find_existing(store, kind, upstream, conf_hash)
        if existing is not None:
            stages.append(StageRecord(stage, "skipped", [existing.header.artifact_id]))
            last_artifact = existing.header.artifact_id
            return existing
        try:
            artifact = builder(
                conf_hash, stage_artifact_id(config.seed, kind, conf_hash, upstream)
            )
            store.save(artifact)
        except LoobenchError as exc:
            raise StageError(stage, last_artifact, exc) from exc
        stages.append(StageRecord(stage, "executed", [artifact.header.artifact_id]))
        last_artifact = artifact.header.artifact_id
        return artifact

    is_faq = source_path.suffix == ".jsonl"
    body = source_path.read_text(encoding="utf-8")

    # Stage: source document (plus facts and questions for the FAQ route,
    # where existing QA pairs bypass LLM extraction).
    if is_faq:
        entries = kb.load_faq_entries(source_path)
        faq_conf = {"title": title, "entries": entries}
        doc_artifact = run_stage(
            "source",
            "source_document",
            (),
            faq_conf,
            lambda h, aid: _faq_document(store, title, entries, h, aid, domain_meta),
        )
        fact_artifact = run_stage(
            "extract-facts",
            "fact_list",
            (doc_artifact.header.artifact_id,),
            faq_conf,
            lambda h, aid: _faq_facts(store, doc_artifact, entries, h, aid, domain_meta),
        )
        qa_artifact = run_stage(
            "generate-questions",
            "qa_set",
            (fact_artifact.header.artifact_id,),
            faq_conf,
            lambda h, aid: _faq_pairs(store, fact_artifact, entries, h, aid, domain_meta),
        )
    else:
        doc_artifact = run_stage(
            "source",
            "source_document",
            (),
            {"title": title, "body": body},
            lambda h, aid: kb.build_source_document(
                title, body, store, {"config_hash": h, **domain_meta}, artifact_id=aid
            ),
        )
        fact_config = kb.FactExtractionConfig(batch_size=config.batch_size)
        fact_artifact = run_stage(
            "extract-facts",
            "fact_list",
            (doc_artifact.header.artifact_id,),
            {
                "prompt_identifier": fact_config.prompt_identifier,
                "prompt_text": fact_config.prompt_text,
                "batch_size": fact_config.batch_size,
                "model": client.config.model,
            },
            lambda h, aid: kb.extract_facts(
                doc_artifact, fact_config, client, store,
                {"config_hash": h, **domain_meta}, artifact_id=aid,
            ),
        )
        qa_config = kb.QAGenConfig()
        qa_artifact = run_stage(
            "generate-questions",
            "qa_set",
            (fact_artifact.header.artifact_id,),
            {
                "prompt_identifier": qa_config.prompt_identifier,
                "prompt_text": qa_config.prompt_text,
                "model": client.config.model,
            },
            lambda h, aid: kb.generate_qa_set(
                fact_artifact, qa_config, client, store,
                {"config_hash": h, **domain_meta}, artifact_id=aid,
            ),
        )

    kb_artifact = run_stage(
        "filter",
        "qa_set",
        (qa_artifact.header.artifact_id,),
        {
            "keyword_threshold": config.filters.keyword_threshold,
            "semantic_threshold": config.filters.semantic_threshold,
            "apply_keyword": config.filters.apply_keyword,
            "apply_semantic": config.filters.apply_semantic,
            "embedding_model": client.config.embedding_model or client.config.model,
        },
        lambda h, aid: curate_qa_set(
            store, qa_artifact, config.filters, client,
            {"config_hash": h, **domain_meta}, artifact_id=aid,
        ),
    )

    spec_artifact = run_stage(
        "create-experiment",
        "experiment_spec",
        (kb_artifact.header.artifact_id,),
        {
            "prompt_identifier": prompt.identifier,
            "prompt_text": prompt.text,
            "strategy": strategy.kind,
            "k": strategy.k,
            "hyde_answer_count": strategy.hyde_answer_count,
            "model": client.config.model,
        },
        lambda h, aid: experiment.create_experiment_spec(
            store, kb_artifact, prompt, strategy, client.config.model,
            {"config_hash": h, **domain_meta}, artifact_id=aid,
        ),
    )

    output_artifact = run_stage(
        "run-experiment",
        "experiment_output",
        (kb_artifact.header.artifact_id, spec_artifact.header.artifact_id),
        {"spec": spec_artifact.header.metadata.get("config_hash", ""), "model": client.config.model},
        lambda h, aid: experiment.run_experiment(
            spec_artifact, client, store,
            extra_metadata={"config_hash": h, **domain_meta}, artifact_id=aid,
        ),
    )

    specs = list(eval_specs) if eval_specs is not None else [
        evaluation.default_abstention_spec(),
        evaluation.default_factuality_spec(),
    ]
    spec_artifacts = []
    for spec in specs:
        spec_artifacts.append(
            run_stage(
                f"evaluation-spec:{spec.evaluation_name}",
                "evaluation_spec",
                (),
                {
                    "evaluation_name": spec.evaluation_name,
                    "prompt_identifier": spec.prompt_identifier,
                    "prompt_content": spec.prompt_content,
                    "outcomes": list(spec.evaluation_outcomes),
                    "tag_name": spec.tag_name,
                    "uses_expected_answer": spec.uses_expected_answer,
                },
                lambda h, aid, s=spec: evaluation.evaluation_spec_artifact(
                    store, s, {"config_hash": h}, artifact_id=aid
                ),
            )
        )

    evaluated_artifact = run_stage(
        "evaluate",
        "evaluated_output",
        (output_artifact.header.artifact_id,)
        + tuple(a.header.artifact_id for a in spec_artifacts),
        {"judge_model": client.config.model},
        lambda h, aid: evaluation.evaluate_responses(
            output_artifact, spec_artifacts, client, store,
            extra_metadata={"config_hash": h, **domain_meta}, artifact_id=aid,
        ),
    )

    # Report files are not artifacts; regenerate whenever evaluation did.
    report_dir = store.root / "reports"
    json_path = report_dir / f"report-{evaluated_artifact.header.artifact_id}.json"
    text_path = report_dir / f"report-{evaluated_artifact.header.artifact_id}.txt"
    evaluate_skipped = stages[-1].status == "skipped"
    if evaluate_skipped and json_path.exists() and text_path.exists():
        stages.append(StageRecord("report", "skipped", [evaluated_artifact.header.artifact_id]))
    else:
        metrics = evaluation.build_metrics(evaluated_artifact)
        report_dir.mkdir(parents=True, exist_ok=True)
        json_path.write_text(
            json.dumps(
                {
                    "evaluated_artifact_id": evaluated_artifact.header.artifact_id,
                    "metrics": metrics.to_json(),
                },
                indent=1,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        text_path.write_text(
            evaluation.render_metrics_table([metrics]) + "\n", encoding="utf-8"
        )
        stages.append(StageRecord("report", "executed", [evaluated_artifact.header.artifact_id]))

    return RunReport(stages=stages, report_json=json_path, report_text=text_path)


def curate_qa_set(
    store: ArtifactStore,
    qa_artifact: Artifact,
    filters: FilterConfig,
    client: LlmClient,
    extra_metadata: dict[str, Any] | None = None,
    artifact_id: str | None = None,
) -> Artifact:
    """Filter a raw qa_set into the curated knowledge base, embeddings
    attached so retrieval strategies can rank against it later."""
    pairs = list(qa_artifact.payload.pairs)
    embedded = retrieval.ensure_embeddings(pairs, client)
    retained = apply_filters(
        embedded, filters, [p.embedding for p in embedded]
    )
    header = store.new_header(
        "qa_set",
        (qa_artifact.header.artifact_id,),
        {
            "prompt_identifier": qa_artifact.header.metadata.get("prompt_identifier", ""),
            "model": qa_artifact.header.metadata.get("model", ""),
            "ground_truth": qa_artifact.header.metadata.get("ground_truth", "present"),
            "keyword_threshold": filters.keyword_threshold,
            "semantic_threshold": filters.semantic_threshold,
            "pairs_before": len(pairs),
            "pairs_after": len(retained),
            **(extra_metadata or {}),
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=QASet(pairs=tuple(retained)))


def _faq_document(store, title, entries, conf_hash, artifact_id, domain_meta):
    from .models import Sentence, SourceDocument

    lines = [f"Q: {q} A: {a}" for q, a in entries]
    doc = SourceDocument(
        title=title,
        body="\n".join(lines),
        sentences=tuple(Sentence(index=i, text=line) for i, line in enumerate(lines, 1)),
    )
    header = store.new_header(
        "source_document",
        (),
        {"title": title, "config_hash": conf_hash, **domain_meta},
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=doc)


def _faq_facts(store, doc_artifact, entries, conf_hash, artifact_id, domain_meta):
    from .models import AtomicFact, FactList

    facts = tuple(
        AtomicFact(fact_id=i, text=f"{q} {a}", source_sentence=i)
        for i, (q, a) in enumerate(entries, 1)
    )
    header = store.new_header(
        "fact_list",
        (doc_artifact.header.artifact_id,),
        {
            "prompt_identifier": "direct_faq",
            "model": "none",
            "config_hash": conf_hash,
            **domain_meta,
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=FactList(facts=facts))


def _faq_pairs(store, fact_artifact, entries, conf_hash, artifact_id, domain_meta):
    from .models import QAPair

    pairs = tuple(
        QAPair(pair_id=i, question=q, answer=a, source_fact_id=i)
        for i, (q, a) in enumerate(entries, 1)
    )
    header = store.new_header(
        "qa_set",
        (fact_artifact.header.artifact_id,),
        {
            "prompt_identifier": "direct_faq",
            "model": "none",
            "ground_truth": "present",
            "config_hash": conf_hash,
            **domain_meta,
        },
        artifact_id=artifact_id,
    )
    return Artifact(header=header, payload=QASet(pairs=pairs))
