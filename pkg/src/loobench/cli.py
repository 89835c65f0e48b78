"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 provider error, 4 storage
error. Most commands want --config pointing at a PipelineConfig JSON file;
--store alone suffices for read-only commands.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, experiment, kb, prompts
from .errors import (
    LoobenchError,
    ProviderError,
    SchemaError,
    StorageError,
    ValidationError,
)
from .filtering import FilterConfig
from .gateway import ClientConfig
from .labeling import (
    LabelSession,
    checkpoint_session,
    consensus_artifact,
    consensus_vs_auto,
    load_session,
    stratified_sample,
)
from .label_server import DEFAULT_HOST, DEFAULT_PORT, LabelServer
from .label_tui import prompt_resolutions, render_agreement, run_annotator_queue
from .models import LabelSchema, RetrievalStrategy
from .pipeline import (
    PipelineConfig,
    StageError,
    build_store,
    curate_qa_set,
    load_pipeline_config,
    make_client,
    run_pipeline,
)
from .store import ArtifactStore, trace_lineage


def _build_config(args) -> PipelineConfig:
    if args.config:
        config = load_pipeline_config(args.config)
    elif args.store:
        config = PipelineConfig(
            store_root=Path(args.store),
            clients={"default": ClientConfig(provider="mock", model="mock")},
            default_client="default",
        )
    else:
        raise ValidationError("either --config or --store is required")
    if args.store:
        config.store_root = Path(args.store)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _session_seed(config: PipelineConfig) -> int:
    return config.seed if config.seed is not None else 0


def cmd_extract_facts(args, config: PipelineConfig) -> int:
    store = build_store(config)
    client = make_client(config, args.client)
    source = Path(args.source)
    title = args.title or source.stem
    if source.suffix == ".jsonl":
        doc, facts, pairs = kb.ingest_faq(title, source, store)
        for artifact in (doc, facts, pairs):
            store.save(artifact)
        print(f"source_document {doc.header.artifact_id}")
        print(f"fact_list {facts.header.artifact_id}")
        print(f"qa_set {pairs.header.artifact_id}")
        return 0
    doc = kb.build_source_document(title, source.read_text(encoding="utf-8"), store)
    store.save(doc)
    facts = kb.extract_facts(
        doc, kb.FactExtractionConfig(batch_size=args.batch_size), client, store
    )
    store.save(facts)
    print(f"source_document {doc.header.artifact_id}")
    print(f"fact_list {facts.header.artifact_id}")
    return 0


def cmd_generate_questions(args, config: PipelineConfig) -> int:
    store = build_store(config)
    client = make_client(config, args.client)
    facts = store.load(args.facts, "fact_list")
    qa = kb.generate_qa_set(facts, kb.QAGenConfig(), client, store)
    store.save(qa)
    print(f"qa_set {qa.header.artifact_id}")
    return 0


def cmd_filter(args, config: PipelineConfig) -> int:
    store = build_store(config)
    client = make_client(config, args.client)
    raw = store.load(args.qa, "qa_set")
    filters = FilterConfig(
        keyword_threshold=args.keyword_threshold,
        semantic_threshold=args.semantic_threshold,
        apply_keyword=not args.no_keyword,
        apply_semantic=not args.no_semantic,
    )
    curated = curate_qa_set(store, raw, filters, client)
    store.save(curated)
    before = curated.header.metadata["pairs_before"]
    after = curated.header.metadata["pairs_after"]
    print(f"qa_set {curated.header.artifact_id} ({before} -> {after} pairs)")
    return 0


def cmd_create_experiment(args, config: PipelineConfig) -> int:
    store = build_store(config)
    kb_artifact = store.load(args.kb, "qa_set")
    if args.prompt not in prompts.BUILTIN_PROMPTS:
        raise ValidationError(
            f"unknown prompt {args.prompt!r}; builtins: {sorted(prompts.BUILTIN_PROMPTS)}"
        )
    prompt = prompts.BUILTIN_PROMPTS[args.prompt]
    strategy = RetrievalStrategy(kind=args.strategy, k=args.k)
    client = make_client(config, args.client)
    spec = experiment.create_experiment_spec(
        store, kb_artifact, prompt, strategy, client.config.model
    )
    store.save(spec)
    print(f"experiment_spec {spec.header.artifact_id}")
    return 0


def cmd_run_experiment(args, config: PipelineConfig) -> int:
    store = build_store(config)
    client = make_client(config, args.client)
    spec = store.load(args.spec, "experiment_spec")
    output = experiment.run_experiment(spec, client, store)
    store.save(output)
    print(f"experiment_output {output.header.artifact_id}")
    return 0


def cmd_evaluate(args, config: PipelineConfig) -> int:
    store = build_store(config)
    judge = make_client(config, args.client)
    output = store.load(args.output, "experiment_output")
    specs = [evaluation.default_abstention_spec()]
    if not args.skip_factuality:
        specs.append(evaluation.default_factuality_spec())
    spec_artifacts = []
    for spec in specs:
        artifact = evaluation.evaluation_spec_artifact(store, spec)
        store.save(artifact)
        spec_artifacts.append(artifact)
    evaluated = evaluation.evaluate_responses(output, spec_artifacts, judge, store)
    store.save(evaluated)
    print(f"evaluated_output {evaluated.header.artifact_id}")
    return 0


def cmd_sample(args, config: PipelineConfig) -> int:
    store = build_store(config)
    artifacts = [store.load(i, "evaluated_output") for i in args.evaluated]
    dimensions = [d for d in args.dimensions.split(",") if d] if args.dimensions else []
    items = stratified_sample(
        artifacts, dimensions, args.n, _session_seed(config), store
    )
    spec = _find_schema(store, artifacts, args.evaluation)
    session = LabelSession.create(
        items,
        [a for a in args.annotators.split(",") if a],
        spec,
        seed=_session_seed(config),
    )
    checkpoint_session(store, session)
    print(f"label_session {session.session_id} ({len(items)} items)")
    return 0


def _find_schema(store: ArtifactStore, artifacts, evaluation_name: str) -> LabelSchema:
    for artifact in artifacts:
        for upstream in artifact.header.upstream_ids:
            path = store.find(upstream)
            if path is not None and path.parent.name == "evaluation_spec":
                spec = store.load(upstream, "evaluation_spec").payload
                if spec.evaluation_name == evaluation_name:
                    return LabelSchema(
                        evaluation_name=spec.evaluation_name,
                        outcomes=spec.evaluation_outcomes,
                        tag_name=spec.tag_name,
                    )
    for default in (evaluation.default_abstention_spec(), evaluation.default_factuality_spec()):
        if default.evaluation_name == evaluation_name:
            return LabelSchema(
                evaluation_name=default.evaluation_name,
                outcomes=default.evaluation_outcomes,
                tag_name=default.tag_name,
            )
    raise ValidationError(f"no evaluation spec named {evaluation_name!r} found")


def cmd_label_serve(args, config: PipelineConfig) -> int:
    store = build_store(config)
    session = load_session(store, args.session)
    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = Path("frontend/dist")
        ui_dir = candidate if candidate.is_dir() else None
    server = LabelServer(
        session, store, host=args.host, port=args.port, ui_dir=ui_dir
    )
    host, port = server.address
    print(f"labeling server on http://{host}:{port}/ (Ctrl+C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_label_tui(args, config: PipelineConfig) -> int:
    store = build_store(config)
    session = load_session(store, args.session)
    run_annotator_queue(session, args.annotator, store, sys.stdin, sys.stdout)
    return 0


def cmd_consensus(args, config: PipelineConfig) -> int:
    store = build_store(config)
    session = load_session(store, args.session)
    resolutions: dict[str, str] = {}
    for pair in args.resolve or []:
        if "=" not in pair:
            raise ValidationError(f"--resolve expects ITEM=OUTCOME, got {pair!r}")
        item_id, outcome = pair.split("=", 1)
        resolutions[item_id] = outcome
    if args.interactive:
        resolutions.update(prompt_resolutions(session, sys.stdin, sys.stdout))
    artifact = consensus_artifact(store, session, resolutions)
    ref = store.save(artifact)
    checkpoint_session(store, session)
    print(render_agreement(session.agreement()))
    print(f"label_session {ref.artifact_id}")
    return 0


def cmd_validate_evaluator(args, config: PipelineConfig) -> int:
    store = build_store(config)
    artifact = store.load(args.consensus, "label_session")
    auto, human = consensus_vs_auto(artifact)
    report = evaluation.validate_evaluator(auto, human, args.positive)
    print(json.dumps(report.to_json(), indent=1, sort_keys=True))
    return 0


def cmd_report(args, config: PipelineConfig) -> int:
    store = build_store(config)
    reports = [
        evaluation.build_metrics(store.load(i, "evaluated_output"))
        for i in args.evaluated
    ]
    print(evaluation.render_metrics_table(reports))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            evaluation.reports_to_json(reports) + "\n", encoding="utf-8"
        )
        (out_dir / "metrics.txt").write_text(
            evaluation.render_metrics_table(reports) + "\n", encoding="utf-8"
        )
        print(f"wrote {out_dir / 'metrics.json'}")
    return 0


def cmd_pipeline(args, config: PipelineConfig) -> int:
    report = run_pipeline(
        config,
        args.source,
        title=args.title,
        prompt_name=args.prompt,
        strategy_kind=args.strategy,
        client_name=args.client,
    )
    for record in report.stages:
        ids = " ".join(record.artifact_ids)
        print(f"{record.stage}: {record.status} {ids}")
    if report.report_json:
        print(f"report file: {report.report_json}")
    return 0


def cmd_lineage(args, config: PipelineConfig) -> int:
    store = build_store(config)
    for header in trace_lineage(args.artifact, store.root):
        print(f"{header.kind} {header.artifact_id} <- {list(header.upstream_ids)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loobench",
        description="Build grounded QA benchmarks and measure out-of-knowledge-base "
        "robustness with leave-one-out experiments.",
    )
    parser.add_argument("--store", help="artifact store root (overrides config)")
    parser.add_argument("--config", help="PipelineConfig JSON file")
    parser.add_argument("--seed", type=int, help="seed for sampling and artifact ids")
    parser.add_argument("--client", help="named client from the config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-facts", help="ingest a document and extract atomic facts")
    p.add_argument("--source", required=True)
    p.add_argument("--title")
    p.add_argument("--batch-size", type=int, default=50)
    p.set_defaults(fn=cmd_extract_facts)

    p = sub.add_parser("generate-questions", help="one QA pair per fact")
    p.add_argument("--facts", required=True, help="fact_list artifact id")
    p.set_defaults(fn=cmd_generate_questions)

    p = sub.add_parser("filter", help="diversity-filter a qa_set into a knowledge base")
    p.add_argument("--qa", required=True, help="qa_set artifact id")
    p.add_argument("--keyword-threshold", type=float, default=0.3)
    p.add_argument("--semantic-threshold", type=float, default=0.3)
    p.add_argument("--no-keyword", action="store_true")
    p.add_argument("--no-semantic", action="store_true")
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("create-experiment", help="freeze prompt/strategy/model/KB")
    p.add_argument("--kb", required=True, help="curated qa_set artifact id")
    p.add_argument("--prompt", default="basic")
    p.add_argument("--strategy", default="long_in_context")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(fn=cmd_create_experiment)

    p = sub.add_parser("run-experiment", help="run the leave-one-out sweep")
    p.add_argument("--spec", required=True, help="experiment_spec artifact id")
    p.set_defaults(fn=cmd_run_experiment)

    p = sub.add_parser("evaluate", help="judge responses for abstention and factuality")
    p.add_argument("--output", required=True, help="experiment_output artifact id")
    p.add_argument("--skip-factuality", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sample", help="stratified-sample items into a label session")
    p.add_argument("--evaluated", nargs="+", required=True)
    p.add_argument("--dimensions", default="")
    p.add_argument("--n", type=int, required=True, help="items per stratum")
    p.add_argument("--annotators", required=True, help="comma-separated ids")
    p.add_argument("--evaluation", default=evaluation.ABSTENTION_CHECK)
    p.set_defaults(fn=cmd_sample)

    label = sub.add_parser("label", help="annotate a session").add_subparsers(
        dest="label_command", required=True
    )
    p = label.add_parser("serve", help="HTTP API plus browser UI")
    p.add_argument("--session", required=True)
    p.add_argument("--host", default=DEFAULT_HOST)
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--ui-dir")
    p.set_defaults(fn=cmd_label_serve)
    p = label.add_parser("tui", help="terminal labeling flow")
    p.add_argument("--session", required=True)
    p.add_argument("--annotator", required=True)
    p.set_defaults(fn=cmd_label_tui)

    p = sub.add_parser("consensus", help="resolve disagreements, freeze consensus labels")
    p.add_argument("--session", required=True)
    p.add_argument("--resolve", action="append", metavar="ITEM=OUTCOME")
    p.add_argument("--interactive", action="store_true")
    p.set_defaults(fn=cmd_consensus)

    p = sub.add_parser("validate-evaluator", help="confusion report: judge vs consensus")
    p.add_argument("--consensus", required=True, help="label_session artifact id")
    p.add_argument("--positive", required=True, help="positive outcome class")
    p.set_defaults(fn=cmd_validate_evaluator)

    p = sub.add_parser("report", help="metrics table over evaluated outputs")
    p.add_argument("--evaluated", nargs="+", required=True)
    p.add_argument("--out", help="directory for metrics.json / metrics.txt")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("pipeline", help="document to report in one run, resumable")
    p.add_argument("--source", required=True)
    p.add_argument("--title")
    p.add_argument("--prompt")
    p.add_argument("--strategy")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("lineage", help="print the upstream closure of an artifact")
    p.add_argument("--artifact", required=True)
    p.set_defaults(fn=cmd_lineage)

    return parser


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, ProviderError):
        return 3
    if isinstance(exc, (StorageError, OSError)):
        return 4
    if isinstance(exc, (ValidationError, SchemaError, LoobenchError)):
        return 2
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
        return args.fn(args, config)
    except (LoobenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
