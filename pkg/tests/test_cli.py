import io
import json
import re
import sys

import pytest

from loobench.cli import main
from loobench.labeling import load_session
from loobench.pipeline import load_pipeline_config
from loobench.store import ArtifactStore

from pipeline_fixture import write_demo_pipeline


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def demo_pipeline_via_cli(tmp_path, capsys):
    config_path, source_path = write_demo_pipeline(tmp_path)
    code, out, err = run_cli(
        ["--config", str(config_path), "pipeline", "--source", str(source_path)],
        capsys,
    )
    assert code == 0, err
    return config_path, out


def test_pipeline_subcommand(tmp_path, capsys):
    config_path, out = demo_pipeline_via_cli(tmp_path, capsys)
    assert "evaluate: executed" in out
    assert "report:" in out


def test_pipeline_invalid_combo_exit_2(tmp_path, capsys):
    config_path, source_path = write_demo_pipeline(tmp_path)
    code, out, err = run_cli(
        [
            "--config", str(config_path),
            "pipeline", "--source", str(source_path),
            "--prompt", "conservative", "--strategy", "direct",
        ],
        capsys,
    )
    assert code == 2
    assert "create-experiment" in err


def test_provider_error_exit_3(tmp_path, capsys):
    config_path, source_path = write_demo_pipeline(tmp_path / "x")
    config = json.loads(config_path.read_text())
    config["clients"]["mock"]["script"] = {}
    config["store_root"] = str(tmp_path / "emptystore")
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(config))
    code, out, err = run_cli(
        ["--config", str(broken), "extract-facts", "--source", str(source_path)],
        capsys,
    )
    assert code == 3


def test_unknown_artifact_exit_2(tmp_path, capsys):
    config_path, _ = write_demo_pipeline(tmp_path)
    code, out, err = run_cli(
        ["--config", str(config_path), "generate-questions", "--facts", "f" * 32],
        capsys,
    )
    assert code == 2


def test_missing_store_and_config_exit_2(tmp_path, capsys):
    code, out, err = run_cli(["lineage", "--artifact", "x" * 32], capsys)
    assert code == 2


def test_storage_error_exit_4(tmp_path, capsys):
    config_path, _ = write_demo_pipeline(tmp_path)
    code, out, err = run_cli(
        [
            "--config", str(config_path),
            "label", "tui", "--session", "missing", "--annotator", "a",
        ],
        capsys,
    )
    assert code == 4


def test_report_and_lineage_subcommands(tmp_path, capsys):
    config_path, out = demo_pipeline_via_cli(tmp_path, capsys)
    evaluated_id = re.search(r"evaluate: executed (\w+)", out).group(1)
    code, out, err = run_cli(
        [
            "--config", str(config_path),
            "report", "--evaluated", evaluated_id, "--out", str(tmp_path / "rep"),
        ],
        capsys,
    )
    assert code == 0
    assert "Abstention (%)" in out
    metrics = json.loads((tmp_path / "rep" / "metrics.json").read_text())
    assert metrics[0]["abstention_rate"] == 50.0

    code, out, err = run_cli(
        ["--config", str(config_path), "lineage", "--artifact", evaluated_id], capsys
    )
    assert code == 0
    assert "source_document" in out


def test_stepwise_cli_flow(tmp_path, capsys):
    """extract-facts -> generate-questions -> filter -> create-experiment ->
    run-experiment -> evaluate, driving each subcommand separately."""
    config_path, source_path = write_demo_pipeline(tmp_path)
    code, out, _ = run_cli(
        ["--config", str(config_path), "extract-facts", "--source", str(source_path)],
        capsys,
    )
    assert code == 0
    facts_id = re.search(r"fact_list (\w+)", out).group(1)

    code, out, _ = run_cli(
        ["--config", str(config_path), "generate-questions", "--facts", facts_id],
        capsys,
    )
    assert code == 0
    qa_id = re.search(r"qa_set (\w+)", out).group(1)

    code, out, _ = run_cli(
        [
            "--config", str(config_path), "filter", "--qa", qa_id,
            "--keyword-threshold", "0.0", "--semantic-threshold", "0.3",
        ],
        capsys,
    )
    assert code == 0
    kb_id = re.search(r"qa_set (\w+)", out).group(1)

    code, out, _ = run_cli(
        [
            "--config", str(config_path), "create-experiment", "--kb", kb_id,
            "--prompt", "basic", "--strategy", "long_in_context",
        ],
        capsys,
    )
    assert code == 0
    spec_id = re.search(r"experiment_spec (\w+)", out).group(1)

    code, out, _ = run_cli(
        ["--config", str(config_path), "run-experiment", "--spec", spec_id], capsys
    )
    assert code == 0
    output_id = re.search(r"experiment_output (\w+)", out).group(1)

    code, out, _ = run_cli(
        ["--config", str(config_path), "evaluate", "--output", output_id], capsys
    )
    assert code == 0
    assert re.search(r"evaluated_output (\w+)", out)


def tui_inputs(labels):
    return io.StringIO("".join(f"{n}\n" for n in labels))


def test_label_tui_full_flow(tmp_path, capsys, monkeypatch):
    config_path, out = demo_pipeline_via_cli(tmp_path, capsys)
    evaluated_id = re.search(r"evaluate: executed (\w+)", out).group(1)
    config = load_pipeline_config(config_path)
    store = ArtifactStore(config.store_root)

    code, out, _ = run_cli(
        [
            "--config", str(config_path), "--seed", "7",
            "sample", "--evaluated", evaluated_id,
            "--dimensions", "strategy",
            "--n", "4", "--annotators", "alice,bob",
            "--evaluation", "AbstentionCheck",
        ],
        capsys,
    )
    assert code == 0
    session_id = re.search(r"label_session (\w+) \(4 items\)", out).group(1)

    # alice labels everything Yes (outcome 1 of Yes/No/Uncertain)
    monkeypatch.setattr(sys, "stdin", tui_inputs([1, 1, 1, 1]))
    code, out, _ = run_cli(
        [
            "--config", str(config_path),
            "label", "tui", "--session", session_id, "--annotator", "alice",
        ],
        capsys,
    )
    assert code == 0
    assert "alice: queue complete" in out

    # bob disagrees on one known item: compute its position in bob's order
    session = load_session(store, session_id)
    target = session.state.items[0].item_id
    bob_order = session.state.order["bob"]
    bob_answers = [2 if item_id == target else 1 for item_id in bob_order]
    monkeypatch.setattr(sys, "stdin", tui_inputs(bob_answers))
    code, out, _ = run_cli(
        [
            "--config", str(config_path),
            "label", "tui", "--session", session_id, "--annotator", "bob",
        ],
        capsys,
    )
    assert code == 0
    assert "bob: queue complete" in out
    assert "disagreements:" in out
    assert target in out
    assert "cohen kappa" in out

    code, out, _ = run_cli(
        [
            "--config", str(config_path),
            "consensus", "--session", session_id,
            "--resolve", f"{target}=No",
        ],
        capsys,
    )
    assert code == 0
    consensus_id = re.search(r"label_session (\w+)$", out.strip().splitlines()[-1]).group(1)
    artifact = store.load(consensus_id, "label_session")
    assert artifact.payload.consensus[target] == "No"
    assert artifact.payload.status == "complete"

    code, out, _ = run_cli(
        [
            "--config", str(config_path),
            "validate-evaluator", "--consensus", consensus_id, "--positive", "Yes",
        ],
        capsys,
    )
    assert code == 0
    report = json.loads(out)
    assert report["tp"] + report["tn"] + report["fp"] + report["fn"] == 4


def test_consensus_interactive_resolution(tmp_path, capsys, monkeypatch):
    config_path, out = demo_pipeline_via_cli(tmp_path, capsys)
    evaluated_id = re.search(r"evaluate: executed (\w+)", out).group(1)
    config = load_pipeline_config(config_path)
    store = ArtifactStore(config.store_root)
    code, out, _ = run_cli(
        [
            "--config", str(config_path), "--seed", "3",
            "sample", "--evaluated", evaluated_id,
            "--n", "4", "--annotators", "a,b",
        ],
        capsys,
    )
    session_id = re.search(r"label_session (\w+)", out).group(1)
    session = load_session(store, session_id)
    for item in session.state.items:
        session.record_label("a", item.item_id, "Yes")
        session.record_label(
            "b", item.item_id, "No" if item is session.state.items[1] else "Yes"
        )
    from loobench.labeling import checkpoint_session

    checkpoint_session(store, session)
    monkeypatch.setattr(sys, "stdin", tui_inputs([3]))  # resolve as Uncertain
    code, out, _ = run_cli(
        ["--config", str(config_path), "consensus", "--session", session_id, "--interactive"],
        capsys,
    )
    assert code == 0
    consensus_id = re.search(r"label_session (\w+)$", out.strip().splitlines()[-1]).group(1)
    artifact = store.load(consensus_id, "label_session")
    assert "Uncertain" in artifact.payload.consensus.values()
