"""Terminal labeling flow: the same session mechanics as the HTTP API,
rendered as console prompts. Streams are injectable for tests."""

from __future__ import annotations

from typing import IO

from .errors import ValidationError
from .labeling import AgreementStats, LabelSession, checkpoint_session
from .models import LabelItem
from .store import ArtifactStore


def _fmt_kappa(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def render_item(item: LabelItem, outcomes, position: int, total: int) -> str:
    lines = [
        f"--- item {position}/{total} ({item.item_id}) ---",
        f"Question: {item.question}",
        f"Model answer: {item.model_answer}",
    ]
    if item.expected_answer is not None:
        lines.append(f"Expected answer: {item.expected_answer}")
    lines.append("Outcomes:")
    for i, outcome in enumerate(outcomes, start=1):
        lines.append(f"  {i}. {outcome}")
    return "\n".join(lines)


def render_agreement(stats: AgreementStats) -> str:
    lines = [
        "Agreement:",
        f"  co-labeled items: {stats.co_labeled}",
        f"  cohen kappa:      {_fmt_kappa(stats.cohen)}",
        f"  fleiss kappa:     {_fmt_kappa(stats.fleiss)}",
    ]
    if stats.accuracy_vs_auto is not None:
        lines.append(f"  accuracy vs auto: {stats.accuracy_vs_auto:.4f}")
    if stats.disagreements:
        lines.append(f"  disagreements:    {', '.join(stats.disagreements)}")
    else:
        lines.append("  disagreements:    none")
    return "\n".join(lines)


def _read_choice(prompt: str, n_choices: int, in_stream: IO[str], out_stream: IO[str]) -> int:
    while True:
        out_stream.write(prompt)
        out_stream.flush()
        line = in_stream.readline()
        if not line:
            raise ValidationError("input stream closed before labeling finished")
        line = line.strip()
        if line.isdigit() and 1 <= int(line) <= n_choices:
            return int(line)
        out_stream.write(f"enter a number between 1 and {n_choices}\n")


def run_annotator_queue(
    session: LabelSession,
    annotator: str,
    store: ArtifactStore,
    in_stream: IO[str],
    out_stream: IO[str],
) -> None:
    """Walk the annotator's shuffled queue, recording one label per item
    and checkpointing after each."""
    outcomes = session.state.schema.outcomes
    total = len(session.state.items)
    while True:
        item = session.next_item(annotator)
        if item is None:
            break
        labeled, _ = session.progress(annotator)
        out_stream.write(render_item(item, outcomes, labeled + 1, total) + "\n")
        choice = _read_choice(
            f"label ({annotator})> ", len(outcomes), in_stream, out_stream
        )
        session.record_label(annotator, item.item_id, outcomes[choice - 1])
        checkpoint_session(store, session)
    out_stream.write(f"{annotator}: queue complete\n")
    out_stream.write(render_agreement(session.agreement()) + "\n")


def prompt_resolutions(
    session: LabelSession, in_stream: IO[str], out_stream: IO[str]
) -> dict[str, str]:
    """Interactively resolve every flagged disagreement."""
    outcomes = session.state.schema.outcomes
    resolutions: dict[str, str] = {}
    for item_id in session.disagreements():
        item = session.item(item_id)
        labels = {
            a: session.state.labels[a][item_id] for a in session.state.annotators
        }
        out_stream.write(f"--- disagreement on {item_id} ---\n")
        out_stream.write(f"Question: {item.question}\n")
        out_stream.write(f"Model answer: {item.model_answer}\n")
        out_stream.write(f"Labels: {labels}\n")
        for i, outcome in enumerate(outcomes, start=1):
            out_stream.write(f"  {i}. {outcome}\n")
        choice = _read_choice("resolve> ", len(outcomes), in_stream, out_stream)
        resolutions[item_id] = outcomes[choice - 1]
    return resolutions
