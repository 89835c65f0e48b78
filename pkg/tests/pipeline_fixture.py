"""Builds a fully scripted mock pipeline: demo document, config file, and
the exact-match chat script covering fact extraction, QA generation, the
leave-one-out experiment, and both judge passes."""

from __future__ import annotations

import json
from pathlib import Path

from loobench import prompts
from loobench.filtering import FilterConfig, apply_filters
from loobench.gateway import mock_embedding
from loobench.models import QAPair
from loobench.retrieval import pair_embedding_text
from loobench.segmenter import segment_sentences

from conftest import DEMO_QA, DEMO_SENTENCES

FIXED_CLOCK = "2025-01-01T00:00:00Z"

# pair_id -> scripted target-model response (two abstain, two answer)
DEMO_RESPONSES = {
    1: "I don't know. no citation",
    2: "It opens at six in the morning (fact 1).",
    3: "I don't know. no citation",
    4: "Tours run on Saturday afternoon (fact 1).",
}
DEMO_ABSTENTION = {1: "Yes", 2: "No", 3: "Yes", 4: "No"}
DEMO_FACTUALITY = {2: "tier_1", 4: "tier_3"}

KEYWORD_THRESHOLD = 0.0
SEMANTIC_THRESHOLD = 0.3


def demo_chat_script() -> dict[str, str]:
    body = " ".join(DEMO_SENTENCES)
    sentences = segment_sentences(body)
    script: dict[str, str] = {}

    fact_message = prompts.render_fact_extraction_message(sentences)
    script[fact_message] = json.dumps(
        {
            "facts": [
                {"text": s.text, "source_sentence": s.index} for s in sentences
            ]
        }
    )

    pairs = []
    for i, (question, answer) in enumerate(DEMO_QA, 1):
        qa_message = prompts.render_qa_generation_message(DEMO_SENTENCES[i - 1])
        script[qa_message] = json.dumps({"question": question, "answer": answer})
        pairs.append(QAPair(pair_id=i, question=question, answer=answer, source_fact_id=i))

    embeddings = [mock_embedding(pair_embedding_text(p)) for p in pairs]
    retained = apply_filters(
        pairs, FilterConfig(KEYWORD_THRESHOLD, SEMANTIC_THRESHOLD), embeddings
    )

    for pair in retained:
        others = [p for p in retained if p.pair_id != pair.pair_id]
        context = [
            type("C", (), {"context_index": n, "question": p.question, "answer": p.answer})()
            for n, p in enumerate(others, 1)
        ]
        message = prompts.render_experiment_message(pair.question, context)
        raw = DEMO_RESPONSES[pair.pair_id]
        script[message] = raw

        abstain_msg = prompts.render_judge_message(pair.question, raw, None)
        script[abstain_msg] = (
            f"Judged. <abstention>{DEMO_ABSTENTION[pair.pair_id]}</abstention>"
        )
        if DEMO_ABSTENTION[pair.pair_id] != "Yes":
            fact_msg = prompts.render_judge_message(pair.question, raw, pair.answer)
            script[fact_msg] = (
                f"Compared. <factuality>{DEMO_FACTUALITY[pair.pair_id]}</factuality>"
            )
    return script


def write_demo_pipeline(
    base_dir: Path,
    store_name: str = "store",
    seed: int = 7,
    fixed_clock: str | None = FIXED_CLOCK,
) -> tuple[Path, Path]:
    """Write demo.txt and config.json under base_dir; returns their paths."""
    base_dir.mkdir(parents=True, exist_ok=True)
    source_path = base_dir / "demo.txt"
    source_path.write_text(" ".join(DEMO_SENTENCES), encoding="utf-8")
    config = {
        "store_root": str(base_dir / store_name),
        "seed": seed,
        "default_client": "mock",
        "domain": "demo",
        "clients": {
            "mock": {
                "provider": "mock",
                "model": "mock-chat",
                "embedding_model": "mock-embed",
                "script": demo_chat_script(),
            }
        },
        "defaults": {
            "prompt": "basic",
            "strategy": "long_in_context",
            "keyword_threshold": KEYWORD_THRESHOLD,
            "semantic_threshold": SEMANTIC_THRESHOLD,
        },
    }
    if fixed_clock:
        config["fixed_clock"] = fixed_clock
    config_path = base_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return config_path, source_path
