#!/usr/bin/env python3
"""End-to-end smoke run: vocab-train -> encode-task -> finetune -> predict -> evaluate.

Uses the bundled fixtures and writes everything under runs/smoke/. The final
evaluate enforces an exact-match floor of 0.95, so a non-zero exit means the
pipeline regressed.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from t2tbio.cli import run  # noqa: E402
from t2tbio.vocab import load_vocab  # noqa: E402

ROOT = os.path.join(os.path.dirname(__file__), os.pardir)
FIXTURES = os.path.join(ROOT, "fixtures")
OUT = os.path.join(ROOT, "runs", "smoke")


def main() -> int:
    os.makedirs(OUT, exist_ok=True)
    vocab_path = os.path.join(OUT, "vocab.txt")
    steps = [
        [
            "vocab-train",
            "--corpus", os.path.join(FIXTURES, "pretrain_corpus.txt"),
            "--corpus", os.path.join(FIXTURES, "task_text.txt"),
            "--size", "256", "--sentinels", "16",
            "--out", vocab_path,
        ],
        [
            "encode-task", "--task-type", "ner", "--task-name", "smoke_ner",
            "--in", os.path.join(FIXTURES, "smoke_ner.conll"),
            "--out", os.path.join(OUT, "train.jsonl"),
        ],
    ]
    for argv in steps:
        rc = run(argv + ["--deterministic"])
        if rc != 0:
            return rc

    config = {
        "seed": 0,
        "out_dir": os.path.join(OUT, "run"),
        "vocab_path": vocab_path,
        "model": {
            "vocab_size": load_vocab(vocab_path).size,
            "d_model": 64, "n_heads": 4, "d_ff": 128,
            "n_encoder_layers": 2, "n_decoder_layers": 2,
            "rel_pos_buckets": 16, "rel_pos_max_distance": 32, "max_seq_len": 64,
        },
        "train": {
            "learning_rate": 0.002, "batch_size": 16, "num_steps": 400,
            "input_len": 32, "target_len": 32, "seed": 0,
        },
        "mixture": [{"task": "smoke_ner", "path": os.path.join(OUT, "train.jsonl"), "weight": 1.0}],
    }
    config_path = os.path.join(OUT, "config.json")
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)

    for argv in (
        ["finetune", "--config", config_path],
        [
            "predict",
            "--checkpoint", os.path.join(OUT, "run", "final"),
            "--vocab", vocab_path,
            "--in", os.path.join(OUT, "train.jsonl"),
            "--out", os.path.join(OUT, "preds.jsonl"),
            "--max-len", "32",
        ],
        [
            "evaluate", "--task-type", "match",
            "--pred", os.path.join(OUT, "preds.jsonl"),
            "--gold", os.path.join(OUT, "train.jsonl"),
            "--out", os.path.join(OUT, "report.json"),
            "--floor", "accuracy=0.95",
        ],
    ):
        rc = run(argv + ["--deterministic"])
        if rc != 0:
            return rc
    print(f"smoke run complete; artifacts under {os.path.relpath(OUT)}")
    return 0


if __name__ == "__main__":
    import logging

    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    sys.exit(main())
