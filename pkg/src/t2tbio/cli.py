"""Command-line entry point.

Subcommands cover the whole pipeline: vocab-train, corrupt, encode-task,
pretrain, finetune, predict, evaluate, inspect-checkpoint. Stages exchange
line-delimited JSON (or the documented text formats), so each stage can be
tested and replaced independently. Exit codes: 0 success, 1 data error,
2 usage error, 3 metric below a configured floor.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import data_io, metrics, task_codec
from .checkpoint import load_checkpoint, load_manifest
from .corruption import SpanCorruptionConfig, corrupt, derive_seed, write_shard
from .errors import ConfigError, DataFormatError, T2TBioError
from .model import greedy_decode, init_params, param_count
from .trainer import finetune, pretrain
from .vocab import EOS_ID, load_vocab, save_vocab, train_vocab

log = logging.getLogger("t2tbio.cli")

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2
EXIT_FLOOR = 3

TASK_TYPES = ("ner", "re", "nli", "doc", "qa", "match")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the base random seed")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-threaded execution (pins BLAS thread pools when possible)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="t2tbio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab-train", help="train a subword vocabulary from text corpora")
    p.add_argument("--corpus", action="append", required=True, help="corpus text file (repeatable)")
    p.add_argument("--size", type=int, default=4096, help="target vocabulary size")
    p.add_argument("--sentinels", type=int, default=100, help="number of reserved sentinel tokens")
    p.add_argument("--out", required=True, help="output vocabulary file")
    _common_flags(p)

    p = sub.add_parser("corrupt", help="write a span-corruption shard from a corpus")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--in", dest="input", required=True, help="corpus text file, one document per line")
    p.add_argument("--out", required=True, help="output shard file (sidecar manifest is added)")
    p.add_argument("--rate", type=float, default=0.15, help="fraction of tokens to mask")
    p.add_argument("--mean-span", type=float, default=3.0, help="mean masked span length")
    p.add_argument("--max-sentinels", type=int, default=100, help="span count limit per example")
    p.add_argument("--input-len", type=int, default=None, help="truncate documents to this many tokens")
    _common_flags(p)

    p = sub.add_parser("encode-task", help="convert a raw dataset to TaskExample JSONL")
    p.add_argument("--task-type", choices=TASK_TYPES[:5], required=True)
    p.add_argument("--task-name", required=True, help="prefix baked into every input")
    p.add_argument("--in", dest="input", required=True, help="raw dataset file")
    p.add_argument("--out", required=True, help="output TaskExample JSONL")
    p.add_argument("--labels", default=None, help="comma-separated closed label set (re)")
    _common_flags(p)

    p = sub.add_parser("pretrain", help="span-infilling pretraining from a run config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out-dir", default=None, help="override the config output directory")
    p.add_argument("--warm-start", default=None, help="checkpoint directory to initialize weights from")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume training from")
    _common_flags(p)

    p = sub.add_parser("finetune", help="supervised fine-tuning from a run config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out-dir", default=None, help="override the config output directory")
    p.add_argument("--warm-start", default=None, help="checkpoint directory to initialize weights from")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume training from")
    _common_flags(p)

    p = sub.add_parser("predict", help="greedy-decode a TaskExample file with a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--in", dest="input", required=True, help="TaskExample JSONL")
    p.add_argument("--out", required=True, help="output predictions JSONL")
    p.add_argument("--max-len", type=int, default=64, help="maximum generated tokens")
    _common_flags(p)

    p = sub.add_parser("evaluate", help="score predictions against gold TaskExamples")
    p.add_argument("--task-type", choices=TASK_TYPES, required=True)
    p.add_argument("--pred", required=True, help="predictions JSONL from the predict command")
    p.add_argument("--gold", required=True, help="gold TaskExample JSONL")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--entity-type", default=None, help="entity type for decoded NER spans")
    p.add_argument("--labels", default=None, help="comma-separated closed label set (re/nli)")
    p.add_argument(
        "--negative-label",
        default="false",
        help="label excluded from micro-F1 for relation extraction",
    )
    p.add_argument(
        "--floor",
        action="append",
        default=[],
        metavar="METRIC=VALUE",
        help="fail (exit 3) when a report metric is below VALUE (repeatable)",
    )
    _common_flags(p)

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint manifest summary")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    _common_flags(p)

    return parser


def _apply_determinism(args) -> None:
    if not getattr(args, "deterministic", False):
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    try:  # pins already-initialized BLAS pools when threadpoolctl is around
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_vocab_train(args) -> int:
    lines: list[str] = []
    for path in args.corpus:
        with open(path, encoding="utf-8") as f:
            lines.extend(line.rstrip("\n") for line in f)
    v = train_vocab(lines, target_size=args.size, num_sentinels=args.sentinels)
    save_vocab(v, args.out)
    log.info("wrote vocabulary: %d pieces (%d sentinels) -> %s", v.size, v.num_sentinels, args.out)
    return EXIT_OK


def _cmd_corrupt(args) -> int:
    v = load_vocab(args.vocab)
    seed = args.seed if args.seed is not None else 0
    cfg = SpanCorruptionConfig(
        corruption_rate=args.rate,
        mean_span_length=args.mean_span,
        max_sentinels=args.max_sentinels,
        seed=seed,
    )
    examples = []
    with open(args.input, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            ids = v.encode(line)
            if args.input_len is not None:
                ids = ids[: args.input_len]
            if not ids:
                continue
            examples.append(corrupt(ids, derive_seed(cfg, len(examples)), v))
    write_shard(args.out, examples, cfg)
    log.info("wrote %d corruption records -> %s", len(examples), args.out)
    return EXIT_OK


def _parse_label_flag(raw: str | None) -> list[str] | None:
    if raw is None:
        return None
    labels = [x.strip() for x in raw.split(",") if x.strip()]
    if not labels:
        raise ConfigError("--labels must list at least one label")
    return labels


def _cmd_encode_task(args) -> int:
    examples: list[task_codec.TaskExample] = []
    if args.task_type == "ner":
        for words, spans in data_io.read_conll_ner(args.input):
            examples.append(task_codec.encode_ner(words, spans, args.task_name))
    elif args.task_type == "re":
        records = data_io.read_tsv_pairs(args.input, ["sentence", "label"])
        labels = _parse_label_flag(args.labels)
        if labels is None:
            labels = sorted({r["label"] for r in records})
        for r in records:
            examples.append(task_codec.encode_re(r["sentence"], r["label"], args.task_name, labels))
    elif args.task_type == "nli":
        for r in data_io.read_tsv_pairs(args.input, ["premise", "hypothesis", "label"]):
            examples.append(
                task_codec.encode_nli(r["premise"], r["hypothesis"], r["label"], args.task_name)
            )
    elif args.task_type == "doc":
        for r in data_io.read_tsv_pairs(args.input, ["text", "labels"]):
            labels = {x.strip() for x in r["labels"].split("|") if x.strip()}
            examples.append(task_codec.encode_doc(r["text"], labels, args.task_name))
    elif args.task_type == "qa":
        for q in data_io.read_qa_json(args.input):
            for i in range(len(q.snippets)):
                examples.append(task_codec.encode_qa(q, i, args.task_name))
    data_io.write_task_examples(args.out, examples)
    log.info("wrote %d task examples -> %s", len(examples), args.out)
    return EXIT_OK


def _load_run_config(args) -> data_io.RunConfig:
    cfg = data_io.load_config(args.config)
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
    return cfg


def _initial_params(cfg: data_io.RunConfig, warm_start: str | None):
    if warm_start is not None:
        params, model_cfg, _ = load_checkpoint(warm_start)
        if model_cfg != cfg.model:
            raise ConfigError("warm-start checkpoint does not match the configured model")
        return params
    return init_params(cfg.model, seed=cfg.seed)


def _cmd_pretrain(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.vocab_path:
        raise ConfigError("config needs vocab_path for pretraining")
    v = load_vocab(cfg.vocab_path)
    os.makedirs(cfg.out_dir, exist_ok=True)
    params = None if args.resume else _initial_params(cfg, args.warm_start)
    result = pretrain(
        cfg.model,
        params,
        cfg.corpora,
        cfg.corruption,
        cfg.train,
        v,
        out_dir=cfg.out_dir,
        resume=args.resume,
    )
    log.info("pretraining finished at step %d; checkpoints under %s", result.final_step, cfg.out_dir)
    return EXIT_OK


def _cmd_finetune(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.vocab_path:
        raise ConfigError("config needs vocab_path for fine-tuning")
    v = load_vocab(cfg.vocab_path)
    os.makedirs(cfg.out_dir, exist_ok=True)
    params = None if args.resume else _initial_params(cfg, args.warm_start)
    result = finetune(
        params,
        cfg.mixture,
        cfg.model,
        cfg.train,
        v,
        out_dir=cfg.out_dir,
        resume=args.resume,
    )
    log.info("fine-tuning finished at step %d; checkpoints under %s", result.final_step, cfg.out_dir)
    return EXIT_OK


def _cmd_predict(args) -> int:
    params, model_cfg, _ = load_checkpoint(args.checkpoint)
    v = load_vocab(args.vocab)
    if v.size != model_cfg.vocab_size:
        raise ConfigError(
            f"vocabulary size {v.size} does not match checkpoint vocab_size {model_cfg.vocab_size}"
        )
    examples = data_io.read_task_examples(args.input)
    with open(args.out, "w", encoding="utf-8") as f:
        for ex in examples:
            ids = v.encode(ex.input_text) + [EOS_ID]
            ids = ids[: model_cfg.max_seq_len]
            generated = greedy_decode(params, model_cfg, ids, max_len=args.max_len)
            record = {
                "task": ex.task_name,
                "input": ex.input_text,
                "prediction": v.decode(generated),
                "target": ex.target_text,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    log.info("wrote %d predictions -> %s", len(examples), args.out)
    return EXIT_OK


def read_predictions(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"bad JSON: {e}", path=str(path), line=lineno) from e
            if not isinstance(record, dict) or "prediction" not in record:
                raise DataFormatError("prediction record malformed", path=str(path), line=lineno)
            records.append(record)
    return records


def _evaluate_report(args, preds: list[dict], golds) -> metrics.MetricsReport:
    predictions = [p["prediction"] for p in preds]
    if args.task_type == "ner":
        gold_spans = []
        pred_spans = []
        dropped = 0
        entity_type = args.entity_type
        if entity_type is None:
            for ex in golds:
                if ex.gold.get("spans"):
                    entity_type = ex.gold["spans"][0][2]
                    break
            entity_type = entity_type or "ENT"
        for ex, pred in zip(golds, predictions):
            words = ex.gold.get("words")
            if words is None:
                raise DataFormatError("NER gold record lacks words")
            gold_spans.append(
                [
                    task_codec.EntitySpan(start_word=s, end_word=e, entity_type=t)
                    for s, e, t in ex.gold.get("spans", [])
                ]
            )
            decoded = task_codec.decode_ner(pred, words, entity_type=entity_type)
            pred_spans.append(decoded.spans)
            dropped += decoded.dropped_markers
        return metrics.entity_prf(gold_spans, pred_spans, dropped_markers=dropped)
    if args.task_type == "re":
        gold_labels = [ex.gold["label"] for ex in golds]
        labels = _parse_label_flag(args.labels) or sorted(set(gold_labels))
        decoded = [task_codec.decode_label(p, labels) for p in predictions]
        positive = [c for c in labels if c != args.negative_label]
        return metrics.classification_f1(gold_labels, decoded, labels, positive_classes=positive)
    if args.task_type == "nli":
        gold_labels = [ex.gold["label"] for ex in golds]
        labels = _parse_label_flag(args.labels) or list(task_codec.NLI_LABELS)
        decoded = [task_codec.decode_label(p, labels) for p in predictions]
        report = metrics.classification_f1(gold_labels, decoded, labels)
        report.accuracy = metrics.accuracy(gold_labels, decoded)
        return report
    if args.task_type == "doc":
        gold_sets = [set(ex.gold["labels"]) for ex in golds]
        pred_sets = [task_codec.parse_doc_labels(p) for p in predictions]
        return metrics.MetricsReport(
            sample_average_f1=metrics.sample_average_f1(gold_sets, pred_sets)
        )
    if args.task_type == "qa":
        groups: dict[str, tuple[list[str], list[str]]] = {}
        for ex, pred in zip(golds, predictions):
            q = ex.gold["question"]
            if q not in groups:
                groups[q] = ([], list(ex.gold["answers"]))
            groups[q][0].append(pred)
        return metrics.MetricsReport(
            lenient_accuracy=metrics.lenient_accuracy(list(groups.values())),
            protocol=metrics.LENIENT_MATCH_PROTOCOL,
        )
    # match: exact string equality against the gold target text
    gold_targets = [ex.target_text for ex in golds]
    return metrics.MetricsReport(accuracy=metrics.accuracy(gold_targets, predictions))


def _parse_floors(raw: list[str]) -> dict[str, float]:
    floors = {}
    for item in raw:
        if "=" not in item:
            raise ConfigError(f"--floor expects METRIC=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        try:
            floors[name.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"--floor value for {name!r} is not a number") from e
    return floors


def _cmd_evaluate(args) -> int:
    preds = read_predictions(args.pred)
    golds = data_io.read_task_examples(args.gold)
    if len(preds) != len(golds):
        raise DataFormatError(
            f"prediction file has {len(preds)} records, gold file has {len(golds)}"
        )
    report = _evaluate_report(args, preds, golds)
    payload = report.to_dict()
    payload["task_type"] = args.task_type
    floors = _parse_floors(args.floor)
    failed = []
    for name, floor in floors.items():
        value = payload.get(name)
        if value is None:
            raise ConfigError(f"--floor names unknown metric {name!r}")
        if value < floor:
            failed.append((name, value, floor))
    payload["floors"] = {name: floors[name] for name in sorted(floors)}
    payload["passed"] = not failed
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    print(report.format_table())
    for name, value, floor in failed:
        log.error("metric %s=%.4f is below the floor %.4f", name, value, floor)
    return EXIT_FLOOR if failed else EXIT_OK


def _cmd_inspect_checkpoint(args) -> int:
    manifest = load_manifest(args.checkpoint)
    params, cfg, _ = load_checkpoint(args.checkpoint)
    summary = {
        "model": cfg.to_dict(),
        "tensors": len(manifest["tensors"]),
        "parameters": param_count(params),
        "step": manifest.get("step"),
        "optimizer": manifest.get("optimizer", {}).get("name") if "optimizer" in manifest else None,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "vocab-train": _cmd_vocab_train,
    "corrupt": _cmd_corrupt,
    "encode-task": _cmd_encode_task,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "inspect-checkpoint": _cmd_inspect_checkpoint,
}


def run(argv: list[str] | None = None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_determinism(args)
    try:
        return _COMMANDS[args.command](args)
    except T2TBioError as e:
        log.error("%s", e)
        return EXIT_DATA_ERROR
    except OSError as e:
        log.error("%s", e)
        return EXIT_DATA_ERROR


def main(argv: list[str] | None = None) -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
