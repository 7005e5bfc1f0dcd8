"""Benchmark-format readers, TaskExample JSONL, and run configuration.

Readers are total over arbitrary byte streams: they either return parsed
records or raise DataFormatError with the path and line number; they never
crash with an undeclared exception type. The repo ships only small synthetic
fixtures in these formats; real benchmark data is supplied by path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .corruption import SpanCorruptionConfig
from .errors import ConfigError, DataFormatError
from .model import ModelConfig
from .task_codec import EntitySpan, QAExample, TaskExample
from .trainer import CorpusEntry, MixtureEntry, TrainConfig

ENV_OUT_DIR = "T2TBIO_OUT_DIR"
ENV_SEED = "T2TBIO_SEED"


def _read_text(path) -> str:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataFormatError(f"cannot read file: {e}", path=str(path)) from e
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(f"not valid UTF-8: {e}", path=str(path)) from e


# ---------------------------------------------------------------------------
# CoNLL-style BIO files
# ---------------------------------------------------------------------------


def read_conll_ner(path, diagnostics: dict | None = None) -> list[tuple[list[str], list[EntitySpan]]]:
    """Token-per-line BIO file with blank-line sentence separators.

    The token is the first whitespace-separated column, the tag the last.
    An I- tag without a preceding B- of the same type is healed to a span
    start (counted under ``healed_i_tags`` in ``diagnostics``).
    """
    text = _read_text(path)
    sentences: list[tuple[list[str], list[EntitySpan]]] = []
    words: list[str] = []
    tags: list[str] = []

    def flush():
        if words:
            sentences.append((list(words), _bio_to_spans(tags, diagnostics)))
            words.clear()
            tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        fields = stripped.split()
        if len(fields) < 2:
            raise DataFormatError(
                "expected at least a token and a tag column", path=str(path), line=lineno
            )
        tag = fields[-1]
        if tag != "O" and not (tag.startswith(("B-", "I-")) and len(tag) > 2):
            raise DataFormatError(f"malformed BIO tag {tag!r}", path=str(path), line=lineno)
        words.append(fields[0])
        tags.append(tag)
    flush()
    return sentences


def _bio_to_spans(tags: list[str], diagnostics: dict | None) -> list[EntitySpan]:
    spans: list[EntitySpan] = []
    start: int | None = None
    current_type: str | None = None

    def close(end: int):
        nonlocal start, current_type
        if start is not None:
            spans.append(EntitySpan(start_word=start, end_word=end, entity_type=current_type))
            start, current_type = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i - 1)
        elif tag.startswith("B-"):
            close(i - 1)
            start, current_type = i, tag[2:]
        else:  # I-
            t = tag[2:]
            if start is None or current_type != t:
                close(i - 1)
                start, current_type = i, t
                if diagnostics is not None:
                    diagnostics["healed_i_tags"] = diagnostics.get("healed_i_tags", 0) + 1
    close(len(tags) - 1)
    return spans


# ---------------------------------------------------------------------------
# TSV files (RE / NLI / document classification)
# ---------------------------------------------------------------------------


def read_tsv_pairs(path, columns: list[str]) -> list[dict[str, str]]:
    """Verbatim tab-split records; no quoting rules, quoted tabs split anyway."""
    if not columns:
        raise ConfigError("columns must be declared")
    text = _read_text(path)
    records: list[dict[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line == "":
            continue
        parts = line.split("\t")
        if len(parts) != len(columns):
            raise DataFormatError(
                f"expected {len(columns)} tab-separated columns, got {len(parts)}",
                path=str(path),
                line=lineno,
            )
        records.append(dict(zip(columns, parts)))
    return records


# ---------------------------------------------------------------------------
# QA JSON (factoid questions with snippets and exact answers)
# ---------------------------------------------------------------------------


def read_qa_json(path, diagnostics: dict | None = None) -> list[QAExample]:
    """Factoid QA JSON: {"questions": [{id, body, snippets, exact_answer}]}.

    Snippets may be plain strings or {"text": ...} objects; exact answers may
    be a string, a list, or a list of synonym lists (flattened). Questions with
    no snippets are skipped with a warning count; duplicate ids merge snippet
    and answer lists.
    """
    text = _read_text(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"bad JSON: {e}", path=str(path)) from e
    if isinstance(payload, dict):
        questions = payload.get("questions")
    elif isinstance(payload, list):
        questions = payload
    else:
        raise DataFormatError("top level must be an object or a list", path=str(path))
    if not isinstance(questions, list):
        raise DataFormatError('missing or invalid "questions" list', path=str(path))

    merged: dict[str, dict] = {}
    order: list[str] = []
    for i, q in enumerate(questions):
        if not isinstance(q, dict):
            raise DataFormatError(f"question {i} is not an object", path=str(path))
        body = q.get("body", q.get("question"))
        if not isinstance(body, str) or not body:
            raise DataFormatError(f"question {i} lacks a body", path=str(path))
        qid = q.get("id")
        if qid is None:
            qid = body
        if not isinstance(qid, str):
            raise DataFormatError(f"question {i} has a non-string id", path=str(path))
        snippets = _parse_snippets(q.get("snippets", []), i, path)
        answers = _parse_answers(q.get("exact_answer", []), i, path)
        if qid not in merged:
            merged[qid] = {"question": body, "snippets": [], "answers": []}
            order.append(qid)
        slot = merged[qid]
        for s in snippets:
            if s not in slot["snippets"]:
                slot["snippets"].append(s)
        for a in answers:
            if a not in slot["answers"]:
                slot["answers"].append(a)

    out: list[QAExample] = []
    for qid in order:
        slot = merged[qid]
        if not slot["snippets"]:
            if diagnostics is not None:
                diagnostics["skipped_no_snippets"] = diagnostics.get("skipped_no_snippets", 0) + 1
            continue
        if not slot["answers"]:
            raise DataFormatError(f"question {qid!r} has no gold answers", path=str(path))
        out.append(
            QAExample(
                question=slot["question"],
                snippets=tuple(slot["snippets"]),
                gold_answers=tuple(slot["answers"]),
            )
        )
    return out


def _parse_snippets(raw, index: int, path) -> list[str]:
    if not isinstance(raw, list):
        raise DataFormatError(f"question {index}: snippets must be a list", path=str(path))
    out = []
    for s in raw:
        if isinstance(s, str):
            out.append(s)
        elif isinstance(s, dict) and isinstance(s.get("text"), str):
            out.append(s["text"])
        else:
            raise DataFormatError(
                f"question {index}: snippet must be a string or have a text field", path=str(path)
            )
    return out


def _parse_answers(raw, index: int, path) -> list[str]:
    if isinstance(raw, str):
        return [raw]
    if not isinstance(raw, list):
        raise DataFormatError(f"question {index}: exact_answer must be a string or list", path=str(path))
    out: list[str] = []
    for a in raw:
        if isinstance(a, str):
            out.append(a)
        elif isinstance(a, list) and all(isinstance(x, str) for x in a):
            out.extend(a)
        else:
            raise DataFormatError(f"question {index}: malformed exact_answer entry", path=str(path))
    return out


# ---------------------------------------------------------------------------
# TaskExample JSONL
# ---------------------------------------------------------------------------


def write_task_examples(path, examples: list[TaskExample]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            record = {
                "task": ex.task_name,
                "input": ex.input_text,
                "target": ex.target_text,
                "gold": ex.gold,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")


def read_task_examples(path) -> list[TaskExample]:
    text = _read_text(path)
    out: list[TaskExample] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"bad JSON: {e}", path=str(path), line=lineno) from e
        if not isinstance(record, dict):
            raise DataFormatError("record must be an object", path=str(path), line=lineno)
        try:
            task = record["task"]
            input_text = record["input"]
            target_text = record["target"]
        except KeyError as e:
            raise DataFormatError(f"missing field {e}", path=str(path), line=lineno) from e
        gold = record.get("gold", {})
        if (
            not isinstance(task, str)
            or not isinstance(input_text, str)
            or not isinstance(target_text, str)
            or not isinstance(gold, dict)
        ):
            raise DataFormatError("fields have wrong types", path=str(path), line=lineno)
        if not input_text.startswith(task + ": "):
            raise DataFormatError(
                f"input does not start with the task prefix {task + ': '!r}",
                path=str(path),
                line=lineno,
            )
        out.append(TaskExample(task_name=task, input_text=input_text, target_text=target_text, gold=gold))
    return out


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    corruption: SpanCorruptionConfig = field(default_factory=SpanCorruptionConfig)
    vocab_path: str = ""
    out_dir: str = "runs/default"
    seed: int = 0
    corpora: list[CorpusEntry] = field(default_factory=list)
    mixture: list[MixtureEntry] = field(default_factory=list)


_TOP_KEYS = {"model", "train", "corruption", "vocab_path", "out_dir", "seed", "corpora", "mixture"}
_MODEL_KEYS = {
    "vocab_size",
    "d_model",
    "n_heads",
    "d_ff",
    "n_encoder_layers",
    "n_decoder_layers",
    "rel_pos_buckets",
    "rel_pos_max_distance",
    "max_seq_len",
    "dropout_rate",
    "dtype",
}
_TRAIN_KEYS = {
    "learning_rate",
    "batch_size",
    "num_steps",
    "input_len",
    "target_len",
    "seed",
    "checkpoint_every",
}
_CORRUPTION_KEYS = {"corruption_rate", "mean_span_length", "max_sentinels", "seed"}


def _check_keys(section, allowed: set[str], where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _build(cls, section: dict, where: str):
    try:
        return cls(**section)
    except TypeError as e:
        raise ConfigError(f"bad {where} section: {e}") from e


def load_config(path) -> RunConfig:
    """Load and validate a run config JSON document.

    Unknown keys are rejected by name; cross-field constraints (length caps vs
    model max_seq_len) are enforced here. ``T2TBIO_OUT_DIR`` and
    ``T2TBIO_SEED`` environment variables override those two fields only.
    """
    text = _read_text(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: bad JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    _check_keys(payload, _TOP_KEYS, "config")
    if "model" not in payload:
        raise ConfigError(f"{path}: missing required section 'model'")

    model_section = payload["model"]
    _check_keys(model_section, _MODEL_KEYS, "model")
    model = _build(ModelConfig, model_section, "model")

    train_section = payload.get("train", {})
    _check_keys(train_section, _TRAIN_KEYS, "train")
    train = _build(TrainConfig, train_section, "train")

    corruption_section = payload.get("corruption", {})
    _check_keys(corruption_section, _CORRUPTION_KEYS, "corruption")
    corruption = _build(SpanCorruptionConfig, corruption_section, "corruption")

    corpora = []
    for i, entry in enumerate(payload.get("corpora", [])):
        _check_keys(entry, {"path", "weight"}, f"corpora[{i}]")
        if "path" not in entry:
            raise ConfigError(f"corpora[{i}] needs a path")
        corpora.append(CorpusEntry(path=entry["path"], weight=float(entry.get("weight", 1.0))))

    mixture = []
    for i, entry in enumerate(payload.get("mixture", [])):
        _check_keys(entry, {"task", "path", "weight"}, f"mixture[{i}]")
        if "task" not in entry or "path" not in entry:
            raise ConfigError(f"mixture[{i}] needs task and path")
        mixture.append(
            MixtureEntry(
                task_name=entry["task"], path=entry["path"], weight=float(entry.get("weight", 1.0))
            )
        )

    cfg = RunConfig(
        model=model,
        train=train,
        corruption=corruption,
        vocab_path=payload.get("vocab_path", ""),
        out_dir=payload.get("out_dir", "runs/default"),
        seed=int(payload.get("seed", 0)),
        corpora=corpora,
        mixture=mixture,
    )
    if ENV_OUT_DIR in os.environ:
        cfg.out_dir = os.environ[ENV_OUT_DIR]
    if ENV_SEED in os.environ:
        cfg.seed = int(os.environ[ENV_SEED])

    if cfg.train.input_len > cfg.model.max_seq_len:
        raise ConfigError(
            f"train.input_len {cfg.train.input_len} exceeds model.max_seq_len {cfg.model.max_seq_len}"
        )
    if cfg.train.target_len > cfg.model.max_seq_len:
        raise ConfigError(
            f"train.target_len {cfg.train.target_len} exceeds model.max_seq_len {cfg.model.max_seq_len}"
        )
    return cfg
