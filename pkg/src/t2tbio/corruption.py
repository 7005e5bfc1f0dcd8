"""Span-based masked language modeling pairs.

``corrupt`` removes contiguous token spans from a clean sequence, replacing
each span in the input with one sentinel id and emitting a target of the form

    sentinel_0, span_0 tokens, sentinel_1, span_1 tokens, ..., final sentinel, eos

Adjacent selections merge into one span, sentinels are assigned left to right,
and the number of masked tokens is exactly ``round(len * corruption_rate)``
(round half up, at least 1 when the rate is positive). ``reconstruct`` is the
independent inverse used as the round-trip oracle: it splices target spans
back over the input sentinels by scanning, sharing no code with ``corrupt``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import CorruptionError, DataFormatError
from .rng import SplitMix64
from .vocab import EOS_ID, PAD_ID, Vocabulary

SHARD_FORMAT = "t2tbio-shard v1"


@dataclass(frozen=True)
class SpanCorruptionConfig:
    corruption_rate: float = 0.15
    mean_span_length: float = 3.0
    max_sentinels: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.corruption_rate < 1.0:
            raise CorruptionError("corruption_rate must be in [0, 1)")
        if self.mean_span_length < 1.0:
            raise CorruptionError("mean_span_length must be >= 1")
        if self.max_sentinels < 1:
            raise CorruptionError("max_sentinels must be positive")


@dataclass(frozen=True)
class CorruptionExample:
    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]


def _mask_budget(n: int, rate: float) -> int:
    if rate <= 0.0:
        return 0
    # round half up, floor 1
    return max(1, int(n * rate + 0.5))


def corrupt(tokens: list[int], cfg: SpanCorruptionConfig, v: Vocabulary) -> CorruptionExample:
    """Mask random spans of ``tokens``; deterministic given (tokens, cfg.seed)."""
    if not tokens:
        raise CorruptionError("cannot corrupt an empty sequence")
    for t in tokens:
        if t in (PAD_ID, EOS_ID) or v.is_sentinel(t):
            raise CorruptionError(f"reserved token in input: id {t}")

    n = len(tokens)
    budget = _mask_budget(n, cfg.corruption_rate)
    rng = SplitMix64(cfg.seed)
    masked = np.zeros(n, dtype=bool)
    remaining = budget
    while remaining > 0:
        length = min(rng.next_geometric(cfg.mean_span_length), remaining)
        # longest placeable length <= drawn length; length 1 always fits while
        # any position is still unmasked
        starts = _free_starts(masked, length)
        while starts.size == 0:
            length -= 1
            starts = _free_starts(masked, length)
        s = int(starts[rng.next_below(starts.size)])
        masked[s : s + length] = True
        remaining -= length

    spans = _runs(masked)
    return apply_span_mask(tokens, spans, v, max_spans=cfg.max_sentinels)


def apply_span_mask(
    tokens: list[int],
    spans: list[tuple[int, int]],
    v: Vocabulary,
    max_spans: int | None = None,
) -> CorruptionExample:
    """Apply an explicit span selection (list of [start, end) pairs).

    Spans are sorted and adjacent/overlapping selections merge into one span,
    mirroring how consecutive masked tokens count as a single span.
    """
    n = len(tokens)
    for start, end in spans:
        if not 0 <= start < end <= n:
            raise CorruptionError(f"span ({start}, {end}) out of bounds for length {n}")
    merged: list[list[int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    limit = v.num_sentinels - 1 if max_spans is None else min(max_spans, v.num_sentinels - 1)
    if len(merged) > limit:
        raise CorruptionError(f"too many spans: {len(merged)} (limit {limit})")

    input_ids: list[int] = []
    target_ids: list[int] = []
    pos = 0
    for k, (start, end) in enumerate(merged):
        input_ids.extend(tokens[pos:start])
        input_ids.append(v.sentinel_id(k))
        target_ids.append(v.sentinel_id(k))
        target_ids.extend(tokens[start:end])
        pos = end
    input_ids.extend(tokens[pos:])
    target_ids.append(v.sentinel_id(len(merged)))
    target_ids.append(EOS_ID)
    return CorruptionExample(input_ids=tuple(input_ids), target_ids=tuple(target_ids))


def _free_starts(masked: np.ndarray, length: int) -> np.ndarray:
    """Start positions where a span of ``length`` overlaps nothing masked."""
    n = masked.size
    if length <= 0 or length > n:
        return np.empty(0, dtype=np.int64)
    cs = np.concatenate(([0], np.cumsum(masked)))
    occupied = cs[length:] - cs[:-length]
    return np.flatnonzero(occupied == 0)


def _runs(masked: np.ndarray) -> list[tuple[int, int]]:
    edges = np.flatnonzero(np.diff(np.concatenate(([0], masked.view(np.int8), [0]))))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, edges.size, 2)]


def reconstruct(example: CorruptionExample, v: Vocabulary) -> list[int]:
    """Splice target spans back into the input; inverse of ``corrupt``.

    Deliberately scan-based and independent of the corruption code so it can
    serve as the round-trip oracle. Raises on any structural violation of the
    sentinel layout.
    """
    target = list(example.target_ids)
    if target and target[-1] == EOS_ID:
        target = target[:-1]
    # parse target into sentinel-keyed spans, in order
    order: list[int] = []
    spans: dict[int, list[int]] = {}
    current: int | None = None
    for t in target:
        if v.is_sentinel(t):
            k = v.sentinel_index(t)
            if k in spans:
                raise CorruptionError(f"malformed pair: sentinel {k} repeated in target")
            order.append(k)
            spans[k] = []
            current = k
        else:
            if current is None:
                raise CorruptionError("malformed pair: target tokens before first sentinel")
            spans[current].append(t)
    if not order:
        raise CorruptionError("malformed pair: target lacks a final sentinel")
    final = order[-1]
    if spans[final]:
        raise CorruptionError("malformed pair: final sentinel carries tokens")
    if order != list(range(len(order))):
        raise CorruptionError(f"malformed pair: sentinel order {order} is not 0..{len(order) - 1}")

    expected = 0
    out: list[int] = []
    for t in example.input_ids:
        if v.is_sentinel(t):
            k = v.sentinel_index(t)
            if k != expected:
                raise CorruptionError(
                    f"malformed pair: input sentinel {k} where {expected} was expected"
                )
            if k >= final:
                raise CorruptionError(f"malformed pair: input uses final sentinel {k}")
            out.extend(spans[k])
            expected += 1
        else:
            out.append(t)
    if expected != final:
        raise CorruptionError(
            f"malformed pair: input has {expected} sentinels, target has {final}"
        )
    return out


def write_shard(path, examples: list[CorruptionExample], cfg: SpanCorruptionConfig) -> None:
    """Line-delimited "INPUT<TAB>TARGET" records of space-joined decimal ids,
    plus a ``<path>.manifest.json`` sidecar recording the config and count."""
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(
                " ".join(str(i) for i in ex.input_ids)
                + "\t"
                + " ".join(str(i) for i in ex.target_ids)
                + "\n"
            )
    manifest = {
        "format": SHARD_FORMAT,
        "config": {
            "corruption_rate": cfg.corruption_rate,
            "mean_span_length": cfg.mean_span_length,
            "max_sentinels": cfg.max_sentinels,
            "seed": cfg.seed,
        },
        "records": len(examples),
    }
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_shard(path) -> list[CorruptionExample]:
    """Read a shard file; validates the sidecar manifest count when present."""
    examples: list[CorruptionExample] = []
    try:
        with open(path, "rb") as f:
            raw = f.read()
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(f"not valid UTF-8: {e}", path=str(path)) from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line == "":
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(
                f"expected INPUT<TAB>TARGET, got {len(parts)} fields", path=str(path), line=lineno
            )
        try:
            inp = tuple(int(x) for x in parts[0].split())
            tgt = tuple(int(x) for x in parts[1].split())
        except ValueError as e:
            raise DataFormatError(f"non-integer token id: {e}", path=str(path), line=lineno) from e
        examples.append(CorruptionExample(input_ids=inp, target_ids=tgt))
    manifest_path = str(path) + ".manifest.json"
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as f:
            try:
                manifest = json.load(f)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"bad manifest JSON: {e}", path=manifest_path) from e
        if manifest.get("records") != len(examples):
            raise DataFormatError(
                f"manifest says {manifest.get('records')} records, shard has {len(examples)}",
                path=str(path),
            )
    return examples


def derive_seed(cfg: SpanCorruptionConfig, index: int) -> SpanCorruptionConfig:
    """Per-record config for shard writing: mixes the record index into the seed."""
    rng = SplitMix64(cfg.seed ^ (index * 0x9E3779B97F4A7C15))
    return replace(cfg, seed=rng.next_u64())
