"""Checkpoint directory layout: manifest.json, weights.bin, optimizer.bin, rng_state.

The manifest records the model config plus, for each tensor, its name, shape,
little-endian dtype code, byte offset, and byte count; the binary blobs are the
raw tensor bytes concatenated in manifest order. Save/load round trips are
bit-exact. NaN/Inf values are rejected on load.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, validate_params

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
OPTIMIZER_NAME = "optimizer.bin"
RNG_STATE_NAME = "rng_state"
CHECKPOINT_FORMAT = "t2tbio-checkpoint v1"

_LE_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _le_code(arr: np.ndarray) -> str:
    code = "<" + arr.dtype.char + str(arr.dtype.itemsize)
    if code not in _LE_DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")
    return code


def _pack(tensors: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        code = _le_code(arr)
        raw = arr.astype(_LE_DTYPES[code], copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": code,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    return entries, b"".join(blobs)


def _unpack(entries: list[dict], blob: bytes, path: str) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for e in entries:
        code = e["dtype"]
        if code not in _LE_DTYPES:
            raise CheckpointError(f"{path}: unsupported dtype {code} for tensor {e['name']}")
        raw = blob[e["offset"] : e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated blob at tensor {e['name']}")
        arr = np.frombuffer(raw, dtype=_LE_DTYPES[code]).reshape(e["shape"]).copy()
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: non-finite values in tensor {e['name']}")
        tensors[e["name"]] = arr
    return tensors


def save_checkpoint(
    out_dir,
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    opt_state: AdamState | None = None,
    rng_state: int | None = None,
    step: int | None = None,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    weight_entries, weight_blob = _pack(params)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model": cfg.to_dict(),
        "tensors": weight_entries,
    }
    if step is not None:
        manifest["step"] = step
    with open(os.path.join(out_dir, WEIGHTS_NAME), "wb") as f:
        f.write(weight_blob)
    if opt_state is not None:
        opt_tensors = {f"m.{k}": v for k, v in opt_state.m.items()}
        opt_tensors.update({f"v.{k}": v for k, v in opt_state.v.items()})
        opt_entries, opt_blob = _pack(opt_tensors)
        manifest["optimizer"] = {"name": "adam", "step": opt_state.step, "tensors": opt_entries}
        with open(os.path.join(out_dir, OPTIMIZER_NAME), "wb") as f:
            f.write(opt_blob)
    if rng_state is not None:
        with open(os.path.join(out_dir, RNG_STATE_NAME), "w", encoding="utf-8") as f:
            json.dump({"algo": "splitmix64", "state": rng_state}, f, sort_keys=True)
            f.write("\n")
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(ckpt_dir) -> dict:
    path = os.path.join(ckpt_dir, MANIFEST_NAME)
    try:
        with open(path, encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise CheckpointError(f"no manifest at {path}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: bad manifest JSON: {e}") from e
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown format {manifest.get('format')!r}")
    return manifest


def load_checkpoint(ckpt_dir) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    """Returns (params, model config, manifest). Validates shapes and finiteness."""
    manifest = load_manifest(ckpt_dir)
    cfg = ModelConfig(**manifest["model"])
    weights_path = os.path.join(ckpt_dir, WEIGHTS_NAME)
    try:
        with open(weights_path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        raise CheckpointError(f"no weights blob at {weights_path}") from e
    params = _unpack(manifest["tensors"], blob, weights_path)
    validate_params(params, cfg)
    return params, cfg, manifest


def load_optimizer(ckpt_dir, manifest: dict) -> AdamState | None:
    if "optimizer" not in manifest:
        return None
    opt_path = os.path.join(ckpt_dir, OPTIMIZER_NAME)
    try:
        with open(opt_path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        raise CheckpointError(f"manifest lists an optimizer but {opt_path} is missing") from e
    tensors = _unpack(manifest["optimizer"]["tensors"], blob, opt_path)
    state = AdamState(step=int(manifest["optimizer"]["step"]))
    for name, arr in tensors.items():
        if name.startswith("m."):
            state.m[name[2:]] = arr
        elif name.startswith("v."):
            state.v[name[2:]] = arr
        else:
            raise CheckpointError(f"{opt_path}: unexpected optimizer tensor {name}")
    return state


def load_rng_state(ckpt_dir) -> int | None:
    path = os.path.join(ckpt_dir, RNG_STATE_NAME)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: bad rng_state JSON: {e}") from e
    if payload.get("algo") != "splitmix64":
        raise CheckpointError(f"{path}: unknown rng algorithm {payload.get('algo')!r}")
    return int(payload["state"])
