"""Checkpoint directories: manifest.json + tensors.bin.

The manifest records the format version, the vocabulary, model
hyperparameters, the training step and the RNG state (seed; streams are
counter-based so seed + step reconstruct them). tensors.bin is the
concatenation of the named parameter tensors in sorted-name order as raw
little-endian bytes, so save/load round-trips are bitwise exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import CHECKPOINT_FORMAT_VERSION
from .vocab import SYMBOLS

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict[str, np.ndarray]

    @property
    def kind(self) -> str:
        return self.manifest["kind"]

    @property
    def config(self) -> dict:
        return self.manifest["config"]

    @property
    def step(self) -> int:
        return self.manifest["step"]


def save_checkpoint(
    path,
    tensors: dict[str, np.ndarray],
    *,
    kind: str,
    config: dict,
    step: int = 0,
    seed: int = 0,
) -> None:
    os.makedirs(path, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype_name = _DTYPE_NAMES.get(arr.dtype)
        if dtype_name is None:
            raise CheckpointError(
                f"tensor {name!r} has unsupported dtype {arr.dtype}; "
                f"only f32/f64 are stored"
            )
        blob = arr.astype(_DTYPES[dtype_name], copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype_name,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "vocabulary": SYMBOLS,
        "config": config,
        "step": int(step),
        "rng": {"seed": int(seed)},
        "tensors": entries,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(path, "tensors.bin"), "wb") as fh:
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, expected_names=None) -> Checkpoint:
    manifest_path = os.path.join(path, "manifest.json")
    bin_path = os.path.join(path, "tensors.bin")
    if not os.path.isfile(manifest_path):
        raise CheckpointError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt manifest {manifest_path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported; "
            f"this build reads version {CHECKPOINT_FORMAT_VERSION}"
        )
    if manifest.get("vocabulary") != SYMBOLS:
        raise CheckpointError("checkpoint vocabulary does not match this build")
    try:
        with open(bin_path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing tensor data file {bin_path}") from exc
    total = sum(entry["nbytes"] for entry in manifest["tensors"])
    if len(raw) != total:
        raise CheckpointError(
            f"tensor data file {bin_path} has {len(raw)} bytes, manifest "
            f"expects {total} (truncated or corrupt)"
        )
    tensors = {}
    for entry in manifest["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"tensor {entry['name']!r}: bad dtype {entry['dtype']!r}")
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(raw[start : start + nbytes], dtype=dtype)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    if expected_names is not None:
        missing = sorted(set(expected_names) - set(tensors))
        if missing:
            raise CheckpointError(f"checkpoint is missing tensor {missing[0]!r}")
    return Checkpoint(manifest=manifest, tensors=tensors)
