"""Flat binary parameter checkpoints.

Layout: one JSON header line (UTF-8, ending in a newline) followed by
the concatenated raw little-endian float64 payloads of every tensor.
The header records name, shape, and element offset for each tensor plus
an arbitrary metadata dict, so a file is self-describing and the byte
stream is a pure function of (metadata, insertion-ordered parameters).
Equal parameters therefore produce bitwise-equal files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

_MAGIC = "affdial-ckpt"
_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed or does not match expectations."""


def save_checkpoint(path, params: dict, meta: dict | None = None) -> None:
    """Write parameters (Tensors or arrays) plus metadata to ``path``."""
    entries = []
    blobs = []
    offset = 0
    for name, p in params.items():
        arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes(order="C"))
        offset += arr.size
    header = {
        "magic": _MAGIC,
        "version": _VERSION,
        "meta": meta or {},
        "tensors": entries,
        "n_elements": offset,
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (name -> float64 array, metadata)."""
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
    if header.get("magic") != _MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    if header.get("version") != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    n_elements = header.get("n_elements", 0)
    if len(payload) != 8 * n_elements:
        raise CheckpointError(
            f"{path}: payload holds {len(payload)} bytes, header claims {8 * n_elements}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    out: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + size > n_elements:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} overruns payload")
        out[entry["name"]] = np.array(flat[start : start + size], dtype=np.float64).reshape(shape)
    return out, header.get("meta", {})
