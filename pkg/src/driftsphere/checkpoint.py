"""Versioned JSON checkpoint container with bit-exact array round-trips.

Arrays are stored as base64 of their little-endian float64 bytes, so a
load reproduces every parameter bit for bit; metadata (shapes, metric
config, seed, step counter) travels alongside.  Keys are written sorted
so identical states serialize to identical bytes.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .exceptions import DomainError

FORMAT_VERSION = 1

__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "dtype": "<f8",
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    a = np.frombuffer(raw, dtype=np.dtype(spec["dtype"])).copy()
    return a.reshape(spec["shape"])


def save_checkpoint(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    """Write a checkpoint of named arrays plus JSON-serializable metadata."""
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta or {},
        "arrays": {name: _encode_array(a) for name, a in arrays.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> tuple[str, dict, dict]:
    """Return (kind, arrays, meta) from a checkpoint file."""
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DomainError(f"unsupported checkpoint format_version {version!r}")
    arrays = {name: _decode_array(spec) for name, spec in doc["arrays"].items()}
    return doc["kind"], arrays, doc.get("meta", {})
