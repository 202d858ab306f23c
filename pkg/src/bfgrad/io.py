"""Tensor dumps: raw little-endian float64 (re, im) pairs plus a JSON sidecar."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_tensor(path, array, **meta) -> None:
    """Write ``path`` (binary) and ``path`` with suffix ``.json`` (shape, dtype, order)."""
    path = Path(path)
    arr = np.asarray(array, dtype=np.complex128)
    pairs = np.stack([arr.real, arr.imag], axis=-1).astype("<f8")
    path.write_bytes(np.ascontiguousarray(pairs).tobytes(order="C"))
    sidecar = {"shape": list(arr.shape), "dtype": "complex128",
               "encoding": "float64 (re, im) pairs, little-endian", "order": "C", **meta}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    pairs = raw.reshape(tuple(meta["shape"]) + (2,))
    return pairs[..., 0] + 1j * pairs[..., 1]
