# utils/hashing.py
from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable

import numpy as np


def stable_json(obj: Any) -> str:
    """Canonical JSON: sorted keys, no whitespace, floats via repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def hash_json(obj: Any) -> str:
    return hashlib.sha256(stable_json(obj).encode("utf-8")).hexdigest()


def hash_arrays(parts: Iterable[Any]) -> str:
    """
    Content hash over a sequence of numpy arrays / strings / ints.
    Arrays contribute dtype, shape and little-endian bytes so equal content
    hashes equally across platforms.
    """
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            arr = np.ascontiguousarray(p)
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            h.update(f"{arr.dtype.str}:{arr.shape}".encode("utf-8"))
            h.update(arr.tobytes())
        else:
            h.update(b"\x00")
            h.update(str(p).encode("utf-8"))
    return h.hexdigest()

