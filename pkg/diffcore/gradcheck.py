# diffcore/gradcheck.py
"""Central finite-difference checks for anything built on the tape."""
from __future__ import annotations

from typing import Callable, Dict, Mapping

import numpy as np

from diffcore.tensor import ComputationRecord, DiffTensor, backward

# build(record, {name: param tensor}) -> scalar DiffTensor
ScalarBuilder = Callable[[ComputationRecord, Dict[str, DiffTensor]], DiffTensor]


def _evaluate(build: ScalarBuilder, params: Mapping[str, np.ndarray]):
    rec = ComputationRecord()
    tensors = {name: rec.param(name, value) for name, value in params.items()}
    return rec, build(rec, tensors)


def analytic_gradients(build: ScalarBuilder, params: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    rec, out = _evaluate(build, params)
    return backward(out, rec)


def numeric_gradients(
    build: ScalarBuilder,
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> Dict[str, np.ndarray]:
    base = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    grads: Dict[str, np.ndarray] = {}
    for name, value in base.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = _evaluate(build, base)[1].item()
            flat[i] = keep - h
            down = _evaluate(build, base)[1].item()
            flat[i] = keep
            g.reshape(-1)[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|n|, max|a|, 1e-12)."""
    diff = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
    scale = max(
        float(np.max(np.abs(numeric))) if numeric.size else 0.0,
        float(np.max(np.abs(analytic))) if analytic.size else 0.0,
        1e-12,
    )
    return diff / scale


def check_gradients(
    build: ScalarBuilder,
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> Dict[str, float]:
    """Relative error per parameter name."""
    a = analytic_gradients(build, params)
    n = numeric_gradients(build, params, h)
    return {name: relative_error(a[name], n[name]) for name in params}


__all__ = ["ScalarBuilder", "analytic_gradients", "numeric_gradients", "relative_error", "check_gradients"]
