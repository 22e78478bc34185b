# diffcore/optim.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from diffcore.tensor import ShapeError


def xavier_uniform(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """U(-l, l) with l = sqrt(6 / (fan_in + fan_out)); fan_in = shape[0], fan_out = shape[-1]."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("xavier_uniform needs at least one dimension")
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class RMSPropState:
    """Running mean of squared gradients, one accumulator per parameter name."""

    mean_square: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def accumulator(self, name: str, shape: Tuple[int, ...]) -> np.ndarray:
        acc = self.mean_square.get(name)
        if acc is None:
            acc = np.zeros(shape, dtype=np.float64)
            self.mean_square[name] = acc
        elif acc.shape != shape:
            raise ShapeError("rmsprop_step", acc.shape, shape, detail=f"accumulator for {name!r}")
        return acc


def rmsprop_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: RMSPropState,
    lr: float,
    decay: float = 0.9,
    eps: float = 1e-8,
) -> Dict[str, np.ndarray]:
    """
    v <- decay*v + (1-decay)*g^2 ;  theta <- theta - lr*g/sqrt(v+eps)
    Returns new parameter arrays; `state` is updated in place. Parameters
    without a gradient entry are carried over unchanged.
    """
    out: Dict[str, np.ndarray] = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = theta
            continue
        if g.shape != theta.shape:
            raise ShapeError("rmsprop_step", theta.shape, g.shape, detail=name)
        v = state.accumulator(name, theta.shape)
        v *= decay
        v += (1.0 - decay) * g * g
        out[name] = theta - lr * g / np.sqrt(v + eps)
    state.steps += 1
    return out


__all__ = ["xavier_uniform", "RMSPropState", "rmsprop_step"]
