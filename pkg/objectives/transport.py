# objectives/transport.py
"""
Batch-level optimal transport between the two sides of a seed batch.

The coupling comes from log-domain Sinkhorn scaling on the current cost
values and is then held fixed, so gradients reach the embeddings through
the cost matrix only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import structlog
from scipy.special import logsumexp

from config.models import OTConfig
from diffcore import ops
from diffcore.tensor import DiffTensor, ShapeError

log = structlog.get_logger(__name__)


@dataclass(frozen=True)
class SinkhornResult:
    plan: np.ndarray
    converged: bool
    iterations: int
    marginal_error: float


@dataclass(frozen=True)
class OTResult:
    loss: DiffTensor
    plan: np.ndarray
    converged: bool
    iterations: int
    marginal_error: float


def _epsilon_ladder(cost: np.ndarray, epsilon: float, ratio: float) -> List[float]:
    """Geometric schedule from the cost range down to epsilon; just [epsilon] when the range is already small."""
    ladder: List[float] = []
    eps = float(np.ptp(cost))
    while eps > epsilon:
        ladder.append(eps)
        eps *= ratio
    ladder.append(epsilon)
    return ladder


def sinkhorn(
    cost: np.ndarray,
    epsilon: float,
    max_iters: int = 200,
    tolerance: float = 1e-6,
    a: Optional[np.ndarray] = None,
    b: Optional[np.ndarray] = None,
    scaling_ratio: float = 0.5,
) -> SinkhornResult:
    """
    Entropic coupling between marginals a (rows) and b (cols), uniform when
    omitted.

    Dual potentials f, g (cost units) are solved on a decreasing epsilon
    ladder, each stage warm-started from the previous one, for at most
    max_iters updates per stage. A stage stops once max |P 1 - a| <=
    tolerance (columns are exact after each update); `converged` and
    `marginal_error` describe the last stage, run at `epsilon`.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError(f"sinkhorn needs a non-empty cost matrix, got shape {cost.shape}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < scaling_ratio < 1.0:
        raise ValueError("scaling_ratio must lie in (0, 1)")
    n, m = cost.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    log_a, log_b = np.log(a), np.log(b)

    f = np.zeros(n)
    g = np.zeros(m)
    total = 0
    err = np.inf
    eps = epsilon
    for eps in _epsilon_ladder(cost, epsilon, scaling_ratio):
        err = np.inf
        for _ in range(max_iters):
            f = eps * (log_a - logsumexp((g[None, :] - cost) / eps, axis=1))
            g = eps * (log_b - logsumexp((f[:, None] - cost) / eps, axis=0))
            total += 1
            plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
            err = float(np.max(np.abs(plan.sum(axis=1) - a)))
            if err <= tolerance:
                break
    plan = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return SinkhornResult(plan=plan, converged=err <= tolerance, iterations=total, marginal_error=err)


def squared_distance_cost(x1: DiffTensor, x2: DiffTensor) -> DiffTensor:
    """C_ij = |x1_i - x2_j|^2 = |x1_i|^2 + |x2_j|^2 - 2 x1_i . x2_j, differentiable in both inputs."""
    if x1.shape[1] != x2.shape[1]:
        raise ShapeError("squared_distance_cost", x1.shape, x2.shape)
    n, m = x1.shape[0], x2.shape[0]
    sq1 = ops.sum(ops.mul(x1, x1), axis=1)
    sq2 = ops.sum(ops.mul(x2, x2), axis=1)
    cross = ops.matmul(x1, ops.transpose(x2))
    return ops.sub(
        ops.add(ops.tile_cols(sq1, m), ops.transpose(ops.tile_cols(sq2, n))),
        ops.scalar_mul(cross, 2.0),
    )


def ot_loss(x1: DiffTensor, x2: DiffTensor, cfg: OTConfig, mass: float = 1.0) -> OTResult:
    """
    mass * <C, P> with P the (constant) entropic coupling of the batch under
    uniform marginals. mass = 1 is the plain transport cost; the trainer
    passes the batch size when every pair should carry unit mass.
    """
    if x1.shape[0] == 0 or x2.shape[0] == 0:
        raise ValueError("ot_loss: empty batch")
    if mass <= 0:
        raise ValueError("ot_loss: mass must be positive")
    cost = squared_distance_cost(x1, x2)
    res = sinkhorn(
        cost.values,
        cfg.epsilon,
        cfg.max_sinkhorn_iters,
        cfg.marginal_tolerance,
        scaling_ratio=cfg.scaling_ratio,
    )
    if not res.converged:
        log.warning(
            "sinkhorn did not converge",
            iterations=res.iterations,
            marginal_error=res.marginal_error,
            tolerance=cfg.marginal_tolerance,
        )
    loss = ops.sum(ops.mul(cost, ops.constant(res.plan)))
    if mass != 1.0:
        loss = ops.scalar_mul(loss, float(mass))
    return OTResult(
        loss=loss,
        plan=res.plan,
        converged=res.converged,
        iterations=res.iterations,
        marginal_error=res.marginal_error,
    )


__all__ = ["SinkhornResult", "OTResult", "sinkhorn", "squared_distance_cost", "ot_loss"]
