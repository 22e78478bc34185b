# objectives/schedule.py
from __future__ import annotations

from typing import Optional, Union

from config.models import OTConfig
from diffcore import ops
from diffcore.tensor import DiffTensor

Scalar = Union[DiffTensor, float]


def omega(epoch: int, horizon: int) -> float:
    """Linear decay 1 -> 0 over `horizon` epochs, then 0."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    return max(0.0, 1.0 - epoch / horizon)


def ot_weight(epoch: int, cfg: OTConfig) -> float:
    if not cfg.enabled:
        return 0.0
    return cfg.lam * omega(epoch, cfg.schedule_horizon)


def combined_loss(l1: Scalar, l2: Optional[Scalar], epoch: int, cfg: OTConfig) -> DiffTensor:
    """L1 + lambda * omega(epoch) * L2; L2 drops out when OT is disabled or omega hits 0."""
    if not isinstance(l1, DiffTensor):
        l1 = ops.constant(l1)
    w = ot_weight(epoch, cfg)
    if l2 is None or w == 0.0:
        return l1
    if not isinstance(l2, DiffTensor):
        l2 = ops.constant(l2)
    return ops.add(l1, ops.scalar_mul(l2, w))


__all__ = ["omega", "ot_weight", "combined_loss"]
