# objectives/contrastive.py
"""
Contrastive loss over seed-pair batches with debiased, hardness-weighted
negatives.

A batch of N pairs gives 2N anchors Z = [z1[b1]; z2[b2]]. Anchor i's positive
is j(i) = (i + N) mod 2N; its negatives are the other 2N - 2 anchors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from config.models import ContrastiveConfig
from diffcore import ops
from diffcore.tensor import DiffTensor

Pair = Tuple[int, int]


@dataclass(frozen=True)
class ContrastiveTerms:
    loss: DiffTensor
    positive_mass: np.ndarray     # S+ per anchor
    negative_mass: np.ndarray     # S- per anchor, after the floor
    floor: float


def _anchor_masks(n_pairs: int) -> Tuple[np.ndarray, np.ndarray]:
    m = 2 * n_pairs
    idx = np.arange(m)
    partner = (idx + n_pairs) % m
    positive = np.zeros((m, m))
    positive[idx, partner] = 1.0
    negative = 1.0 - positive - np.eye(m)
    return positive, negative


def _scaled_similarity(z1: DiffTensor, z2: DiffTensor, batch: Sequence[Pair], temperature: float, clip: float):
    if len(batch) < 2:
        raise ValueError(f"contrastive loss needs at least 2 pairs per batch, got {len(batch)}")
    b1 = [int(p[0]) for p in batch]
    b2 = [int(p[1]) for p in batch]
    anchors = ops.concat([ops.gather_rows(z1, b1), ops.gather_rows(z2, b2)], axis="rows")
    sim = ops.scalar_mul(ops.matmul(anchors, ops.transpose(anchors)), 1.0 / temperature)
    return ops.clip(sim, hi=clip)


def contrastive_terms(
    z1: DiffTensor,
    z2: DiffTensor,
    batch: Sequence[Pair],
    cfg: ContrastiveConfig,
) -> ContrastiveTerms:
    n = len(batch)
    s = _scaled_similarity(z1, z2, batch, cfg.temperature, cfg.similarity_clip)
    pos_mask, neg_mask = _anchor_masks(n)
    n_neg = 2 * n - 2

    s_pos = ops.sum(ops.mul(s, ops.constant(pos_mask)), axis=1)
    pos_mass = ops.exp(s_pos)

    beta = cfg.beta_hardness
    neg = ops.constant(neg_mask)
    weighted = ops.sum(ops.mul(ops.exp(ops.scalar_mul(s, 1.0 + beta)), neg), axis=1)
    weights = ops.sum(ops.mul(ops.exp(ops.scalar_mul(s, beta)), neg), axis=1)
    reweighted = ops.scalar_mul(ops.div(weighted, weights), float(n_neg))

    tau = cfg.tau_plus
    debiased = ops.scalar_mul(
        ops.add(ops.scalar_mul(pos_mass, -n_neg * tau), reweighted),
        1.0 / (1.0 - tau),
    )
    floor = float(np.exp(-1.0 / cfg.temperature))
    neg_mass = ops.clip(debiased, lo=floor)

    per_anchor = ops.sub(ops.log(ops.add(pos_mass, neg_mass)), s_pos)
    return ContrastiveTerms(
        loss=ops.sum(per_anchor),
        positive_mass=pos_mass.values[:, 0].copy(),
        negative_mass=neg_mass.values[:, 0].copy(),
        floor=floor,
    )


def contrastive_loss(z1: DiffTensor, z2: DiffTensor, batch: Sequence[Pair], cfg: ContrastiveConfig) -> DiffTensor:
    """sum over anchors of -log(S+ / (S+ + S-))."""
    return contrastive_terms(z1, z2, batch, cfg).loss


def plain_contrastive_loss(
    z1: DiffTensor,
    z2: DiffTensor,
    batch: Sequence[Pair],
    temperature: float,
    similarity_clip: float = 60.0,
) -> DiffTensor:
    """Unweighted in-batch objective: -log(S+ / (S+ + sum_k exp(s_ik)))."""
    s = _scaled_similarity(z1, z2, batch, temperature, similarity_clip)
    pos_mask, neg_mask = _anchor_masks(len(batch))
    s_pos = ops.sum(ops.mul(s, ops.constant(pos_mask)), axis=1)
    everything = ops.sum(ops.mul(ops.exp(s), ops.constant(pos_mask + neg_mask)), axis=1)
    return ops.sum(ops.sub(ops.log(everything), s_pos))


__all__ = ["ContrastiveTerms", "contrastive_terms", "contrastive_loss", "plain_contrastive_loss"]
