# ppr/hos.py
"""
Seed-relative higher-order similarity.

Each entity gets a score vector: its PPR value from each of |S'| sampled
seed sources in its own KG. Two entities from different KGs match in
proportion to how closely their vectors agree entrywise (min/max ratio).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from config.models import PPRConfig
from ppr.pagerank import ppr_columns
from utils.parallel import parallel_map

log = structlog.get_logger(__name__)

Pair = Tuple[int, int]

# element budget for one min/max block in hos_matrix
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True, eq=False)
class ScoreVectorTable:
    """Row e holds pi(s_k, e) for each sampled seed source s_k of this KG."""

    values: np.ndarray
    sources: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.sources):
            raise ValueError("score table needs one column per source")

    @property
    def sample_size(self) -> int:
        return len(self.sources)


def sample_seeds(seeds: Sequence[Pair], cfg: PPRConfig) -> List[Pair]:
    """min(seed_sample_size, |seeds|) seed pairs drawn with cfg.rng_seed, kept in seed order."""
    seeds = list(seeds)
    k = min(cfg.seed_sample_size, len(seeds))
    if k == 0:
        return []
    rng = np.random.default_rng(cfg.rng_seed)
    picked = np.sort(rng.choice(len(seeds), size=k, replace=False))
    return [seeds[i] for i in picked]


def score_vectors(graphs, seeds_sample: Sequence[Pair], cfg: PPRConfig) -> Tuple[ScoreVectorTable, ScoreVectorTable]:
    """Column k of table 1 is pi(s1_k, .) over KG1, of table 2 pi(s2_k, .) over KG2."""
    s1 = tuple(int(p[0]) for p in seeds_sample)
    s2 = tuple(int(p[1]) for p in seeds_sample)
    t1 = ScoreVectorTable(ppr_columns(graphs.kg1, s1, cfg), s1)
    t2 = ScoreVectorTable(ppr_columns(graphs.kg2, s2, cfg), s2)
    log.info("score vectors computed", sources=len(s1), method=str(cfg.method.value))
    return t1, t2


def mu(p: float, q: float) -> float:
    """min/max agreement of two PPR values; 0 when both are 0."""
    if p < 0 or q < 0:
        raise ValueError(f"mu needs non-negative inputs, got ({p}, {q})")
    hi = max(p, q)
    return 0.0 if hi == 0 else min(p, q) / hi


def hos_score(t1: Sequence[float], t2: Sequence[float]) -> float:
    a = np.asarray(t1, dtype=np.float64)
    b = np.asarray(t2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score vectors differ in length: {a.shape} vs {b.shape}")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("score vectors must be non-negative")
    return float(_mu_sum(a[None, None, :], b[None, None, :])[0, 0])


def _mu_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    ratio = np.divide(lo, hi, out=np.zeros(np.broadcast_shapes(lo.shape, hi.shape)), where=hi > 0)
    return ratio.sum(axis=-1)


def hos_matrix(
    t1: ScoreVectorTable,
    t2: ScoreVectorTable,
    rows: Optional[Sequence[int]] = None,
    cols: Optional[Sequence[int]] = None,
    normalize: bool = True,
) -> np.ndarray:
    """
    HOS between KG1 rows and KG2 cols (all entities by default), divided by
    |S'| when `normalize` so values sit in [0, 1]. Row blocks go through
    parallel_map.
    """
    if t1.sample_size != t2.sample_size:
        raise ValueError(f"score tables use different sample sizes: {t1.sample_size} vs {t2.sample_size}")
    a = t1.values if rows is None else t1.values[np.asarray(rows, dtype=np.int64)]
    b = t2.values if cols is None else t2.values[np.asarray(cols, dtype=np.int64)]
    k = t1.sample_size
    if k == 0:
        return np.zeros((len(a), len(b)))
    block = max(1, _BLOCK_ELEMENTS // max(1, len(b) * k))
    starts = list(range(0, len(a), block))
    parts = parallel_map(lambda s: _mu_sum(a[s:s + block, None, :], b[None, :, :]), starts)
    out = np.vstack(parts) if parts else np.zeros((0, len(b)))
    return out / k if normalize else out


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def composite_similarity(
    emb1: np.ndarray,
    emb2: np.ndarray,
    hos: Optional[np.ndarray] = None,
    weight: float = 1.0,
) -> np.ndarray:
    """cos(e1_i, e2_j) + weight * HOS(i, j)."""
    sim = _unit_rows(np.asarray(emb1, dtype=np.float64)) @ _unit_rows(np.asarray(emb2, dtype=np.float64)).T
    if hos is None or weight == 0:
        return sim
    if hos.shape != sim.shape:
        raise ValueError(f"HOS matrix shape {hos.shape} does not match similarity shape {sim.shape}")
    return sim + weight * hos


def _top_k_mean(sim: np.ndarray, k: int, axis: int) -> np.ndarray:
    size = sim.shape[axis]
    top = np.partition(sim, size - k, axis=axis)
    top = top[:, size - k:] if axis == 1 else top[size - k:, :]
    return top.mean(axis=axis)


def csls_adjust(sim: np.ndarray, k: int) -> np.ndarray:
    """2 sim(i,j) - rT(i) - rS(j), rT / rS the mean of the k largest entries in row i / column j."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2:
        raise ValueError(f"csls_adjust needs a matrix, got shape {sim.shape}")
    limit = min(sim.shape)
    if not 1 <= k <= limit:
        raise ValueError(f"CSLS k must be in [1, {limit}], got {k}")
    r_row = _top_k_mean(sim, k, axis=1)
    r_col = _top_k_mean(sim, k, axis=0)
    return 2.0 * sim - r_row[:, None] - r_col[None, :]


__all__ = [
    "ScoreVectorTable",
    "sample_seeds",
    "score_vectors",
    "mu",
    "hos_score",
    "hos_matrix",
    "composite_similarity",
    "csls_adjust",
]
