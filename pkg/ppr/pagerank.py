# ppr/pagerank.py
"""
Personalized PageRank from one source over a KG's undirected walk matrix
(isolated vertices carry a self-loop). Power iteration is the reference;
forward push is the local approximation.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import structlog

from config.models import PPRConfig, PPRMethod
from kg.graph import KnowledgeGraph
from utils.parallel import parallel_map

log = structlog.get_logger(__name__)


def _check_source(kg: KnowledgeGraph, source: int) -> int:
    s = int(source)
    if not 0 <= s < kg.entity_count:
        raise ValueError(f"PPR source {source} outside [0, {kg.entity_count})")
    return s


def power_iteration(kg: KnowledgeGraph, source: int, cfg: PPRConfig) -> np.ndarray:
    """p <- alpha*e_s + (1-alpha) W^T p until the L1 change drops below power_tolerance."""
    s = _check_source(kg, source)
    walk_t = kg.walk_matrix.T.tocsr()
    restart = np.zeros(kg.entity_count)
    restart[s] = 1.0
    p = restart.copy()
    alpha = cfg.alpha
    for it in range(1, cfg.max_power_iters + 1):
        nxt = alpha * restart + (1.0 - alpha) * (walk_t @ p)
        delta = float(np.abs(nxt - p).sum())
        p = nxt
        if delta < cfg.power_tolerance:
            break
    else:
        log.warning("ppr power iteration hit max_power_iters", source=s, last_delta=delta)
    return p


def forward_push(kg: KnowledgeGraph, source: int, cfg: PPRConfig) -> np.ndarray:
    """
    Residual pushing, all vertices over the threshold at once per round.
    Stops when every residual is <= push_tolerance / n, so the leftover mass
    is at most push_tolerance; the estimate is renormalized to sum 1.
    """
    s = _check_source(kg, source)
    n = kg.entity_count
    walk_t = kg.walk_matrix.T.tocsr()
    alpha = cfg.alpha
    threshold = cfg.push_tolerance / n
    estimate = np.zeros(n)
    residual = np.zeros(n)
    residual[s] = 1.0
    rounds = 0
    frontier = np.flatnonzero(residual > threshold)
    while len(frontier):
        mass = residual[frontier]
        estimate[frontier] += alpha * mass
        pushed = np.zeros(n)
        pushed[frontier] = (1.0 - alpha) * mass
        residual[frontier] = 0.0
        residual += walk_t @ pushed
        frontier = np.flatnonzero(residual > threshold)
        rounds += 1
    total = estimate.sum()
    log.debug("forward push done", source=s, rounds=rounds, leftover=float(residual.sum()))
    return estimate / total


def ppr(kg: KnowledgeGraph, source: int, cfg: PPRConfig) -> np.ndarray:
    """pi(source, .) as a dense vector summing to 1."""
    if PPRMethod(cfg.method) is PPRMethod.FORWARD_PUSH:
        return forward_push(kg, source, cfg)
    return power_iteration(kg, source, cfg)


def ppr_columns(kg: KnowledgeGraph, sources: Sequence[int], cfg: PPRConfig) -> np.ndarray:
    """(n, len(sources)) matrix, column k = ppr(kg, sources[k]). Sources run through parallel_map."""
    cols = parallel_map(lambda s: ppr(kg, s, cfg), list(sources))
    if not cols:
        return np.zeros((kg.entity_count, 0))
    return np.column_stack(cols)


__all__ = ["power_iteration", "forward_push", "ppr", "ppr_columns"]
