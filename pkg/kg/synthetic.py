# kg/synthetic.py
"""
Desk-scale two-KG generator.

A shared core graph is copied into both KGs (each copy loses edges
independently with probability `edge_dropout`), then each KG grows its own
dangling entities attached only to its own nodes. KG2 ids are a random
permutation so nothing downstream can align by id.
"""
from __future__ import annotations

from typing import List, Set, Tuple

import numpy as np
import structlog

import config.settings as settings
from config.models import Direction, SyntheticSpec
from kg.graph import AlignmentCorpus, KnowledgeGraph

log = structlog.get_logger(__name__)

Edge = Tuple[int, int, int]


def _core_edges(spec: SyntheticSpec, rng: np.random.Generator) -> List[Edge]:
    n = spec.core_size
    target = max(1, int(round(n * spec.avg_degree / 2)))
    seen: Set[Tuple[int, int]] = set()
    edges: List[Edge] = []
    while len(edges) < target:
        a, b = rng.integers(0, n, size=2)
        if a == b:
            continue
        key = (int(min(a, b)), int(max(a, b)))
        if key in seen:
            continue
        seen.add(key)
        edges.append((key[0], int(rng.integers(0, spec.relation_count)), key[1]))
    return edges


def _dangling_count(core: int, fraction: float) -> int:
    return int(round(core / (1.0 - fraction))) - core


def _attach_dangling(
    first_id: int,
    count: int,
    avg_degree: float,
    relation_count: int,
    rng: np.random.Generator,
) -> List[Edge]:
    """Each new entity links to earlier entities of the same KG; mean degree stays ~avg_degree."""
    edges: List[Edge] = []
    half = avg_degree / 2.0
    base, frac = int(np.floor(half)), half - np.floor(half)
    for v in range(first_id, first_id + count):
        k = max(1, base + int(rng.random() < frac))
        targets = rng.choice(v, size=min(k, v), replace=False)
        for u in sorted(int(x) for x in targets):
            edges.append((v, int(rng.integers(0, relation_count)), u))
    return edges


def _splits(items: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = rng.permutation(len(items))
    tr, va, _ = settings.SPLIT_RATIOS
    n_tr = int(round(tr * len(items)))
    n_va = int(round(va * len(items)))
    shuffled = items[order]
    return shuffled[:n_tr], shuffled[n_tr:n_tr + n_va], shuffled[n_tr + n_va:]


def generate_synthetic(spec: SyntheticSpec, direction: Direction = Direction.BOTH) -> AlignmentCorpus:
    """Deterministic for a fixed spec (rng_seed included)."""
    if not isinstance(spec, SyntheticSpec):
        spec = SyntheticSpec.model_validate(spec)
    rng = np.random.default_rng(spec.rng_seed)
    core = spec.core_size
    core_edges = _core_edges(spec, rng)

    graphs = []
    for side, fraction in ((1, spec.dangling_fraction_1), (2, spec.dangling_fraction_2)):
        kept = [e for e in core_edges if rng.random() >= spec.edge_dropout]
        n_dangling = _dangling_count(core, fraction)
        kept += _attach_dangling(core, n_dangling, spec.avg_degree, spec.relation_count, rng)
        graphs.append((kept, core + n_dangling))

    (edges1, n1), (edges2, n2) = graphs
    # KG2 ids: random relabeling of (core + dangling) so core ids do not line up
    perm = rng.permutation(n2)
    edges2 = [(int(perm[h]), r, int(perm[t])) for h, r, t in edges2]

    def rel_labels(side: int) -> Tuple[str, ...]:
        return tuple(f"kg{side}/r{i}" for i in range(spec.relation_count))

    kg1 = KnowledgeGraph(
        entity_count=n1,
        relation_count=spec.relation_count,
        triples=np.asarray(edges1, dtype=np.int64).reshape(-1, 3),
        entity_labels=tuple(f"kg1/e{i}" for i in range(n1)),
        relation_labels=rel_labels(1),
    )
    kg2 = KnowledgeGraph(
        entity_count=n2,
        relation_count=spec.relation_count,
        triples=np.asarray(edges2, dtype=np.int64).reshape(-1, 3),
        entity_labels=tuple(f"kg2/e{i}" for i in range(n2)),
        relation_labels=rel_labels(2),
    )

    links = np.column_stack([np.arange(core), perm[:core]]).astype(np.int64)
    train, valid, test = _splits(links, rng)
    # labeled dangling entities follow the same ratios; the train share is never materialized
    _, d1_valid, d1_test = _splits(np.arange(core, n1), rng)
    _, d2_valid, d2_test = _splits(perm[core:n2], rng)

    corpus = AlignmentCorpus(
        kg1=kg1,
        kg2=kg2,
        seed_train=[tuple(p) for p in train.tolist()],
        links_valid=[tuple(p) for p in valid.tolist()],
        links_test=[tuple(p) for p in test.tolist()],
        dangling1_valid=frozenset(d1_valid.tolist()),
        dangling1_test=frozenset(d1_test.tolist()),
        dangling2_valid=frozenset(d2_valid.tolist()),
        dangling2_test=frozenset(d2_test.tolist()),
        direction=direction,
    )
    log.info(
        "synthetic corpus generated",
        core=core,
        kg1_entities=n1,
        kg2_entities=n2,
        kg1_triples=len(edges1),
        kg2_triples=len(edges2),
        seed=spec.rng_seed,
    )
    return corpus
