# kg/graph.py
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from config.models import Direction
from utils.hashing import hash_arrays

Pair = Tuple[int, int]


class CorpusValidationError(ValueError):
    """Split overlap or a dangling entity that also appears in a link."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """
    One KG: dense entity/relation ids and (head, relation, tail) triples.
    Neighborhoods are undirected (head <-> tail) and deduplicated.
    """

    entity_count: int
    relation_count: int
    triples: np.ndarray                      # int64 [m, 3]
    entity_labels: Optional[Tuple[str, ...]] = None
    relation_labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        t = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if self.entity_count < 0 or self.relation_count < 0:
            raise ValueError("entity_count and relation_count must be non-negative")
        if len(t):
            if t[:, [0, 2]].min() < 0 or t[:, [0, 2]].max() >= self.entity_count:
                raise ValueError(f"triple entity id out of range [0, {self.entity_count})")
            if t[:, 1].min() < 0 or t[:, 1].max() >= self.relation_count:
                raise ValueError(f"triple relation id out of range [0, {self.relation_count})")
        if self.entity_labels is not None and len(self.entity_labels) != self.entity_count:
            raise ValueError("entity_labels length must equal entity_count")
        if self.relation_labels is not None and len(self.relation_labels) != self.relation_count:
            raise ValueError("relation_labels length must equal relation_count")
        object.__setattr__(self, "triples", _frozen(t))

    # -- neighborhoods ---------------------------------------------------

    @cached_property
    def _neighbor_pairs(self) -> np.ndarray:
        """Unique (entity, neighbor, relation) rows, both directions, sorted."""
        t = self.triples
        if not len(t):
            return np.zeros((0, 3), dtype=np.int64)
        fwd = t[:, [0, 2, 1]]
        bwd = t[:, [2, 0, 1]]
        both = np.unique(np.vstack([fwd, bwd]), axis=0)
        return _frozen(both)

    @cached_property
    def neighbor_index(self) -> Dict[int, List[Tuple[int, int]]]:
        out: Dict[int, List[Tuple[int, int]]] = {e: [] for e in range(self.entity_count)}
        for e, n, r in self._neighbor_pairs.tolist():
            out[e].append((n, r))
        return out

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Undirected 0/1 adjacency (relations collapsed)."""
        n = self.entity_count
        pairs = self._neighbor_pairs
        if not len(pairs):
            return sp.csr_matrix((n, n), dtype=np.float64)
        rc = np.unique(pairs[:, :2], axis=0)
        data = np.ones(len(rc), dtype=np.float64)
        return sp.csr_matrix((data, (rc[:, 0], rc[:, 1])), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.diff(self.adjacency.indptr).astype(np.int64))

    @cached_property
    def walk_matrix(self) -> sp.csr_matrix:
        """Row-stochastic transition matrix; isolated vertices get a self-loop."""
        adj = self.adjacency.tolil(copy=True)
        for v in np.flatnonzero(self.degrees == 0):
            adj[v, v] = 1.0
        adj = adj.tocsr()
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return (sp.diags(inv) @ adj).tocsr()

    @cached_property
    def attention_edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """(src, dst) edge arrays with a self-loop on every entity, grouped by src."""
        adj = self.adjacency + sp.eye(self.entity_count, format="csr")
        adj = adj.tocsr()
        adj.sum_duplicates()
        adj.sort_indices()
        src = np.repeat(np.arange(self.entity_count), np.diff(adj.indptr))
        return _frozen(src.astype(np.int64)), _frozen(adj.indices.astype(np.int64))

    def label_of(self, entity: int) -> str:
        if self.entity_labels is None:
            return str(entity)
        return self.entity_labels[entity]

    def id_of(self, label: str) -> int:
        idx = self._label_index.get(label)
        if idx is None:
            raise KeyError(f"unknown entity {label!r}")
        return idx

    @cached_property
    def _label_index(self) -> Dict[str, int]:
        if self.entity_labels is None:
            return {str(i): i for i in range(self.entity_count)}
        return {u: i for i, u in enumerate(self.entity_labels)}


@dataclass(frozen=True, eq=False)
class TrainingView:
    """What training code may see: structure and seeds, never dangling labels."""

    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    seed_train: Tuple[Pair, ...]


@dataclass(frozen=True, eq=False)
class AlignmentCorpus:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    seed_train: Tuple[Pair, ...]
    links_valid: Tuple[Pair, ...]
    links_test: Tuple[Pair, ...]
    dangling1_valid: FrozenSet[int] = field(default_factory=frozenset)
    dangling1_test: FrozenSet[int] = field(default_factory=frozenset)
    dangling2_valid: FrozenSet[int] = field(default_factory=frozenset)
    dangling2_test: FrozenSet[int] = field(default_factory=frozenset)
    direction: Direction = Direction.BOTH

    def __post_init__(self) -> None:
        for name in ("seed_train", "links_valid", "links_test"):
            object.__setattr__(self, name, tuple((int(a), int(b)) for a, b in getattr(self, name)))
        for name in ("dangling1_valid", "dangling1_test", "dangling2_valid", "dangling2_test"):
            object.__setattr__(self, name, frozenset(int(x) for x in getattr(self, name)))
        object.__setattr__(self, "direction", Direction(self.direction))
        self.validate()

    def validate(self) -> None:
        errors: List[str] = []
        splits = {"train": self.seed_train, "valid": self.links_valid, "test": self.links_test}
        names = list(splits)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                for side in (0, 1):
                    shared = {p[side] for p in splits[a]} & {p[side] for p in splits[b]}
                    if shared:
                        errors.append(
                            f"{a}/{b} links share {len(shared)} kg{side + 1} entities (e.g. {min(shared)})"
                        )
        for side, kg in ((0, self.kg1), (1, self.kg2)):
            for pair in (*self.seed_train, *self.links_valid, *self.links_test):
                if not 0 <= pair[side] < kg.entity_count:
                    errors.append(f"link {pair} has kg{side + 1} id outside [0, {kg.entity_count})")
                    break
        linked1 = {p[0] for s in splits.values() for p in s}
        linked2 = {p[1] for s in splits.values() for p in s}
        d1 = self.dangling1_valid | self.dangling1_test
        d2 = self.dangling2_valid | self.dangling2_test
        if self.dangling1_valid & self.dangling1_test:
            errors.append("kg1 dangling valid/test sets overlap")
        if self.dangling2_valid & self.dangling2_test:
            errors.append("kg2 dangling valid/test sets overlap")
        if d1 & linked1:
            errors.append(f"{len(d1 & linked1)} kg1 entities are both linked and dangling")
        if d2 & linked2:
            errors.append(f"{len(d2 & linked2)} kg2 entities are both linked and dangling")
        if errors:
            raise CorpusValidationError("Invalid corpus:\n  - " + "\n  - ".join(errors))

    def training_view(self) -> TrainingView:
        return TrainingView(kg1=self.kg1, kg2=self.kg2, seed_train=self.seed_train)

    def links(self, split: str) -> Tuple[Pair, ...]:
        return {"train": self.seed_train, "valid": self.links_valid, "test": self.links_test}[split]

    def dangling(self, split: str, side: int) -> FrozenSet[int]:
        key = f"dangling{side}_{split}"
        return getattr(self, key)

    @property
    def all_links(self) -> Tuple[Pair, ...]:
        return self.seed_train + self.links_valid + self.links_test


def degree_histogram(kg: KnowledgeGraph) -> Dict[int, int]:
    """Map degree -> number of entities with that many distinct neighbors."""
    counts = pd.Series(kg.degrees).value_counts().sort_index()
    return {int(k): int(v) for k, v in counts.items()}


def corpus_hash(corpus: AlignmentCorpus) -> str:
    def _pairs(ps: Sequence[Pair]) -> np.ndarray:
        return np.asarray(ps, dtype=np.int64).reshape(-1, 2)

    def _set(s: FrozenSet[int]) -> np.ndarray:
        return np.asarray(sorted(s), dtype=np.int64)

    parts: list = []
    for kg in (corpus.kg1, corpus.kg2):
        parts += [kg.entity_count, kg.relation_count, kg.triples,
                  "|".join(kg.entity_labels or ()), "|".join(kg.relation_labels or ())]
    parts += [_pairs(corpus.seed_train), _pairs(corpus.links_valid), _pairs(corpus.links_test)]
    parts += [_set(corpus.dangling1_valid), _set(corpus.dangling1_test),
              _set(corpus.dangling2_valid), _set(corpus.dangling2_test)]
    return hash_arrays(parts)
