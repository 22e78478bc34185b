# tests/conftest.py
from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np
import pytest

from config.models import (
    ContrastiveConfig,
    EncoderConfig,
    InferenceConfig,
    OTConfig,
    PPRConfig,
    SyntheticSpec,
    TrainSettings,
)
from kg.graph import KnowledgeGraph
from kg.synthetic import generate_synthetic


def make_kg(n: int, edges: Iterable[Tuple[int, int]], relation_count: int = 1) -> KnowledgeGraph:
    """Undirected test graph; every edge gets relation 0."""
    triples = np.asarray([(a, 0, b) for a, b in edges], dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(entity_count=n, relation_count=relation_count, triples=triples)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(
        core_size=30,
        dangling_fraction_1=0.2,
        dangling_fraction_2=0.2,
        relation_count=3,
        avg_degree=3.0,
        rng_seed=7,
    )


@pytest.fixture
def tiny_corpus(tiny_spec):
    return generate_synthetic(tiny_spec)


@pytest.fixture
def iso_corpus():
    return generate_synthetic(SyntheticSpec(core_size=20, relation_count=2, avg_degree=3.0, rng_seed=3))


@pytest.fixture
def small_encoder():
    return EncoderConfig(depth=1, heads=1, hidden_dim=4, proxy_count=3, dropout=0.0)


@pytest.fixture
def small_plan_parts(small_encoder):
    return {
        "encoder": small_encoder,
        "contrastive": ContrastiveConfig(),
        "ot": OTConfig(schedule_horizon=2),
        "ppr": PPRConfig(seed_sample_size=4),
        "train": TrainSettings(epochs=2, turns=2, batch_size=4, lr=0.01),
    }


@pytest.fixture
def cosine_only():
    return InferenceConfig(use_hos=False, use_csls=False)
