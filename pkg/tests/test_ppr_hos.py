import numpy as np
import pytest

from config.models import PPRConfig, PPRMethod
from ppr.cache import cache_path, load_or_compute
from ppr.hos import (
    ScoreVectorTable,
    composite_similarity,
    csls_adjust,
    hos_matrix,
    hos_score,
    mu,
    sample_seeds,
    score_vectors,
)
from ppr.pagerank import forward_push, power_iteration, ppr
from tests.conftest import make_kg

PUSH = PPRConfig(method=PPRMethod.FORWARD_PUSH, push_tolerance=1e-9)


# -- PPR ------------------------------------------------------------------

def test_isolated_vertex_keeps_all_mass():
    kg = make_kg(1, [])
    for cfg in (PPRConfig(), PUSH):
        np.testing.assert_allclose(ppr(kg, 0, cfg), [1.0])


def test_two_node_closed_form():
    kg = make_kg(2, [(0, 1)])
    pi = ppr(kg, 0, PPRConfig(alpha=0.2))
    assert pi[0] == pytest.approx(0.2 / 0.36, abs=1e-9)
    assert round(pi[0], 4) == 0.5556
    assert round(pi[1], 4) == 0.4444


def test_invalid_source():
    with pytest.raises(ValueError):
        ppr(make_kg(2, [(0, 1)]), 5, PPRConfig())


def _random_graph(g, n, m):
    edges = set()
    while len(edges) < m:
        a, b = g.integers(0, n, size=2)
        if a != b:
            edges.add((int(min(a, b)), int(max(a, b))))
    return make_kg(n, sorted(edges))


def test_forward_push_agrees_with_power_iteration():
    g = np.random.default_rng(9)
    power = PPRConfig(power_tolerance=1e-13, max_power_iters=5000)
    push = PPRConfig(method=PPRMethod.FORWARD_PUSH, push_tolerance=1e-9)
    for _ in range(50):
        n = int(g.integers(5, 120))
        kg = _random_graph(g, n, int(g.integers(n // 2, 2 * n)))
        s = int(g.integers(0, n))
        np.testing.assert_allclose(forward_push(kg, s, push), power_iteration(kg, s, power), atol=1e-6)


def test_forward_push_default_tolerance_on_large_graphs():
    g = np.random.default_rng(21)
    power = PPRConfig(power_tolerance=1e-13, max_power_iters=5000)
    push = PPRConfig(method=PPRMethod.FORWARD_PUSH)
    for _ in range(4):
        n = int(g.integers(500, 1001))
        kg = _random_graph(g, n, int(g.integers(n, 3 * n)))
        s = int(g.integers(0, n))
        np.testing.assert_allclose(forward_push(kg, s, push), power_iteration(kg, s, power), atol=1e-6)


def test_relabeling_vertices_permutes_ppr():
    g = np.random.default_rng(13)
    for _ in range(10):
        n = int(g.integers(5, 60))
        kg = _random_graph(g, n, int(g.integers(n // 2, 2 * n)))
        perm = g.permutation(n)
        moved = make_kg(n, [(int(perm[a]), int(perm[b])) for a, _, b in kg.triples])
        s = int(g.integers(0, n))
        for cfg in (PPRConfig(power_tolerance=1e-13, max_power_iters=5000), PUSH):
            np.testing.assert_allclose(ppr(moved, int(perm[s]), cfg)[perm], ppr(kg, s, cfg), atol=1e-8)


def test_vectors_sum_to_one():
    kg = _random_graph(np.random.default_rng(0), 40, 60)
    for cfg in (PPRConfig(), PUSH):
        assert ppr(kg, 3, cfg).sum() == pytest.approx(1.0, abs=1e-8)


# -- mu / HOS -------------------------------------------------------------

@pytest.mark.parametrize("p, q, expected", [(0.3, 0.3, 1.0), (0.2, 0.1, 0.5), (0.0, 0.0, 0.0)])
def test_mu(p, q, expected):
    assert mu(p, q) == pytest.approx(expected)


def test_mu_rejects_negative():
    with pytest.raises(ValueError):
        mu(-0.1, 0.2)


def test_hos_score_cases():
    assert hos_score([0.2, 0.5, 0.1], [0.2, 0.5, 0.1]) == pytest.approx(3.0)
    assert hos_score([0.3, 0.0], [0.0, 0.4]) == 0.0
    assert hos_score([0.2, 0.1], [0.1, 0.1]) == pytest.approx(1.5)


def test_hos_score_length_mismatch():
    with pytest.raises(ValueError):
        hos_score([0.1], [0.1, 0.2])


def test_hos_matrix_matches_pairwise_scores():
    g = np.random.default_rng(2)
    t1 = ScoreVectorTable(g.uniform(size=(4, 3)), (0, 1, 2))
    t2 = ScoreVectorTable(g.uniform(size=(5, 3)), (0, 1, 2))
    raw = hos_matrix(t1, t2, normalize=False)
    for i in range(4):
        for j in range(5):
            assert raw[i, j] == pytest.approx(hos_score(t1.values[i], t2.values[j]))
    np.testing.assert_allclose(hos_matrix(t1, t2), raw / 3)
    np.testing.assert_allclose(hos_matrix(t1, t2, rows=[3, 1], cols=[0]), raw[[3, 1]][:, [0]] / 3)


def test_single_seed_sample_gives_single_vector(tiny_corpus):
    t1, t2 = score_vectors(tiny_corpus, tiny_corpus.seed_train[:1], PPRConfig())
    assert t1.values.shape == (tiny_corpus.kg1.entity_count, 1)
    assert t2.values.shape == (tiny_corpus.kg2.entity_count, 1)


def test_isomorphic_entities_share_score_vectors(iso_corpus):
    sample = sample_seeds(iso_corpus.seed_train, PPRConfig(seed_sample_size=3))
    t1, t2 = score_vectors(iso_corpus, sample, PPRConfig())
    for a, b in iso_corpus.all_links:
        np.testing.assert_allclose(t1.values[a], t2.values[b], atol=1e-6)


def test_seed_sample_is_reproducible(tiny_corpus):
    cfg = PPRConfig(seed_sample_size=4, rng_seed=3)
    first = sample_seeds(tiny_corpus.seed_train, cfg)
    assert first == sample_seeds(tiny_corpus.seed_train, cfg)
    assert len(first) == 4
    assert len(sample_seeds(tiny_corpus.seed_train, PPRConfig(seed_sample_size=1000))) == len(tiny_corpus.seed_train)


# -- composite similarity / CSLS ------------------------------------------

def test_zero_weight_is_pure_cosine():
    g = np.random.default_rng(5)
    a, b = g.normal(size=(3, 4)), g.normal(size=(2, 4))
    cos = (a / np.linalg.norm(a, axis=1, keepdims=True)) @ (b / np.linalg.norm(b, axis=1, keepdims=True)).T
    np.testing.assert_allclose(composite_similarity(a, b, np.ones((3, 2)), weight=0.0), cos)


def test_identical_embeddings_and_scores_reach_two():
    e = np.array([[0.6, 0.8]])
    assert composite_similarity(e, e, np.ones((1, 1)), weight=1.0)[0, 0] == pytest.approx(2.0)


def test_antipodal_without_hos():
    e = np.array([[0.6, 0.8]])
    assert composite_similarity(e, -e, np.zeros((1, 1)))[0, 0] == pytest.approx(-1.0)


def test_csls_single_entry_cancels():
    np.testing.assert_allclose(csls_adjust(np.array([[0.7]]), 1), [[0.0]])


def test_csls_two_by_two():
    out = csls_adjust(np.array([[0.9, 0.1], [0.1, 0.9]]), 1)
    np.testing.assert_allclose(out, [[0.0, -1.6], [-1.6, 0.0]])


def test_csls_k_out_of_range():
    with pytest.raises(ValueError):
        csls_adjust(np.zeros((2, 3)), 3)
    with pytest.raises(ValueError):
        csls_adjust(np.zeros((2, 3)), 0)


def test_csls_penalizes_hubs():
    sim = np.array([[0.8, 0.7, 0.0], [0.8, 0.1, 0.0], [0.8, 0.2, 0.9]])
    assert sim[0].argmax() == 0
    out = csls_adjust(sim, 2)
    assert out[0].argmax() == 1


def test_csls_ignores_a_uniform_shift():
    g = np.random.default_rng(17)
    cases = [(np.array([[0.9, 0.1], [0.1, 0.9]]), 1)]
    cases += [(g.uniform(-1, 1, size=(6, 8)), 3) for _ in range(10)]
    for sim, k in cases:
        base = csls_adjust(sim, k)
        for shift in (-0.7, 0.25, 3.0):
            moved = csls_adjust(sim + shift, k)
            np.testing.assert_allclose(moved, base, atol=1e-12)
            np.testing.assert_array_equal(moved.argmax(axis=1), base.argmax(axis=1))


# -- cache ----------------------------------------------------------------

def test_score_cache_round_trip(tmp_path, tiny_corpus):
    cfg = PPRConfig(seed_sample_size=3)
    sample = sample_seeds(tiny_corpus.seed_train, cfg)
    first = load_or_compute(tiny_corpus, sample, cfg, tmp_path)
    assert len(list(tmp_path.glob("ppr-*.wogc"))) == 1
    second = load_or_compute(tiny_corpus, sample, cfg, tmp_path)
    np.testing.assert_array_equal(first[0].values, second[0].values)
    np.testing.assert_array_equal(first[1].values, second[1].values)


def test_corrupt_cache_is_recomputed(tmp_path, tiny_corpus):
    from ppr.cache import cache_key

    cfg = PPRConfig(seed_sample_size=2)
    sample = sample_seeds(tiny_corpus.seed_train, cfg)
    path = cache_path(tmp_path, cache_key(tiny_corpus, sample, cfg))
    path.write_bytes(b"garbage")
    t1, _ = load_or_compute(tiny_corpus, sample, cfg, tmp_path)
    assert t1.values.shape == (tiny_corpus.kg1.entity_count, 2)
