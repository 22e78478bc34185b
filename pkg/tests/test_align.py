import json
import math

import numpy as np
import pytest

from align.inference import (
    FRAME_COLUMNS,
    SimilarityReport,
    build_report,
    calibrate_threshold,
    column_margin,
    infer,
    report_rows,
    source_pool,
)
from align.metrics import (
    PRF,
    EvalResult,
    average_results,
    evaluate,
    evaluate_consolidated,
    evaluate_relaxed,
    to_json,
)
from align.trainer import (
    ExpansionScores,
    TrainPlan,
    check_expansion,
    expansion_scores,
    iterative_expand,
    mutual_nearest,
    train,
)
from config.models import Direction, EncoderConfig, InferenceConfig, TrainSettings, VerdictScore
from ggan.encoder import EmbeddingTable, encode
from kg.graph import TrainingView
from ppr.hos import composite_similarity, csls_adjust


def _report(scores, sources=None, targets=None, threshold=-math.inf, verdicts=None):
    scores = np.asarray(scores, dtype=np.float64)
    sources = np.arange(scores.shape[0]) if sources is None else np.asarray(sources)
    targets = np.arange(scores.shape[1]) if targets is None else np.asarray(targets)
    best = scores.max(axis=1)
    v = best < threshold if verdicts is None else np.asarray(verdicts, dtype=bool)
    return SimilarityReport(Direction.KG1_TO_KG2, sources, targets, scores, threshold, v)


# -- report ---------------------------------------------------------------

def test_rank_counts_strictly_greater_scores():
    r = _report([[0.5, 0.9, 0.5, 0.1]])
    assert r.rank_of(0, 1) == 1
    assert r.rank_of(0, 0) == 2
    assert r.rank_of(0, 2) == 2
    assert r.rank_of(0, 3) == 4
    assert r.rank_of(0, 99) is None


def test_candidates_break_ties_by_target_id():
    r = _report([[0.5, 0.9, 0.5]], targets=[7, 3, 2])
    assert r.candidates(0) == [(3, 0.9), (2, 0.5), (7, 0.5)]
    assert r.best_target_of(0) == 3


def test_threshold_extremes():
    r = _report([[0.2, 0.4], [0.9, -0.3]])
    assert not r.with_threshold(-math.inf).verdicts.any()
    assert r.with_threshold(math.inf).verdicts.all()


def test_report_frame_columns():
    r = _report([[0.2, 0.4]], threshold=0.5)
    frame = r.to_frame(["s0"], ["t0", "t1"], top_k=1)
    assert list(frame.columns) == FRAME_COLUMNS
    assert frame.iloc[0]["target_uri"] == "t1"
    assert bool(frame.iloc[0]["dangling"]) is True


def test_flagged_set_grows_with_the_threshold():
    g = np.random.default_rng(8)
    scores = g.uniform(-1, 1, size=(20, 6))
    r = SimilarityReport(Direction.KG1_TO_KG2, np.arange(20), np.arange(6), scores, -math.inf,
                         np.zeros(20, dtype=bool), g.uniform(-1, 1, size=20))
    previous = np.zeros(20, dtype=bool)
    for theta in np.linspace(-1.2, 1.2, 25):
        flagged = r.with_threshold(theta).verdicts
        assert np.all(flagged >= previous)
        previous = flagged


def test_verdicts_follow_verdict_scores_not_best_scores():
    r = SimilarityReport(Direction.KG1_TO_KG2, np.arange(2), np.arange(2), np.array([[0.9, 0.1], [0.9, 0.2]]),
                         -math.inf, np.zeros(2, dtype=bool), np.array([0.5, -0.1]))
    np.testing.assert_array_equal(r.with_threshold(0.0).verdicts, [False, True])
    frame = r.to_frame(["s0", "s1"], ["t0", "t1"], top_k=1)
    assert frame["verdict_score"].tolist() == [0.5, -0.1]
    assert frame["best_score"].tolist() == [0.9, 0.9]


# -- verdict margin -------------------------------------------------------

def test_column_margin_small_case():
    sim = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.3]])
    np.testing.assert_allclose(column_margin(sim), [0.1, -0.1, 0.1])


def test_column_margin_degenerate_shapes():
    np.testing.assert_allclose(column_margin(np.array([[0.2, 0.7]])), [0.7])
    assert np.all(np.isneginf(column_margin(np.zeros((3, 0)))))


def test_column_margin_is_positive_exactly_for_mutual_neighbours():
    g = np.random.default_rng(12)
    for _ in range(20):
        sim = g.uniform(-1, 1, size=(int(g.integers(2, 12)), int(g.integers(1, 12))))
        margin = column_margin(sim)
        best_col = sim.argmax(axis=1)
        mutual = sim.argmax(axis=0)[best_col] == np.arange(sim.shape[0])
        np.testing.assert_array_equal(margin > 0, mutual)


# -- relaxed --------------------------------------------------------------

def test_all_gold_ranked_first():
    r = _report(np.eye(3))
    assert evaluate_relaxed(r, [(0, 0), (1, 1), (2, 2)]) == (1.0, 1.0, 1.0)


def test_all_gold_ranked_second():
    r = _report([[0.5, 0.9, 0.1], [0.9, 0.5, 0.1]])
    h1, h10, mrr = evaluate_relaxed(r, [(0, 0), (1, 1)])
    assert (h1, h10, mrr) == (0.0, 1.0, 0.5)


def test_relaxed_skips_sources_outside_report():
    r = _report(np.eye(2))
    assert evaluate_relaxed(r, [(0, 0), (5, 1)]) == (1.0, 1.0, 1.0)


@pytest.mark.parametrize("rank", [1, 2, 3, 5, 8])
def test_reciprocal_rank_of_a_placed_gold_target(rank):
    g = np.random.default_rng(rank)
    targets = g.permutation(8)
    row = np.linspace(1.0, 0.3, 8)
    scores = np.empty((1, 8))
    gold_col = int(g.integers(0, 8))
    others = [j for j in range(8) if j != gold_col]
    order = others[:rank - 1] + [gold_col] + others[rank - 1:]
    scores[0, order] = row
    r = _report(scores, targets=targets)
    h1, h10, mrr = evaluate_relaxed(r, [(0, int(targets[gold_col]))])
    assert mrr == 1.0 / rank
    assert h1 == float(rank == 1)
    assert h10 == 1.0


# -- consolidated ---------------------------------------------------------

def test_perfect_pipeline_scores_one_everywhere():
    scores = [[0.9, 0.1], [0.1, 0.9], [0.2, 0.1]]
    r = _report(scores, threshold=0.5)
    res = evaluate(r, [(0, 0), (1, 1)], {2})
    assert (res.hits1, res.hits10, res.mrr) == (1.0, 1.0, 1.0)
    assert res.alignment == PRF(1.0, 1.0, 1.0)
    assert res.dangling == PRF(1.0, 1.0, 1.0)


def test_everything_flagged_dangling():
    r = _report(np.eye(2), threshold=math.inf)
    alignment, _ = evaluate_consolidated(r, [(0, 0), (1, 1)], set())
    assert alignment == PRF(0.0, 0.0, 0.0)


def test_dangling_counts():
    # flagged {0, 1, 3}, gold {0, 1, 2}: 2 TP, 1 FP, 1 FN
    r = _report(np.eye(5), verdicts=[True, True, False, True, False])
    _, dangling = evaluate_consolidated(r, [], {0, 1, 2})
    assert dangling.precision == pytest.approx(2 / 3)
    assert dangling.recall == pytest.approx(2 / 3)
    assert dangling.f1 == pytest.approx(2 / 3)


def test_wrong_top_choice_is_not_a_correct_alignment():
    r = _report([[0.1, 0.9], [0.1, 0.9]])
    alignment, _ = evaluate_consolidated(r, [(0, 0), (1, 1)], set())
    assert alignment == PRF.from_counts(1, 2, 2)


def test_average_and_json_layout():
    a = EvalResult(1.0, 1.0, 1.0, PRF(1.0, 1.0, 1.0), PRF(0.0, 0.0, 0.0))
    b = EvalResult(0.0, 0.5, 0.25, PRF(0.5, 0.5, 0.5), PRF(1.0, 1.0, 1.0))
    avg = average_results([a, b])
    assert avg.hits1 == 0.5 and avg.mrr == 0.625
    assert avg.dangling == PRF(0.5, 0.5, 0.5)
    payload = to_json(avg, "cfg", "corp")
    assert set(payload) == {"relaxed", "alignment", "dangling", "config_hash", "corpus_hash"}
    assert payload["alignment"] == {"p": 0.75, "r": 0.75, "f1": 0.75}
    json.dumps(payload)


# -- calibration ----------------------------------------------------------

def test_calibration_separates_scores():
    r = _report([[0.9], [0.8], [0.3]])
    theta = calibrate_threshold(r, {2})
    assert 0.3 < theta <= 0.8
    _, dangling = evaluate_consolidated(r.with_threshold(theta), [], {2})
    assert dangling.f1 == 1.0


def test_calibration_tie_goes_to_lowest():
    r = _report([[0.4], [0.4], [0.4]])
    assert calibrate_threshold(r, set()) == 0.4


def test_calibration_needs_rows():
    r = _report(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        calibrate_threshold(r, {1})


# -- iterative expansion --------------------------------------------------

def test_unreachable_threshold_adds_nothing():
    e = EmbeddingTable(np.eye(3))
    assert iterative_expand(e, e, [], math.inf) == []


def test_identical_tables_give_the_diagonal():
    g = np.random.default_rng(0)
    v = g.normal(size=(6, 4))
    e = EmbeddingTable(v)
    found = iterative_expand(e, EmbeddingTable(v.copy()), [(0, 0)], 0.5, csls_k=0)
    assert found == [(i, i) for i in range(1, 6)]


def test_one_sided_nearest_neighbour_is_dropped():
    e1 = EmbeddingTable(np.array([[1.0, 0.0], [0.9, 0.436]]))
    e2 = EmbeddingTable(np.array([[0.8, 0.6], [0.0, 1.0]]))
    assert iterative_expand(e1, e2, [], 0.5, csls_k=0) == [(1, 0)]


def test_iterative_expand_is_mutual_nearest_of_expansion_scores():
    g = np.random.default_rng(4)
    e1, e2 = EmbeddingTable(g.normal(size=(9, 3))), EmbeddingTable(g.normal(size=(8, 3)))
    seeds = [(0, 1), (4, 4)]
    scores = expansion_scores(e1, e2, seeds, csls_k=2)
    found = iterative_expand(e1, e2, seeds, -1.0, csls_k=2)
    assert found == mutual_nearest(scores, -1.0)
    check_expansion(found, scores, -1.0)
    assert not ({a for a, _ in found} & {0, 4}) and not ({b for _, b in found} & {1, 4})


def _expansion(sim):
    sim = np.asarray(sim, dtype=np.float64)
    return ExpansionScores(rows=np.arange(sim.shape[0]) + 10, cols=np.arange(sim.shape[1]) + 20, sim=sim)


def test_check_expansion_rejects_one_sided_pairs():
    scores = _expansion([[0.9, 0.1], [0.95, 0.2]])
    check_expansion([(11, 20)], scores, 0.5)
    with pytest.raises(RuntimeError, match="mutual"):
        check_expansion([(10, 20)], scores, 0.5)


def test_check_expansion_rejects_low_scores_and_seeded_entities():
    scores = _expansion([[0.9, 0.1], [0.1, 0.3]])
    with pytest.raises(RuntimeError, match="below"):
        check_expansion([(11, 21)], scores, 0.5)
    with pytest.raises(RuntimeError, match="seeded"):
        check_expansion([(3, 20)], scores, 0.5)
    with pytest.raises(RuntimeError, match="reuse"):
        check_expansion([(10, 20), (10, 21)], scores, 0.0)


# -- training -------------------------------------------------------------

def _plan(parts, **train_updates):
    train_cfg = parts["train"].model_copy(update=train_updates)
    return TrainPlan(
        encoder=parts["encoder"], contrastive=parts["contrastive"], ot=parts["ot"],
        ppr=parts["ppr"], train=train_cfg, rng_seed=5,
    )


@pytest.mark.parametrize("batch_size", [2, 3, 4])
def test_batches_per_epoch(tiny_corpus, small_plan_parts, batch_size):
    view = TrainingView(tiny_corpus.kg1, tiny_corpus.kg2, tiny_corpus.seed_train[:4])
    result = train(view, _plan(small_plan_parts, epochs=1, turns=1, batch_size=batch_size))
    assert result.batches_run == math.ceil(4 / batch_size)


def test_training_is_deterministic(tiny_corpus, small_plan_parts, tmp_path):
    plan = _plan(small_plan_parts)
    a = train(tiny_corpus, plan, telemetry_path=tmp_path / "a.jsonl")
    b = train(tiny_corpus, plan, telemetry_path=tmp_path / "b.jsonl")
    for name, value in a.state.params.items():
        np.testing.assert_array_equal(value, b.state.params[name])
    strip = [{k: v for k, v in t.items() if k != "wall_ms"} for t in a.telemetry]
    assert strip == [{k: v for k, v in t.items() if k != "wall_ms"} for t in b.telemetry]
    lines = (tmp_path / "a.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == plan.epochs * plan.turns
    assert json.loads(lines[0])["turn"] == 0


def test_training_lowers_the_loss(iso_corpus, small_plan_parts):
    plan = TrainPlan(
        encoder=EncoderConfig(depth=2, hidden_dim=16, proxy_count=8, dropout=0.0),
        contrastive=small_plan_parts["contrastive"],
        ot=small_plan_parts["ot"].model_copy(update={"schedule_horizon": 10}),
        ppr=small_plan_parts["ppr"],
        train=TrainSettings(epochs=15, turns=1, batch_size=64, lr=0.005),
        rng_seed=1,
    )
    result = train(iso_corpus, plan)
    assert result.telemetry[-1]["loss"] < result.telemetry[0]["loss"]
    assert all(t["min_negative_mass"] >= np.exp(-1 / plan.contrastive.temperature) for t in result.telemetry)


def test_pseudo_seeds_grow_monotonically(iso_corpus, small_plan_parts):
    plan = _plan(small_plan_parts, epochs=3, turns=3, il_threshold=-10.0)
    result = train(iso_corpus, plan)
    counts = [t["seeds"] for t in result.telemetry]
    assert counts == sorted(counts)
    seeded1 = {a for a, _ in iso_corpus.seed_train}
    assert all(a not in seeded1 for a, _ in result.pseudo_seeds)
    assert len({a for a, _ in result.pseudo_seeds}) == len(result.pseudo_seeds)
    assert len(result.seeds) == len(iso_corpus.seed_train) + len(result.pseudo_seeds)


def test_turn_hook_sees_every_turn(tiny_corpus, small_plan_parts):
    seen = []
    train(tiny_corpus, _plan(small_plan_parts, epochs=1, turns=2), on_turn=lambda t, s: seen.append(t))
    assert seen == [0, 1]


def test_training_needs_two_seeds(tiny_corpus, small_plan_parts):
    view = TrainingView(tiny_corpus.kg1, tiny_corpus.kg2, tiny_corpus.seed_train[:1])
    with pytest.raises(ValueError):
        train(view, _plan(small_plan_parts))


# -- inference ------------------------------------------------------------

@pytest.fixture
def trained_state(tiny_corpus, small_plan_parts):
    return train(tiny_corpus, _plan(small_plan_parts, epochs=1, turns=1)).state


def test_report_rows_cover_links_and_dangling(tiny_corpus):
    sources, targets = report_rows(tiny_corpus, Direction.KG1_TO_KG2, "test")
    expected = {a for a, _ in tiny_corpus.links_test} | set(tiny_corpus.dangling1_test)
    assert set(sources.tolist()) == expected
    seeded = {b for _, b in tiny_corpus.seed_train}
    assert not seeded & set(targets.tolist())
    assert len(targets) == tiny_corpus.kg2.entity_count - len(seeded)


def test_reverse_direction_swaps_sides(tiny_corpus):
    sources, _ = report_rows(tiny_corpus, Direction.KG2_TO_KG1, "test")
    assert set(sources.tolist()) == {b for _, b in tiny_corpus.links_test} | set(tiny_corpus.dangling2_test)


def test_infer_with_fixed_threshold(tiny_corpus, trained_state, small_plan_parts, cosine_only):
    cfg = cosine_only.model_copy(update={"dangling_threshold": -math.inf})
    reports = infer(tiny_corpus, trained_state, small_plan_parts["ppr"], cfg)
    assert set(reports) == {Direction.KG1_TO_KG2, Direction.KG2_TO_KG1}
    assert not any(r.verdicts.any() for r in reports.values())


def test_infer_calibrates_on_validation(tiny_corpus, trained_state, small_plan_parts):
    reports = infer(tiny_corpus, trained_state, small_plan_parts["ppr"], InferenceConfig(csls_k=3))
    assert all(math.isfinite(r.threshold) for r in reports.values())


def test_cosine_only_report_matches_raw_cosine(tiny_corpus, trained_state, cosine_only):
    tables = encode(tiny_corpus, trained_state)
    r = build_report(tiny_corpus, tables, Direction.KG1_TO_KG2, "test", cosine_only)
    expected = tables[0].vectors[r.sources] @ tables[1].vectors[r.targets].T
    np.testing.assert_allclose(r.scores, expected, atol=1e-12)


def test_report_scores_are_rows_of_the_unseeded_pool(tiny_corpus, trained_state):
    cfg = InferenceConfig(use_hos=False, csls_k=3)
    tables = encode(tiny_corpus, trained_state)
    r = build_report(tiny_corpus, tables, Direction.KG1_TO_KG2, "test", cfg)
    pool = source_pool(tiny_corpus, Direction.KG1_TO_KG2)
    assert set(r.sources.tolist()) <= set(pool.tolist())
    assert not {a for a, _ in tiny_corpus.seed_train} & set(pool.tolist())
    full = csls_adjust(composite_similarity(tables[0].vectors[pool], tables[1].vectors[r.targets]), 3)
    at = np.searchsorted(pool, r.sources)
    np.testing.assert_allclose(r.scores, full[at], atol=1e-12)
    np.testing.assert_allclose(r.verdict_scores, column_margin(full)[at], atol=1e-12)


def test_best_score_verdicts_are_available(tiny_corpus, trained_state):
    cfg = InferenceConfig(use_hos=False, csls_k=3, verdict_score=VerdictScore.BEST)
    tables = encode(tiny_corpus, trained_state)
    r = build_report(tiny_corpus, tables, Direction.KG1_TO_KG2, "valid", cfg)
    np.testing.assert_array_equal(r.verdict_scores, r.best_scores)
    theta = calibrate_threshold(r, set(tiny_corpus.dangling1_valid))
    assert np.array_equal(r.with_threshold(theta).verdicts, r.best_scores < theta)
