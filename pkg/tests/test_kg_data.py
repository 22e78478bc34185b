import os
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

import config.settings as settings
from config.models import Direction, SyntheticSpec
from kg.graph import AlignmentCorpus, CorpusValidationError, corpus_hash, degree_histogram
from kg.loader import CorpusLoadError, load_corpus
from kg.synthetic import generate_synthetic
from kg.writer import write_corpus
from tests.conftest import make_kg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _minimal_dataset(root: Path, triples_1: str = "a\tr\tb\nb\tr\tc\na\tr\tc\n") -> Path:
    f = {k: root / v for k, v in settings.DATASET_FILES.items()}
    _write(f["triples_1"], triples_1)
    _write(f["triples_2"], "x\tq\ty\ny\tq\tz\n")
    _write(f["links"], "a\tx\nb\ty\n")
    _write(f["train_links"], "a\tx\n")
    _write(f["valid_links"], "")
    _write(f["test_links"], "b\ty\n")
    return root


# -- loading --------------------------------------------------------------

def test_distinct_uris_become_entities(tmp_path):
    corpus = load_corpus(_minimal_dataset(tmp_path))
    assert corpus.kg1.entity_count == 3
    assert corpus.kg1.relation_count == 1
    assert corpus.kg1.entity_labels == ("a", "b", "c")
    assert corpus.seed_train == ((0, 0),)
    assert corpus.links_test == ((1, 1),)


def test_empty_triple_file_gives_empty_kg(tmp_path):
    root = _minimal_dataset(tmp_path, triples_1="")
    f = {k: root / v for k, v in settings.DATASET_FILES.items()}
    _write(f["links"], "")
    _write(f["train_links"], "")
    _write(f["test_links"], "")
    corpus = load_corpus(root)
    assert corpus.kg1.entity_count == 0
    assert len(corpus.kg1.triples) == 0


def test_missing_file_is_named(tmp_path):
    root = _minimal_dataset(tmp_path)
    (root / settings.DATASET_FILES["links"]).unlink()
    with pytest.raises(CorpusLoadError, match="ent_links"):
        load_corpus(root)


def test_missing_directory(tmp_path):
    with pytest.raises(CorpusLoadError, match="nope"):
        load_corpus(tmp_path / "nope")


def test_malformed_line_reports_line_number(tmp_path):
    root = _minimal_dataset(tmp_path, triples_1="a\tr\tb\nbroken line\n")
    with pytest.raises(CorpusLoadError, match="line 2"):
        load_corpus(root)


def test_link_uri_absent_from_triples(tmp_path):
    root = _minimal_dataset(tmp_path)
    _write(root / settings.DATASET_FILES["links"], "a\tx\nghost\ty\n")
    with pytest.raises(CorpusLoadError, match="ghost"):
        load_corpus(root)


def test_link_to_isolated_entity_needs_an_id_file(tmp_path):
    root = _minimal_dataset(tmp_path)
    _write(root / settings.DATASET_FILES["links"], "a\tx\nb\ty\nlonely\tz\n")
    _write(root / settings.DATASET_FILES["test_links"], "b\ty\nlonely\tz\n")
    with pytest.raises(CorpusLoadError, match="'lonely' does not occur in kg1 triples$"):
        load_corpus(root)

    _write(root / settings.DATASET_FILES["ent_ids_1"], "0\ta\n1\tb\n2\tc\n3\tlonely\n")
    corpus = load_corpus(root)
    assert corpus.kg1.entity_count == 4
    assert corpus.kg1.adjacency.getrow(3).nnz == 0
    assert (3, corpus.kg2.id_of("z")) in corpus.links_test


def test_uri_missing_from_triples_and_id_file(tmp_path):
    root = _minimal_dataset(tmp_path)
    _write(root / settings.DATASET_FILES["ent_ids_1"], "0\ta\n1\tb\n2\tc\n")
    _write(root / settings.DATASET_FILES["links"], "a\tx\nb\ty\nghost\tz\n")
    with pytest.raises(CorpusLoadError, match="kg1 triples or ent_ids_1"):
        load_corpus(root)


def test_writer_round_trip_is_exact(tmp_path, tiny_corpus):
    write_corpus(tiny_corpus, tmp_path / "ds")
    loaded = load_corpus(tmp_path / "ds")
    assert corpus_hash(loaded) == corpus_hash(tiny_corpus)
    assert loaded.kg2.entity_labels == tiny_corpus.kg2.entity_labels


# -- validation -----------------------------------------------------------

def test_overlapping_splits_rejected():
    kg = make_kg(3, [(0, 1), (1, 2)])
    with pytest.raises(CorpusValidationError, match="train/test"):
        AlignmentCorpus(kg1=kg, kg2=kg, seed_train=[(0, 0)], links_valid=[], links_test=[(0, 1)])


def test_dangling_entity_cannot_be_linked():
    kg = make_kg(3, [(0, 1), (1, 2)])
    with pytest.raises(CorpusValidationError, match="both linked and dangling"):
        AlignmentCorpus(
            kg1=kg, kg2=kg, seed_train=[(0, 0)], links_valid=[], links_test=[],
            dangling1_test=frozenset({0}),
        )


def test_training_view_hides_dangling_labels(tiny_corpus):
    view = tiny_corpus.training_view()
    assert view.seed_train == tiny_corpus.seed_train
    assert not hasattr(view, "dangling1_test")


# -- graph structure ------------------------------------------------------

def test_degree_histogram_single_edge():
    assert degree_histogram(make_kg(2, [(0, 1)])) == {1: 2}


def test_degree_histogram_triangle():
    assert degree_histogram(make_kg(3, [(0, 1), (1, 2), (2, 0)])) == {2: 3}


def test_neighborhoods_are_undirected_and_deduplicated():
    kg = make_kg(3, [(0, 1), (1, 0), (1, 2)])
    assert sorted(n for n, _ in kg.neighbor_index[1]) == [0, 2]
    assert kg.neighbor_index[0] == [(1, 0)]


def test_attention_edges_have_self_loops():
    kg = make_kg(3, [(0, 1)])
    src, dst = kg.attention_edges
    pairs = set(zip(src.tolist(), dst.tolist()))
    assert {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)} == pairs


def test_walk_matrix_rows_sum_to_one_with_isolated_vertex():
    kg = make_kg(3, [(0, 1)])
    sums = np.asarray(kg.walk_matrix.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums, 1.0)
    assert kg.walk_matrix[2, 2] == 1.0


# -- synthetic generator --------------------------------------------------

def test_synthetic_without_perturbation_is_isomorphic():
    corpus = generate_synthetic(SyntheticSpec(core_size=100, rng_seed=5))
    assert corpus.kg1.entity_count == corpus.kg2.entity_count == 100
    assert len(corpus.all_links) == 100
    mapping = dict(corpus.all_links)
    mapped = {(mapping[h], r, mapping[t]) for h, r, t in corpus.kg1.triples.tolist()}
    assert mapped == {tuple(t) for t in corpus.kg2.triples.tolist()}


def test_synthetic_dangling_arithmetic():
    corpus = generate_synthetic(SyntheticSpec(core_size=100, dangling_fraction_1=0.3))
    assert corpus.kg1.entity_count == 143
    assert corpus.kg2.entity_count == 100
    labeled = corpus.dangling1_valid | corpus.dangling1_test
    assert labeled and min(labeled) >= 100
    assert not corpus.dangling2_valid and not corpus.dangling2_test


def test_synthetic_split_ratios(tiny_corpus):
    assert len(tiny_corpus.seed_train) == 9
    assert len(tiny_corpus.links_valid) == 6
    assert len(tiny_corpus.links_test) == 15


def test_synthetic_is_deterministic(tiny_spec):
    assert corpus_hash(generate_synthetic(tiny_spec)) == corpus_hash(generate_synthetic(tiny_spec))


def test_synthetic_seed_changes_corpus(tiny_spec):
    other = tiny_spec.model_copy(update={"rng_seed": tiny_spec.rng_seed + 1})
    assert corpus_hash(generate_synthetic(tiny_spec)) != corpus_hash(generate_synthetic(other))


def test_synthetic_mean_degree_close_to_target():
    corpus = generate_synthetic(SyntheticSpec(core_size=200, avg_degree=4.0, rng_seed=11))
    hist = degree_histogram(corpus.kg1)
    mean = sum(d * c for d, c in hist.items()) / sum(hist.values())
    assert abs(mean - 4.0) <= 0.4


def test_synthetic_spec_rejects_bad_values():
    with pytest.raises(ValidationError):
        SyntheticSpec(core_size=100, dangling_fraction_1=1.0)
    with pytest.raises(ValidationError):
        SyntheticSpec(core_size=4, avg_degree=10.0)


def test_direction_is_carried(tiny_spec):
    corpus = generate_synthetic(tiny_spec, Direction.KG2_TO_KG1)
    assert corpus.direction is Direction.KG2_TO_KG1


@pytest.mark.skipif(not settings.DBP_ZH_EN_DIR, reason="WOGCL_DBP_ZH_EN not set")
def test_dbp_zh_en_statistics():
    corpus = load_corpus(os.environ["WOGCL_DBP_ZH_EN"])
    assert corpus.kg1.entity_count == 84_996
    assert corpus.kg2.entity_count == 118_996
    assert len(corpus.all_links) == 33_183
