import json

import pandas as pd
import pytest

from align.inference import FRAME_COLUMNS
from cli.__main__ import main
from cli.commands import RunPaths, cmd_ppr, config_hash, resolve_corpus
from config.loader import load_config

TINY = [
    "synthetic.core_size=30",
    "synthetic.dangling_fraction_1=0.2",
    "synthetic.dangling_fraction_2=0.2",
    "synthetic.relation_count=3",
    "synthetic.avg_degree=3.0",
    "synthetic.rng_seed=7",
    "encoder.depth=1",
    "encoder.heads=1",
    "encoder.hidden_dim=4",
    "encoder.proxy_count=2",
    "encoder.dropout=0.0",
    "ppr.seed_sample_size=4",
    "ot.schedule_horizon=2",
    "train.epochs=2",
    "train.turns=2",
    "train.batch_size=4",
    "inference.csls_k=3",
]


def _sets(out_dir, extra=()):
    args = []
    for item in [*TINY, f"output_dir={out_dir}", *extra]:
        args += ["--set", item]
    return args


def _cfg(out_dir, extra=()):
    return load_config(None, [*TINY, f"output_dir={out_dir}", *extra])


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "runs"
    assert main(["train", *_sets(out)]) == 0
    return out


def test_gen_synth_writes_dataset_layout(tmp_path):
    target = tmp_path / "synth"
    assert main(["gen-synth", *_sets(tmp_path), "--out", str(target)]) == 0
    assert (target / "rel_triples_1").exists()
    assert (target / "splits" / "test_dangling_2").exists()
    links = pd.read_csv(target / "splits" / "train_links", sep="\t", header=None)
    assert len(links) == 9


def test_generated_dataset_trains_like_the_synthetic_config(tmp_path):
    target = tmp_path / "synth"
    assert main(["gen-synth", *_sets(tmp_path), "--out", str(target)]) == 0
    cfg = load_config(None, [
        f"dataset={target}", f"output_dir={tmp_path / 'runs'}", "train.epochs=1", "train.turns=1",
        "encoder.hidden_dim=4", "encoder.depth=1", "ppr.seed_sample_size=4",
    ])
    corpus = resolve_corpus(cfg)
    assert len(corpus.seed_train) == 9
    assert corpus.kg1.entity_count == 38


def test_missing_dataset_is_a_usage_error(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert main(["train", "--set", f"dataset={missing}", "--set", f"output_dir={tmp_path}"]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_override_is_a_usage_error(tmp_path, capsys):
    assert main(["train", *_sets(tmp_path, ["train.lr=-1"])]) == 2
    assert "train.lr" in capsys.readouterr().err


def test_train_writes_run_artifacts(trained):
    paths = RunPaths.for_config(_cfg(trained))
    assert paths.checkpoint.exists()
    assert paths.turn_checkpoint(0).exists()
    assert paths.turn_checkpoint(1).exists()
    assert paths.pseudo_seeds.exists()
    stored = json.loads(paths.config.read_text(encoding="utf-8"))
    assert stored["train"]["epochs"] == 2
    telemetry = [json.loads(line) for line in paths.telemetry.read_text(encoding="utf-8").splitlines()]
    assert len(telemetry) == 4


def test_second_train_needs_force(trained, capsys):
    assert main(["train", *_sets(trained)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["train", *_sets(trained), "--force"]) == 0


def test_training_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", *_sets(a)]) == 0
    assert main(["train", *_sets(b)]) == 0
    pa, pb = RunPaths.for_config(_cfg(a)), RunPaths.for_config(_cfg(b))
    assert pa.root.name == pb.root.name
    assert pa.checkpoint.read_bytes() == pb.checkpoint.read_bytes()


def test_eval_writes_metrics(trained):
    assert main(["eval", *_sets(trained)]) == 0
    cfg = _cfg(trained)
    payload = json.loads(RunPaths.for_config(cfg).eval_json.read_text(encoding="utf-8"))
    assert payload["config_hash"] == config_hash(cfg)
    assert set(payload["directions"]) == {"kg1->kg2", "kg2->kg1"}
    for block in ("relaxed", "alignment", "dangling"):
        assert block in payload
    assert 0.0 <= payload["relaxed"]["hits1"] <= payload["relaxed"]["hits10"] <= 1.0
    header = RunPaths.for_config(cfg).report.read_text(encoding="utf-8").splitlines()[0].split()
    assert header == ["H@1", "H@10", "MRR", "P", "R", "F1"]


def test_eval_ablation_flags_reach_inference(trained):
    assert main(["eval", *_sets(trained), "--no-hos", "--no-csls"]) == 0
    payload = json.loads(RunPaths.for_config(_cfg(trained)).eval_json.read_text(encoding="utf-8"))
    assert payload["inference"]["use_hos"] is False
    assert payload["inference"]["use_csls"] is False


def test_eval_without_checkpoint(tmp_path, capsys):
    assert main(["eval", *_sets(tmp_path)]) == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_checkpoint_from_other_config_is_rejected(trained, capsys):
    ckpt = RunPaths.for_config(_cfg(trained)).checkpoint
    assert main(["eval", *_sets(trained, ["train.lr=0.01"]), "--checkpoint", str(ckpt)]) == 2
    assert "config hash mismatch" in capsys.readouterr().err


def test_ppr_command_lists_top_entities(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    source = resolve_corpus(cfg).kg1.label_of(0)
    frame, total = cmd_ppr(cfg, source, side=1, top_k=5)
    assert len(frame) == 5
    assert total == pytest.approx(1.0, abs=1e-8)
    assert frame["ppr"].is_monotonic_decreasing

    assert main(["ppr", *_sets(tmp_path), source, "--top-k", "3"]) == 0
    assert "sum = 1.0000000000" in capsys.readouterr().out


def test_ppr_unknown_entity(tmp_path, capsys):
    assert main(["ppr", *_sets(tmp_path), "kg1/nobody"]) == 2
    assert "kg1/nobody" in capsys.readouterr().err


def test_infer_writes_reports_and_embeddings(trained, tmp_path):
    out = tmp_path / "infer"
    assert main(["infer", *_sets(trained), "--out", str(out)]) == 0
    for name in ("report.test.kg1-kg2.tsv", "report.test.kg2-kg1.tsv", "embeddings.kg1.wogc",
                 "embeddings.kg2.wogc", "embeddings.kg1.wogc.ids.tsv"):
        assert (out / name).exists(), name
    frame = pd.read_csv(out / "report.test.kg1-kg2.tsv", sep="\t")
    assert list(frame.columns) == FRAME_COLUMNS
    assert frame["rank"].min() == 1
    # 15 test links plus 4 dangling sources
    assert frame["source_uri"].nunique() == 19
