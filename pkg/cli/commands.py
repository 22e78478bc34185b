# cli/commands.py
"""
Subcommand bodies. Each takes a validated ExperimentConfig and returns what
it produced; argument parsing and exit codes live in cli/__main__.py.

Run artifacts go to <output_dir>/<config_hash[:12]>/:
  config.json, model.wogc (+ .json sidecar), model.turn<k>.wogc,
  telemetry.jsonl, pseudo_seeds.tsv, eval.json, report.txt, infer/, cache/
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import pandas as pd
import structlog

import config.settings as settings
from align.inference import SimilarityReport, infer
from align.metrics import EvalResult, average_results, evaluate, to_json
from align.trainer import plan_from_config, train
from config.loader import dump_config
from config.models import Direction, ExperimentConfig
from diffcore.checkpoint import read_sidecar
from ggan.encoder import EncoderState, encode
from kg.graph import AlignmentCorpus, corpus_hash
from kg.loader import load_corpus
from kg.synthetic import generate_synthetic
from kg.writer import write_corpus
from ppr.cache import load_or_compute
from ppr.hos import sample_seeds
from ppr.pagerank import ppr
from utils.hashing import hash_json

log = structlog.get_logger(__name__)

PathLike = Union[str, Path]


class UsageError(Exception):
    """Bad invocation or incompatible inputs (exit status 2)."""


def config_hash(cfg: ExperimentConfig) -> str:
    return hash_json(cfg.hashed_view())


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @classmethod
    def for_config(cls, cfg: ExperimentConfig) -> "RunPaths":
        return cls(Path(cfg.output_dir) / config_hash(cfg)[:12])

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    @property
    def checkpoint(self) -> Path:
        return self.root / "model.wogc"

    def turn_checkpoint(self, turn: int) -> Path:
        return self.root / f"model.turn{turn}.wogc"

    @property
    def telemetry(self) -> Path:
        return self.root / "telemetry.jsonl"

    @property
    def pseudo_seeds(self) -> Path:
        return self.root / "pseudo_seeds.tsv"

    @property
    def eval_json(self) -> Path:
        return self.root / "eval.json"

    @property
    def report(self) -> Path:
        return self.root / "report.txt"

    @property
    def infer_dir(self) -> Path:
        return self.root / "infer"

    @property
    def cache_dir(self) -> Path:
        return self.root / "cache"


def resolve_corpus(cfg: ExperimentConfig) -> AlignmentCorpus:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, cfg.direction)
    if cfg.dataset is not None:
        return load_corpus(cfg.dataset, cfg.direction)
    raise UsageError("config needs either 'dataset' (a directory) or 'synthetic' (generator settings)")


# -- gen-synth ------------------------------------------------------------

def cmd_gen_synth(cfg: ExperimentConfig, out_dir: Optional[PathLike] = None) -> Path:
    """Write the generated corpus in the dataset layout; same generator settings, same files."""
    if cfg.synthetic is None:
        raise UsageError("gen-synth needs a 'synthetic' block in the config")
    target = Path(out_dir) if out_dir is not None else (
        Path(cfg.output_dir) / f"synthetic-{hash_json(cfg.synthetic.model_dump(mode='json'))[:12]}"
    )
    corpus = generate_synthetic(cfg.synthetic, cfg.direction)
    write_corpus(corpus, target)
    log.info("synthetic dataset ready", path=str(target), corpus_hash=corpus_hash(corpus)[:12])
    return target


# -- train ----------------------------------------------------------------

def _base_meta(cfg: ExperimentConfig, corpus: AlignmentCorpus) -> Dict[str, Any]:
    return {
        "config_hash": config_hash(cfg),
        "corpus_hash": corpus_hash(corpus),
        "rng_seed": cfg.rng_seed,
        "hyperparams": cfg.hashed_view(),
    }


def cmd_train(cfg: ExperimentConfig, force: bool = False) -> RunPaths:
    corpus = resolve_corpus(cfg)
    paths = RunPaths.for_config(cfg)
    if paths.checkpoint.exists() and not force:
        raise UsageError(f"run {paths.root} already has a checkpoint for this config; pass --force to retrain")
    paths.root.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, paths.config)

    meta = _base_meta(cfg, corpus)
    plan = plan_from_config(cfg)

    def _save_turn(turn: int, state: EncoderState) -> None:
        state.save(paths.turn_checkpoint(turn), {**meta, "turn": turn, "epoch": plan.epochs - 1})

    log.info("training", run=str(paths.root), config_hash=meta["config_hash"][:12], **settings.runtime_summary())
    result = train(corpus, plan, telemetry_path=paths.telemetry, on_turn=_save_turn)
    result.state.save(paths.checkpoint, {
        **meta,
        "turn": plan.turns - 1,
        "epoch": plan.epochs - 1,
        "seeds": len(result.seeds),
        "pseudo_seeds": len(result.pseudo_seeds),
    })

    pd.DataFrame(
        [(corpus.kg1.label_of(a), corpus.kg2.label_of(b)) for a, b in result.pseudo_seeds],
        columns=["uri1", "uri2"],
    ).to_csv(paths.pseudo_seeds, sep="\t", header=False, index=False)
    log.info("training finished", checkpoint=str(paths.checkpoint), pseudo_seeds=len(result.pseudo_seeds))
    return paths


# -- checkpoint loading ---------------------------------------------------

def load_state(
    cfg: ExperimentConfig,
    corpus: AlignmentCorpus,
    checkpoint: Optional[PathLike] = None,
) -> Tuple[EncoderState, Dict[str, Any]]:
    """Encoder state plus sidecar, refusing a checkpoint trained under another config or corpus."""
    path = Path(checkpoint) if checkpoint is not None else RunPaths.for_config(cfg).checkpoint
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path} (train first or pass --checkpoint)")
    meta = read_sidecar(path)
    expected = config_hash(cfg)
    if meta.get("config_hash") != expected:
        raise UsageError(
            f"{path}: config hash mismatch (checkpoint {str(meta.get('config_hash'))[:12]}, config {expected[:12]})"
        )
    if meta.get("corpus_hash") != corpus_hash(corpus):
        raise UsageError(f"{path}: corpus hash mismatch; the dataset changed since training")
    state = EncoderState.load(path, cfg.encoder)
    return state, meta


def _score_tables(cfg: ExperimentConfig, corpus: AlignmentCorpus):
    if not cfg.inference.use_hos:
        return None
    sample = sample_seeds(corpus.seed_train, cfg.ppr)
    if not sample:
        return None
    return load_or_compute(corpus, sample, cfg.ppr, RunPaths.for_config(cfg).cache_dir)


def _reports(cfg: ExperimentConfig, corpus: AlignmentCorpus, state: EncoderState, split: str):
    return infer(corpus, state, cfg.ppr, cfg.inference, split=split, score_tables=_score_tables(cfg, corpus))


# -- eval -----------------------------------------------------------------

def _gold(corpus: AlignmentCorpus, direction: Direction, split: str):
    links = corpus.links(split)
    if direction is Direction.KG1_TO_KG2:
        return list(links), corpus.dangling(split, 1)
    return [(b, a) for a, b in links], corpus.dangling(split, 2)


def format_table(result: EvalResult) -> str:
    """Two rows (alignment, dangling) under H@1 H@10 MRR P R F1."""
    nan = float("nan")
    frame = pd.DataFrame(
        [
            [result.hits1, result.hits10, result.mrr,
             result.alignment.precision, result.alignment.recall, result.alignment.f1],
            [nan, nan, nan, result.dangling.precision, result.dangling.recall, result.dangling.f1],
        ],
        index=["alignment", "dangling"],
        columns=["H@1", "H@10", "MRR", "P", "R", "F1"],
    )
    return frame.to_string(float_format=lambda v: f"{v:.4f}", na_rep="-")


def cmd_eval(cfg: ExperimentConfig, checkpoint: Optional[PathLike] = None, split: str = "test") -> Dict[str, Any]:
    corpus = resolve_corpus(cfg)
    state, meta = load_state(cfg, corpus, checkpoint)
    reports = _reports(cfg, corpus, state, split)

    per_direction: Dict[str, EvalResult] = {}
    for direction, report in reports.items():
        links, dangling = _gold(corpus, direction, split)
        per_direction[direction.value] = evaluate(report, links, dangling)
    overall = average_results(list(per_direction.values()))

    payload = to_json(overall, meta["config_hash"], meta["corpus_hash"])
    payload["split"] = split
    payload["inference"] = cfg.inference.model_dump(mode="json")
    payload["thresholds"] = {d.value: r.threshold for d, r in reports.items()}
    payload["directions"] = {k: to_json(v) for k, v in per_direction.items()}

    paths = RunPaths.for_config(cfg)
    paths.root.mkdir(parents=True, exist_ok=True)
    paths.eval_json.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    table = format_table(overall)
    paths.report.write_text(table + "\n", encoding="utf-8")
    log.info("evaluation written", path=str(paths.eval_json), hits1=overall.hits1, dangling_f1=overall.dangling.f1)
    payload["table"] = table
    return payload


# -- ppr ------------------------------------------------------------------

def cmd_ppr(cfg: ExperimentConfig, source_uri: str, side: int = 1, top_k: int = 10) -> Tuple[pd.DataFrame, float]:
    """Top-k PPR values from one entity, plus the full vector's sum."""
    if side not in (1, 2):
        raise UsageError(f"--side must be 1 or 2, got {side}")
    corpus = resolve_corpus(cfg)
    kg = corpus.kg1 if side == 1 else corpus.kg2
    try:
        source = kg.id_of(source_uri)
    except KeyError:
        raise UsageError(f"unknown entity {source_uri!r} in kg{side}") from None
    pi = ppr(kg, source, cfg.ppr)
    frame = (
        pd.DataFrame({"entity": [kg.label_of(i) for i in range(kg.entity_count)], "ppr": pi})
        .sort_values(["ppr", "entity"], ascending=[False, True], kind="mergesort")
        .head(top_k)
        .reset_index(drop=True)
    )
    return frame, float(pi.sum())


# -- infer ----------------------------------------------------------------

def _report_frame(corpus: AlignmentCorpus, report: SimilarityReport, top_k: int) -> pd.DataFrame:
    kg_src, kg_tgt = (corpus.kg1, corpus.kg2) if report.direction is Direction.KG1_TO_KG2 else (corpus.kg2, corpus.kg1)
    src_labels = [kg_src.label_of(i) for i in range(kg_src.entity_count)]
    tgt_labels = [kg_tgt.label_of(i) for i in range(kg_tgt.entity_count)]
    return report.to_frame(src_labels, tgt_labels, top_k)


def cmd_infer(
    cfg: ExperimentConfig,
    checkpoint: Optional[PathLike] = None,
    split: str = "test",
    out_dir: Optional[PathLike] = None,
) -> Path:
    """Ranked candidates with verdicts as TSV per direction, plus both embedding tables."""
    corpus = resolve_corpus(cfg)
    state, _ = load_state(cfg, corpus, checkpoint)
    target = Path(out_dir) if out_dir is not None else RunPaths.for_config(cfg).infer_dir
    target.mkdir(parents=True, exist_ok=True)

    reports = _reports(cfg, corpus, state, split)
    for direction, report in reports.items():
        name = direction.value.replace("->", "-")
        frame = _report_frame(corpus, report, cfg.inference.top_k)
        frame.to_csv(target / f"report.{split}.{name}.tsv", sep="\t", index=False, float_format="%.6f")

    emb1, emb2 = encode(corpus, state, mode="eval")
    emb1.export(target / "embeddings.kg1.wogc", name="kg1")
    emb2.export(target / "embeddings.kg2.wogc", name="kg2")
    log.info("inference written", path=str(target), directions=[d.value for d in reports])
    return target


__all__ = [
    "UsageError",
    "config_hash",
    "RunPaths",
    "resolve_corpus",
    "cmd_gen_synth",
    "cmd_train",
    "load_state",
    "format_table",
    "cmd_eval",
    "cmd_ppr",
    "cmd_infer",
]
