# align/trainer.py
"""
Training loop: turns of epochs of seed-pair batches, with pseudo-seed
mining between turns.

Per batch: encode both KGs on a fresh record, contrastive loss over the
batch anchors, OT loss between the batch's two sides, combined with the
epoch's OT weight, backward, one RMSProp step.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from config.models import (
    ContrastiveConfig,
    EncoderConfig,
    ExperimentConfig,
    OTConfig,
    PPRConfig,
    TrainSettings,
)
from diffcore import ops
from diffcore.optim import RMSPropState, rmsprop_step
from diffcore.tensor import ComputationRecord, backward
from ggan.encoder import EmbeddingTable, EncoderState, encode, encode_tensors
from kg.graph import AlignmentCorpus, TrainingView
from objectives.contrastive import contrastive_terms
from objectives.schedule import combined_loss, omega, ot_weight
from objectives.transport import ot_loss
from ppr.hos import ScoreVectorTable, composite_similarity, csls_adjust, hos_matrix, sample_seeds, score_vectors

log = structlog.get_logger(__name__)

Pair = Tuple[int, int]
ScoreTables = Tuple[ScoreVectorTable, ScoreVectorTable]


@dataclass(frozen=True)
class TrainPlan:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    ot: OTConfig = field(default_factory=OTConfig)
    ppr: PPRConfig = field(default_factory=PPRConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    rng_seed: int = 0

    @property
    def epochs(self) -> int:
        return self.train.epochs

    @property
    def turns(self) -> int:
        return self.train.turns

    @property
    def batch_size(self) -> int:
        return self.train.batch_size

    @property
    def lr(self) -> float:
        return self.train.lr


def plan_from_config(cfg: ExperimentConfig) -> TrainPlan:
    return TrainPlan(
        encoder=cfg.encoder,
        contrastive=cfg.contrastive,
        ot=cfg.ot,
        ppr=cfg.ppr,
        train=cfg.train,
        rng_seed=cfg.rng_seed,
    )


@dataclass
class TrainResult:
    state: EncoderState
    optimizer: RMSPropState
    seeds: Tuple[Pair, ...]
    pseudo_seeds: Tuple[Pair, ...]
    telemetry: List[Dict] = field(default_factory=list)

    @property
    def batches_run(self) -> int:
        return int(sum(t["batches"] for t in self.telemetry))


def _batches(order: np.ndarray, size: int) -> List[np.ndarray]:
    """Consecutive chunks of `size`; a trailing single pair borrows the epoch's first pair."""
    chunks = [order[i:i + size] for i in range(0, len(order), size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-1] = np.concatenate([chunks[-1], order[:1]])
    return chunks


@dataclass(frozen=True)
class ExpansionScores:
    """Similarity among the unseeded entities: sim[i, j] scores rows[i] against cols[j]."""

    rows: np.ndarray
    cols: np.ndarray
    sim: np.ndarray


def expansion_scores(
    emb1: EmbeddingTable,
    emb2: EmbeddingTable,
    current_seeds: Sequence[Pair],
    score_tables: Optional[ScoreTables] = None,
    hos_weight: float = 1.0,
    csls_k: int = 10,
) -> ExpansionScores:
    seeded1 = {int(a) for a, _ in current_seeds}
    seeded2 = {int(b) for _, b in current_seeds}
    rows = np.asarray([i for i in range(len(emb1)) if i not in seeded1], dtype=np.int64)
    cols = np.asarray([j for j in range(len(emb2)) if j not in seeded2], dtype=np.int64)
    if len(rows) == 0 or len(cols) == 0:
        return ExpansionScores(rows=rows, cols=cols, sim=np.zeros((len(rows), len(cols))))

    hos = None
    if score_tables is not None and hos_weight > 0:
        hos = hos_matrix(score_tables[0], score_tables[1], rows=rows, cols=cols)
    sim = composite_similarity(emb1.vectors[rows], emb2.vectors[cols], hos, hos_weight)
    if csls_k > 0:
        sim = csls_adjust(sim, min(csls_k, *sim.shape))
    return ExpansionScores(rows=rows, cols=cols, sim=sim)


def mutual_nearest(scores: ExpansionScores, threshold: float) -> List[Pair]:
    if scores.sim.size == 0 or threshold == np.inf:
        return []
    sim = scores.sim
    best_col = sim.argmax(axis=1)
    best_row = sim.argmax(axis=0)
    out: List[Pair] = []
    for i, j in enumerate(best_col):
        if best_row[j] == i and sim[i, j] >= threshold:
            out.append((int(scores.rows[i]), int(scores.cols[j])))
    return sorted(out)


def check_expansion(found: Sequence[Pair], scores: ExpansionScores, threshold: float) -> None:
    """Raises RuntimeError unless every pair is an unseeded, reciprocal best match scoring at least `threshold`."""
    row_pos = {int(e): i for i, e in enumerate(scores.rows)}
    col_pos = {int(e): j for j, e in enumerate(scores.cols)}
    if len({a for a, _ in found}) != len(found) or len({b for _, b in found}) != len(found):
        raise RuntimeError("pseudo seeds reuse an entity")
    for a, b in found:
        if a not in row_pos or b not in col_pos:
            raise RuntimeError(f"pseudo seed ({a}, {b}) touches an already seeded entity")
        i, j = row_pos[a], col_pos[b]
        score = scores.sim[i, j]
        if score < scores.sim[i].max() or score < scores.sim[:, j].max():
            raise RuntimeError(f"pseudo seed ({a}, {b}) is not a mutual nearest neighbour")
        if score < threshold:
            raise RuntimeError(f"pseudo seed ({a}, {b}) scores {score:.6f} below {threshold}")


def iterative_expand(
    emb1: EmbeddingTable,
    emb2: EmbeddingTable,
    current_seeds: Sequence[Pair],
    threshold: float,
    score_tables: Optional[ScoreTables] = None,
    hos_weight: float = 1.0,
    csls_k: int = 10,
) -> List[Pair]:
    """
    Mutual nearest neighbours among unseeded entities under the composite
    (CSLS-adjusted when csls_k > 0) similarity, kept when the score reaches
    `threshold`. Sorted by source id.
    """
    scores = expansion_scores(emb1, emb2, current_seeds, score_tables, hos_weight, csls_k)
    return mutual_nearest(scores, threshold)


def _write_telemetry(path: Optional[Path], entry: Dict) -> None:
    if path is None:
        return
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def train(
    corpus: Union[AlignmentCorpus, TrainingView],
    plan: TrainPlan,
    state: Optional[EncoderState] = None,
    telemetry_path: Optional[Union[str, Path]] = None,
    on_epoch: Optional[Callable[[Dict], None]] = None,
    on_turn: Optional[Callable[[int, EncoderState], None]] = None,
) -> TrainResult:
    """Dangling labels never reach this function: an AlignmentCorpus is cut to its training view first."""
    view = corpus.training_view() if isinstance(corpus, AlignmentCorpus) else corpus
    if len(view.seed_train) < 2:
        raise ValueError(f"training needs at least 2 seed pairs, got {len(view.seed_train)}")
    kg1, kg2 = view.kg1, view.kg2
    rng = np.random.default_rng(plan.rng_seed)
    tpath = Path(telemetry_path) if telemetry_path is not None else None
    if tpath is not None:
        tpath.parent.mkdir(parents=True, exist_ok=True)
        tpath.write_text("", encoding="utf-8")

    if state is None:
        state = EncoderState.initialize(plan.encoder, kg1.entity_count, kg2.entity_count, rng)
    opt = RMSPropState()
    seeds: List[Pair] = list(view.seed_train)
    pseudo: List[Pair] = []
    telemetry: List[Dict] = []
    ts = plan.train

    score_tables: Optional[ScoreTables] = None
    if ts.iterative and ts.il_use_hos and plan.turns > 1:
        sample = sample_seeds(view.seed_train, plan.ppr)
        score_tables = score_vectors(view, sample, plan.ppr)

    for turn in range(plan.turns):
        if turn > 0 and not ts.warm_start:
            state = EncoderState.initialize(plan.encoder, kg1.entity_count, kg2.entity_count, rng)
            opt = RMSPropState()
        for epoch in range(plan.epochs):
            started = time.perf_counter()
            w_ot = ot_weight(epoch, plan.ot)
            l1_sum = l2_sum = loss_sum = 0.0
            converged = True
            min_neg = np.inf
            batches = _batches(rng.permutation(len(seeds)), plan.batch_size)
            for idx in batches:
                batch = [seeds[k] for k in idx]
                rec = ComputationRecord()
                z1, z2 = encode_tensors(state.register(rec), kg1, kg2, plan.encoder, "train", rng)
                terms = contrastive_terms(z1, z2, batch, plan.contrastive)
                if not np.all(terms.negative_mass >= terms.floor):
                    raise RuntimeError("negative mass fell below its floor")
                min_neg = min(min_neg, float(terms.negative_mass.min()))

                l2 = None
                if w_ot > 0:
                    x1 = ops.gather_rows(z1, [p[0] for p in batch])
                    x2 = ops.gather_rows(z2, [p[1] for p in batch])
                    mass = float(len(batch)) if plan.ot.unit_pair_mass else 1.0
                    ot = ot_loss(x1, x2, plan.ot, mass=mass)
                    converged = converged and ot.converged
                    l2 = ot.loss
                    l2_sum += ot.loss.item()
                loss = combined_loss(terms.loss, l2, epoch, plan.ot)
                grads = backward(loss, rec)
                state.params = rmsprop_step(state.params, grads, opt, ts.lr, ts.rmsprop_decay, ts.rmsprop_eps)
                l1_sum += terms.loss.item()
                loss_sum += loss.item()

            nb = len(batches)
            entry = {
                "turn": turn,
                "epoch": epoch,
                "l1": l1_sum / nb,
                "l2": l2_sum / nb,
                "omega": omega(epoch, plan.ot.schedule_horizon),
                "loss": loss_sum / nb,
                "batches": nb,
                "sinkhorn_converged": converged,
                "min_negative_mass": min_neg,
                "seeds": len(seeds),
                "wall_ms": round((time.perf_counter() - started) * 1000.0, 3),
            }
            telemetry.append(entry)
            _write_telemetry(tpath, entry)
            if on_epoch is not None:
                on_epoch(entry)
            log.info("epoch done", **{k: entry[k] for k in ("turn", "epoch", "l1", "l2", "loss", "seeds")})

        if ts.iterative and turn < plan.turns - 1:
            e1, e2 = encode(view, state, mode="eval")
            scores = expansion_scores(
                e1, e2, seeds,
                score_tables=score_tables,
                hos_weight=1.0,
                csls_k=ts.il_csls_k,
            )
            found = mutual_nearest(scores, ts.il_threshold)
            check_expansion(found, scores, ts.il_threshold)
            before = len(seeds)
            seeds.extend(found)
            pseudo.extend(found)
            if len(seeds) < before or len(set(seeds)) != len(seeds):
                raise RuntimeError("seed set shrank or repeated a pair after expansion")
            log.info("pseudo seeds added", turn=turn, added=len(found), total=len(seeds))
        if on_turn is not None:
            on_turn(turn, state)

    return TrainResult(
        state=state,
        optimizer=opt,
        seeds=tuple(seeds),
        pseudo_seeds=tuple(pseudo),
        telemetry=telemetry,
    )


__all__ = [
    "TrainPlan",
    "plan_from_config",
    "TrainResult",
    "ExpansionScores",
    "expansion_scores",
    "mutual_nearest",
    "check_expansion",
    "iterative_expand",
    "train",
]
