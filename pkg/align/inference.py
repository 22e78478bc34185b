# align/inference.py
"""
Alignment search and dangling detection.

For one direction and one split: rows are the split's link sources plus its
labeled dangling sources, columns every target-KG entity not used as a
training seed. Scores are cosine (+ weighted HOS), optionally CSLS-adjusted,
computed against every unseeded source entity so that CSLS neighbourhoods
and verdict margins do not depend on which split is being reported.

A source is flagged dangling when its verdict score is below the threshold.
The verdict score is either the row's best score or its margin over the
strongest other source competing for that same best target.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import AbstractSet, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from config.models import Direction, InferenceConfig, PPRConfig, VerdictScore
from ggan.encoder import EmbeddingTable, EncoderState, encode
from kg.graph import AlignmentCorpus
from ppr.hos import ScoreVectorTable, composite_similarity, csls_adjust, hos_matrix, sample_seeds, score_vectors

log = structlog.get_logger(__name__)

Pair = Tuple[int, int]
ScoreTables = Tuple[ScoreVectorTable, ScoreVectorTable]

FRAME_COLUMNS = ["source_uri", "rank", "target_uri", "score", "best_score", "verdict_score", "dangling"]


@dataclass(frozen=True, eq=False)
class SimilarityReport:
    direction: Direction
    sources: np.ndarray          # source-KG ids, one per row
    targets: np.ndarray          # candidate target-KG ids, one per column
    scores: np.ndarray           # (rows, cols)
    threshold: float
    verdicts: np.ndarray         # True = flagged dangling
    verdict_scores: Optional[np.ndarray] = None  # what the threshold compares; best_scores when None

    def __post_init__(self) -> None:
        object.__setattr__(self, "_row", {int(s): i for i, s in enumerate(self.sources)})
        object.__setattr__(self, "_col", {int(t): j for j, t in enumerate(self.targets)})

    @property
    def best_scores(self) -> np.ndarray:
        if self.scores.shape[1] == 0:
            return np.full(len(self.sources), -np.inf)
        return self.scores.max(axis=1)

    @property
    def decision_scores(self) -> np.ndarray:
        return self.best_scores if self.verdict_scores is None else self.verdict_scores

    def has_source(self, source: int) -> bool:
        return int(source) in self._row  # type: ignore[attr-defined]

    def candidates(self, source: int, k: Optional[int] = None) -> List[Tuple[int, float]]:
        """(target, score) sorted by score descending, ties by target id."""
        i = self._row[int(source)]  # type: ignore[attr-defined]
        row = self.scores[i]
        order = np.lexsort((self.targets, -row))
        if k is not None:
            order = order[:k]
        return [(int(self.targets[j]), float(row[j])) for j in order]

    def best_target_of(self, source: int) -> Optional[int]:
        if self.scores.shape[1] == 0:
            return None
        return self.candidates(source, 1)[0][0]

    def rank_of(self, source: int, target: int) -> Optional[int]:
        """1 + number of candidates scoring strictly higher; None if target is not a candidate."""
        j = self._col.get(int(target))  # type: ignore[attr-defined]
        if j is None:
            return None
        row = self.scores[self._row[int(source)]]  # type: ignore[attr-defined]
        return 1 + int(np.sum(row > row[j]))

    def with_threshold(self, threshold: float) -> "SimilarityReport":
        return replace(self, threshold=float(threshold), verdicts=self.decision_scores < threshold)

    def to_frame(self, source_labels: Sequence[str], target_labels: Sequence[str], top_k: int = 10) -> pd.DataFrame:
        rows = []
        best = self.best_scores
        decision = self.decision_scores
        for i, s in enumerate(self.sources):
            for rank, (t, score) in enumerate(self.candidates(int(s), top_k), start=1):
                rows.append({
                    "source_uri": source_labels[int(s)],
                    "rank": rank,
                    "target_uri": target_labels[t],
                    "score": score,
                    "best_score": float(best[i]),
                    "verdict_score": float(decision[i]),
                    "dangling": bool(self.verdicts[i]),
                })
        return pd.DataFrame(rows, columns=FRAME_COLUMNS)


def _orient(direction: Direction, pairs: Sequence[Pair]) -> List[Pair]:
    if direction is Direction.KG1_TO_KG2:
        return [(int(a), int(b)) for a, b in pairs]
    return [(int(b), int(a)) for a, b in pairs]


def report_rows(corpus: AlignmentCorpus, direction: Direction, split: str) -> Tuple[np.ndarray, np.ndarray]:
    """(sources, candidate targets) for one direction and split."""
    src_side = 1 if direction is Direction.KG1_TO_KG2 else 2
    tgt_count = corpus.kg2.entity_count if src_side == 1 else corpus.kg1.entity_count
    links = _orient(direction, corpus.links(split))
    seeded_targets = {t for _, t in _orient(direction, corpus.seed_train)}
    sources = sorted({s for s, _ in links} | set(corpus.dangling(split, src_side)))
    targets = [t for t in range(tgt_count) if t not in seeded_targets]
    return np.asarray(sources, dtype=np.int64), np.asarray(targets, dtype=np.int64)


def source_pool(corpus: AlignmentCorpus, direction: Direction, sources: Sequence[int] = ()) -> np.ndarray:
    """Every source-KG entity not used as a training seed, plus `sources`; sorted."""
    src_count = corpus.kg1.entity_count if direction is Direction.KG1_TO_KG2 else corpus.kg2.entity_count
    seeded = {s for s, _ in _orient(direction, corpus.seed_train)}
    pool = {s for s in range(src_count) if s not in seeded} | {int(s) for s in sources}
    return np.asarray(sorted(pool), dtype=np.int64)


def column_margin(sim: np.ndarray) -> np.ndarray:
    """
    Per row i with best column j: sim[i, j] minus the highest sim[i', j] over
    the other rows. Positive exactly when i and j are strict mutual nearest
    neighbours. A lone row keeps its best score; no columns gives -inf.
    """
    n, m = sim.shape
    if m == 0:
        return np.full(n, -np.inf)
    best_col = sim.argmax(axis=1)
    best = sim[np.arange(n), best_col]
    if n == 1:
        return best.copy()
    top_row = sim.argmax(axis=0)
    top = sim[top_row, np.arange(m)]
    rest = sim.copy()
    rest[top_row, np.arange(m)] = -np.inf
    second = rest.max(axis=0)
    competitor = np.where(top_row[best_col] == np.arange(n), second[best_col], top[best_col])
    return best - competitor


def build_report(
    corpus: AlignmentCorpus,
    tables: Tuple[EmbeddingTable, EmbeddingTable],
    direction: Direction,
    split: str,
    cfg: InferenceConfig,
    score_tables: Optional[ScoreTables] = None,
    threshold: float = -np.inf,
) -> SimilarityReport:
    direction = Direction(direction)
    sources, targets = report_rows(corpus, direction, split)
    pool = source_pool(corpus, direction, sources)
    emb_src, emb_tgt = tables if direction is Direction.KG1_TO_KG2 else tables[::-1]

    hos = None
    if cfg.use_hos and score_tables is not None and cfg.hos_weight > 0:
        t_src, t_tgt = score_tables if direction is Direction.KG1_TO_KG2 else score_tables[::-1]
        hos = hos_matrix(t_src, t_tgt, rows=pool, cols=targets)
    sim = composite_similarity(emb_src.vectors[pool], emb_tgt.vectors[targets], hos, cfg.hos_weight)
    if cfg.use_csls and min(sim.shape) > 0:
        sim = csls_adjust(sim, min(cfg.csls_k, *sim.shape))

    at = np.searchsorted(pool, sources)
    scores = sim[at]
    if VerdictScore(cfg.verdict_score) is VerdictScore.MARGIN:
        decision = column_margin(sim)[at]
    else:
        decision = scores.max(axis=1) if scores.shape[1] else np.full(len(sources), -np.inf)
    return SimilarityReport(
        direction=direction,
        sources=sources,
        targets=targets,
        scores=scores,
        threshold=float(threshold),
        verdicts=decision < threshold,
        verdict_scores=decision,
    )


def calibrate_threshold(report: SimilarityReport, dangling_sources: AbstractSet[int]) -> float:
    """
    Threshold maximizing dangling F1 on a validation report. Candidates: the
    lowest verdict score, midpoints between consecutive distinct verdict
    scores, and the next float above the highest. Ties go to the lowest
    threshold.
    """
    if len(report.sources) == 0:
        raise ValueError("cannot calibrate a dangling threshold on an empty validation report")
    scores = report.decision_scores
    labels = np.isin(report.sources, np.fromiter((int(x) for x in dangling_sources), dtype=np.int64))
    values = np.unique(scores)
    candidates = [values[0], *((values[:-1] + values[1:]) / 2.0), np.nextafter(values[-1], np.inf)]

    best_f1, best_theta = -1.0, float(candidates[0])
    positives = int(labels.sum())
    for theta in candidates:
        flagged = scores < theta
        tp = int(np.sum(flagged & labels))
        n_flag = int(flagged.sum())
        p = tp / n_flag if n_flag else 0.0
        r = tp / positives if positives else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if f1 > best_f1:
            best_f1, best_theta = f1, float(theta)
    log.info("dangling threshold calibrated", threshold=best_theta, f1=best_f1, rows=len(scores))
    return best_theta


def infer(
    corpus: AlignmentCorpus,
    state: EncoderState,
    ppr_cfg: PPRConfig,
    cfg: InferenceConfig,
    split: str = "test",
    dangling_threshold: Optional[float] = None,
    score_tables: Optional[ScoreTables] = None,
) -> Dict[Direction, SimilarityReport]:
    """
    One report per direction of corpus.direction. Without an explicit
    threshold (argument or cfg) it is calibrated per direction on the
    validation split's dangling labels.
    """
    tables = encode(corpus, state, mode="eval")
    if cfg.use_hos and score_tables is None:
        sample = sample_seeds(corpus.seed_train, ppr_cfg)
        score_tables = score_vectors(corpus, sample, ppr_cfg) if sample else None
    threshold = dangling_threshold if dangling_threshold is not None else cfg.dangling_threshold

    out: Dict[Direction, SimilarityReport] = {}
    for direction in corpus.direction.expand():
        report = build_report(corpus, tables, direction, split, cfg, score_tables)
        theta = threshold
        if theta is None:
            side = 1 if direction is Direction.KG1_TO_KG2 else 2
            valid_dangling = corpus.dangling("valid", side)
            if valid_dangling:
                valid = build_report(corpus, tables, direction, "valid", cfg, score_tables)
                theta = calibrate_threshold(valid, valid_dangling)
            else:
                log.warning("no validation dangling labels; nothing will be flagged", direction=direction.value)
                theta = -np.inf
        out[direction] = report.with_threshold(theta)
        log.info(
            "report built",
            direction=direction.value,
            split=split,
            sources=len(report.sources),
            targets=len(report.targets),
            threshold=float(theta),
            flagged=int(out[direction].verdicts.sum()),
        )
    return out


__all__ = [
    "SimilarityReport",
    "FRAME_COLUMNS",
    "report_rows",
    "source_pool",
    "column_margin",
    "build_report",
    "calibrate_threshold",
    "infer",
]
