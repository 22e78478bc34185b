# align/metrics.py
"""
Relaxed (ranking) and consolidated (detect-then-align) evaluation.

Precision / recall with an empty denominator are 0, so every metric is a
total function of its inputs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import AbstractSet, Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from align.inference import SimilarityReport

Pair = Tuple[int, int]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, correct: int, predicted: int, gold: int) -> "PRF":
        p = correct / predicted if predicted else 0.0
        r = correct / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        return cls(p, r, f1)

    def as_json(self) -> Dict[str, float]:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class EvalResult:
    hits1: float
    hits10: float
    mrr: float
    alignment: PRF
    dangling: PRF

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


def evaluate_relaxed(report: SimilarityReport, gold_links: Iterable[Pair]) -> Tuple[float, float, float]:
    """Hits@1, Hits@10, MRR over gold sources present in the report (matchable rows only)."""
    ranks = []
    for s, t in gold_links:
        if not report.has_source(s):
            continue
        r = report.rank_of(s, t)
        ranks.append(np.inf if r is None else r)
    if not ranks:
        return 0.0, 0.0, 0.0
    arr = np.asarray(ranks, dtype=np.float64)
    return float(np.mean(arr <= 1)), float(np.mean(arr <= 10)), float(np.mean(1.0 / arr))


def evaluate_consolidated(
    report: SimilarityReport,
    gold_links: Iterable[Pair],
    gold_dangling: AbstractSet[int],
) -> Tuple[PRF, PRF]:
    """(alignment P/R/F1, dangling P/R/F1) from the report's verdicts and top-1 picks."""
    sources = set(int(s) for s in report.sources)
    gold = {int(s): int(t) for s, t in gold_links if int(s) in sources}
    dangling_gold = {int(x) for x in gold_dangling} & sources

    flagged = {int(s) for s, v in zip(report.sources, report.verdicts) if v}
    dangling = PRF.from_counts(len(flagged & dangling_gold), len(flagged), len(dangling_gold))

    kept = [int(s) for s, v in zip(report.sources, report.verdicts) if not v]
    correct = sum(1 for s in kept if s in gold and report.best_target_of(s) == gold[s])
    alignment = PRF.from_counts(correct, len(kept), len(gold))
    return alignment, dangling


def evaluate(
    report: SimilarityReport,
    gold_links: Sequence[Pair],
    gold_dangling: AbstractSet[int],
) -> EvalResult:
    h1, h10, mrr = evaluate_relaxed(report, gold_links)
    alignment, dangling = evaluate_consolidated(report, gold_links, gold_dangling)
    return EvalResult(h1, h10, mrr, alignment, dangling)


def average_results(results: Sequence[EvalResult]) -> EvalResult:
    """Field-wise mean (used for the two alignment directions)."""
    if not results:
        raise ValueError("nothing to average")

    def _avg(get) -> float:
        return float(np.mean([get(r) for r in results]))

    def _prf(get) -> PRF:
        return PRF(_avg(lambda r: get(r).precision), _avg(lambda r: get(r).recall), _avg(lambda r: get(r).f1))

    return EvalResult(
        hits1=_avg(lambda r: r.hits1),
        hits10=_avg(lambda r: r.hits10),
        mrr=_avg(lambda r: r.mrr),
        alignment=_prf(lambda r: r.alignment),
        dangling=_prf(lambda r: r.dangling),
    )


def to_json(
    result: EvalResult,
    config_hash: Optional[str] = None,
    corpus_hash: Optional[str] = None,
) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "relaxed": {"hits1": result.hits1, "hits10": result.hits10, "mrr": result.mrr},
        "alignment": result.alignment.as_json(),
        "dangling": result.dangling.as_json(),
    }
    if config_hash is not None:
        out["config_hash"] = config_hash
    if corpus_hash is not None:
        out["corpus_hash"] = corpus_hash
    return out


__all__ = [
    "PRF",
    "EvalResult",
    "evaluate_relaxed",
    "evaluate_consolidated",
    "evaluate",
    "average_results",
    "to_json",
]
