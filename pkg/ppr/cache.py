# ppr/cache.py
from __future__ import annotations

from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import structlog

from config.models import PPRConfig
from diffcore.checkpoint import CheckpointFormatError, read_tensors, write_tensors
from kg.graph import AlignmentCorpus, corpus_hash
from ppr.hos import Pair, ScoreVectorTable, score_vectors
from utils.hashing import hash_json

log = structlog.get_logger(__name__)


def cache_key(corpus: AlignmentCorpus, sample: Sequence[Pair], cfg: PPRConfig) -> str:
    return hash_json({
        "corpus": corpus_hash(corpus),
        "ppr": cfg.model_dump(mode="json"),
        "sample": [[int(a), int(b)] for a, b in sample],
    })


def cache_path(directory: Union[str, Path], key: str) -> Path:
    return Path(directory) / f"ppr-{key[:16]}.wogc"


def load_or_compute(
    corpus: AlignmentCorpus,
    sample: Sequence[Pair],
    cfg: PPRConfig,
    directory: Union[str, Path, None] = None,
) -> Tuple[ScoreVectorTable, ScoreVectorTable]:
    """Score tables for `sample`, read from / written to `directory` when given."""
    if directory is None:
        return score_vectors(corpus, sample, cfg)
    key = cache_key(corpus, sample, cfg)
    path = cache_path(directory, key)
    s1 = tuple(int(p[0]) for p in sample)
    s2 = tuple(int(p[1]) for p in sample)
    if path.exists():
        try:
            t = read_tensors(path)
            t1, t2 = ScoreVectorTable(t["T1"], s1), ScoreVectorTable(t["T2"], s2)
            if t1.values.shape[0] == corpus.kg1.entity_count and t2.values.shape[0] == corpus.kg2.entity_count:
                log.info("ppr cache hit", path=str(path))
                return t1, t2
        except (CheckpointFormatError, KeyError, ValueError) as e:
            log.warning("ppr cache unreadable; recomputing", path=str(path), error=str(e))
    t1, t2 = score_vectors(corpus, sample, cfg)
    write_tensors(path, {
        "T1": t1.values,
        "T2": t2.values,
        "sources": np.asarray(sample, dtype=np.float64).reshape(-1, 2),
    })
    log.info("ppr cache written", path=str(path))
    return t1, t2


__all__ = ["cache_key", "cache_path", "load_or_compute"]
