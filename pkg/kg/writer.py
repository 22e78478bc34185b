# kg/writer.py
from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Sequence, Union

import pandas as pd
import structlog

import config.settings as settings
from kg.graph import AlignmentCorpus, KnowledgeGraph, Pair

log = structlog.get_logger(__name__)


def _labels(kg: KnowledgeGraph, prefix: str) -> List[str]:
    if kg.entity_labels is not None:
        return list(kg.entity_labels)
    return [f"{prefix}/e{i}" for i in range(kg.entity_count)]


def _rel_labels(kg: KnowledgeGraph, prefix: str) -> List[str]:
    if kg.relation_labels is not None:
        return list(kg.relation_labels)
    return [f"{prefix}/r{i}" for i in range(kg.relation_count)]


def _write(path: Path, rows: Iterable[Sequence[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "".join("\t".join(r) + "\n" for r in rows)
    path.write_text(text, encoding="utf-8")


def _pair_rows(pairs: Sequence[Pair], l1: List[str], l2: List[str]) -> List[List[str]]:
    return [[l1[a], l2[b]] for a, b in pairs]


def write_corpus(corpus: AlignmentCorpus, root: Union[str, Path]) -> Path:
    """
    Emit the dataset layout load_corpus reads, plus ent_ids/rel_ids so ids
    (and isolated entities) survive the round trip.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    f = {k: root / v for k, v in settings.DATASET_FILES.items()}

    for side, kg in ((1, corpus.kg1), (2, corpus.kg2)):
        ents = _labels(kg, f"kg{side}")
        rels = _rel_labels(kg, f"kg{side}")
        tri = pd.DataFrame(kg.triples, columns=["h", "r", "t"])
        _write(f[f"triples_{side}"], ([ents[h], rels[r], ents[t]] for h, r, t in tri.itertuples(index=False)))
        _write(f[f"ent_ids_{side}"], ([str(i), u] for i, u in enumerate(ents)))
        _write(f[f"rel_ids_{side}"], ([str(i), u] for i, u in enumerate(rels)))

    l1, l2 = _labels(corpus.kg1, "kg1"), _labels(corpus.kg2, "kg2")
    _write(f["links"], _pair_rows(corpus.all_links, l1, l2))
    _write(f["train_links"], _pair_rows(corpus.seed_train, l1, l2))
    _write(f["valid_links"], _pair_rows(corpus.links_valid, l1, l2))
    _write(f["test_links"], _pair_rows(corpus.links_test, l1, l2))
    for split in ("valid", "test"):
        for side, labels in ((1, l1), (2, l2)):
            ids = sorted(corpus.dangling(split, side))
            _write(f[f"{split}_dangling_{side}"], ([labels[i]] for i in ids))

    log.info("corpus written", root=str(root), links=len(corpus.all_links))
    return root
