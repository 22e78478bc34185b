# kg/loader.py
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

import config.settings as settings
from config.models import Direction
from kg.graph import AlignmentCorpus, KnowledgeGraph, Pair

log = structlog.get_logger(__name__)


class CorpusLoadError(ValueError):
    """Missing dataset file, malformed line, or a URI the KG does not contain."""


def _read_tsv(path: Path, columns: Sequence[str], required: bool = True) -> Optional[pd.DataFrame]:
    """
    Read a headerless tab-separated file as strings.
    Returns None for a missing optional file; raises CorpusLoadError naming the
    file (and line number for malformed rows) otherwise.
    """
    if not path.exists():
        if required:
            raise CorpusLoadError(f"missing dataset file: {path}")
        return None
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CorpusLoadError(f"{path}: not valid UTF-8 ({e})") from e

    lines = pd.Series(text.splitlines(), dtype=object)
    lines = lines[lines.str.strip() != ""]
    if lines.empty:
        return pd.DataFrame(columns=[*columns, "_line"])

    parts = lines.str.split("\t")
    widths = parts.str.len()
    bad = widths != len(columns)
    if bad.any():
        bad_lines = (lines.index[bad] + 1).tolist()
        shown = ", ".join(str(x) for x in bad_lines[:5])
        raise CorpusLoadError(
            f"{path}: malformed line {bad_lines[0]} (expected {len(columns)} tab-separated fields; "
            f"bad lines: {shown}{' ...' if len(bad_lines) > 5 else ''})"
        )
    df = pd.DataFrame(parts.tolist(), columns=list(columns))
    for col in columns:
        df[col] = df[col].str.strip()
    empty = (df[list(columns)] == "").any(axis=1)
    if empty.any():
        first = int(lines.index[empty.to_numpy()][0]) + 1
        raise CorpusLoadError(f"{path}: malformed line {first} (empty field)")
    df["_line"] = lines.index.to_numpy() + 1
    return df


def _read_id_file(path: Path) -> Optional[List[str]]:
    """`id<TAB>uri` lines; ids must be exactly 0..n-1."""
    df = _read_tsv(path, ["id", "uri"], required=False)
    if df is None:
        return None
    ids = pd.to_numeric(df["id"], errors="coerce")
    if ids.isna().any():
        line = int(df.loc[ids.isna(), "_line"].iloc[0])
        raise CorpusLoadError(f"{path}: line {line}: id is not an integer")
    ids = ids.astype(int)
    if sorted(ids.tolist()) != list(range(len(df))):
        raise CorpusLoadError(f"{path}: ids must be dense 0..{len(df) - 1}")
    if df["uri"].duplicated().any():
        dup = df.loc[df["uri"].duplicated(), "uri"].iloc[0]
        raise CorpusLoadError(f"{path}: duplicate uri {dup!r}")
    return df.assign(id=ids).sort_values("id")["uri"].tolist()


def _index_from_order(values: Sequence[str]) -> Dict[str, int]:
    return {u: i for i, u in enumerate(pd.unique(pd.Series(list(values), dtype=object)))}


def _build_kg(
    triples_df: pd.DataFrame,
    ent_order: Optional[List[str]],
    rel_order: Optional[List[str]],
    path: Path,
) -> KnowledgeGraph:
    if ent_order is None:
        # first appearance, head before tail on each line
        interleaved = np.column_stack([triples_df["head"].to_numpy(), triples_df["tail"].to_numpy()]).ravel()
        ent_index = _index_from_order(interleaved)
    else:
        ent_index = {u: i for i, u in enumerate(ent_order)}
    rel_index = _index_from_order(triples_df["relation"]) if rel_order is None else {
        u: i for i, u in enumerate(rel_order)
    }

    def _map(col: str, index: Dict[str, int]) -> np.ndarray:
        mapped = triples_df[col].map(index)
        if mapped.isna().any():
            row = mapped.index[mapped.isna()][0]
            raise CorpusLoadError(
                f"{path}: line {triples_df.at[row, '_line']}: {col} {triples_df.at[row, col]!r} missing from the id file"
            )
        return mapped.to_numpy(dtype=np.int64)

    if len(triples_df):
        triples = np.column_stack(
            [_map("head", ent_index), _map("relation", rel_index), _map("tail", ent_index)]
        )
    else:
        triples = np.zeros((0, 3), dtype=np.int64)

    ent_labels = tuple(sorted(ent_index, key=ent_index.get))
    rel_labels = tuple(sorted(rel_index, key=rel_index.get))
    return KnowledgeGraph(
        entity_count=len(ent_labels),
        relation_count=len(rel_labels),
        triples=triples,
        entity_labels=ent_labels,
        relation_labels=rel_labels,
    )


@dataclass(frozen=True)
class _EntityLookup:
    """URI -> id for one side; `where` names what a URI must occur in to be known."""

    index: Dict[str, int]
    where: str

    @classmethod
    def for_kg(cls, kg: KnowledgeGraph, side: int, has_id_file: bool) -> "_EntityLookup":
        # with an id file, listed entities count even when no triple mentions them
        where = f"kg{side} triples or ent_ids_{side}" if has_id_file else f"kg{side} triples"
        return cls(kg._label_index, where)

    def resolve(self, uri: str, path: Path, line: int) -> int:
        if uri not in self.index:
            raise CorpusLoadError(f"{path}: line {line}: {uri!r} does not occur in {self.where}")
        return self.index[uri]


def _map_pairs(df: pd.DataFrame, look1: _EntityLookup, look2: _EntityLookup, path: Path) -> Tuple[Pair, ...]:
    return tuple(
        (look1.resolve(u1, path, line), look2.resolve(u2, path, line))
        for line, u1, u2 in zip(df["_line"], df["uri1"], df["uri2"])
    )


def _map_set(df: Optional[pd.DataFrame], look: _EntityLookup, path: Path) -> FrozenSet[int]:
    if df is None:
        return frozenset()
    return frozenset(look.resolve(u, path, line) for line, u in zip(df["_line"], df["uri"]))


def load_corpus(root: Union[str, Path], direction: Union[Direction, str] = Direction.BOTH) -> AlignmentCorpus:
    """
    Load a dataset directory laid out as:
      rel_triples_1, rel_triples_2, ent_links,
      splits/{train,valid,test}_links, splits/{valid,test}_dangling_{1,2} (optional),
      ent_ids_{1,2}, rel_ids_{1,2} (optional, `id<TAB>uri`).
    Splits are used exactly as given.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusLoadError(f"dataset directory not found: {root}")
    f = {k: root / v for k, v in settings.DATASET_FILES.items()}

    tri1 = _read_tsv(f["triples_1"], ["head", "relation", "tail"])
    tri2 = _read_tsv(f["triples_2"], ["head", "relation", "tail"])
    links = _read_tsv(f["links"], ["uri1", "uri2"])
    split_frames = {
        name: _read_tsv(f[f"{name}_links"], ["uri1", "uri2"]) for name in ("train", "valid", "test")
    }

    ids1, ids2 = _read_id_file(f["ent_ids_1"]), _read_id_file(f["ent_ids_2"])
    kg1 = _build_kg(tri1, ids1, _read_id_file(f["rel_ids_1"]), f["triples_1"])
    kg2 = _build_kg(tri2, ids2, _read_id_file(f["rel_ids_2"]), f["triples_2"])
    look1 = _EntityLookup.for_kg(kg1, 1, ids1 is not None)
    look2 = _EntityLookup.for_kg(kg2, 2, ids2 is not None)

    all_links = set(_map_pairs(links, look1, look2, f["links"]))
    split_pairs = {name: _map_pairs(df, look1, look2, f[f"{name}_links"]) for name, df in split_frames.items()}
    for name, pairs in split_pairs.items():
        stray = [p for p in pairs if p not in all_links]
        if stray:
            raise CorpusLoadError(f"{f[f'{name}_links']}: {len(stray)} pair(s) not listed in ent_links")

    dangling = {}
    for split in ("valid", "test"):
        for side, look in ((1, look1), (2, look2)):
            key = f"{split}_dangling_{side}"
            dangling[key] = _map_set(_read_tsv(f[key], ["uri"], required=False), look, f[key])

    corpus = AlignmentCorpus(
        kg1=kg1,
        kg2=kg2,
        seed_train=split_pairs["train"],
        links_valid=split_pairs["valid"],
        links_test=split_pairs["test"],
        dangling1_valid=dangling["valid_dangling_1"],
        dangling1_test=dangling["test_dangling_1"],
        dangling2_valid=dangling["valid_dangling_2"],
        dangling2_test=dangling["test_dangling_2"],
        direction=Direction(direction),
    )
    log.info(
        "corpus loaded",
        root=str(root),
        kg1_entities=kg1.entity_count,
        kg2_entities=kg2.entity_count,
        links=len(all_links),
        train=len(corpus.seed_train),
        valid=len(corpus.links_valid),
        test=len(corpus.links_test),
    )
    return corpus
