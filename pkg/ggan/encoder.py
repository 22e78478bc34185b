# ggan/encoder.py
"""
Gated graph-attention encoder.

Per layer and per KG: masked attention over each entity's neighborhood
(self-loop included), then attention against a shared set of learnable
proxies standing in for the other KG, then a sigmoid gate mixing the two.
The final table is [input | layer-1 | ... | layer-depth], rows unit-norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from config.models import EncoderConfig
from diffcore import ops
from diffcore.checkpoint import CheckpointFormatError, read_tensors, write_sidecar, write_tensors
from diffcore.optim import xavier_uniform
from diffcore.tensor import ComputationRecord, DiffTensor, ShapeError
from kg.graph import KnowledgeGraph

log = structlog.get_logger(__name__)

Mode = Literal["train", "eval"]


# -- parameter naming -----------------------------------------------------

def w1_name(layer: int, head: int) -> str:
    return f"layer{layer}.head{head}.W1"


def attn_name(layer: int, head: int) -> str:
    return f"layer{layer}.head{head}.a"


def parameter_shapes(cfg: EncoderConfig, n1: int, n2: int) -> Dict[str, Tuple[int, ...]]:
    d = cfg.hidden_dim
    shapes: Dict[str, Tuple[int, ...]] = {"emb1": (n1, d), "emb2": (n2, d)}
    for layer in range(cfg.depth):
        for head in range(cfg.heads):
            shapes[w1_name(layer, head)] = (d, d)
            shapes[attn_name(layer, head)] = (2 * d, 1)
    shapes.update({
        "inter.proxies": (cfg.proxy_count, d),
        "inter.Wf": (d, d),
        "inter.bf": (1, d),
        "gate.W2": (d, d),
        "gate.b2": (1, d),
        "gate.Wg": (d, d),
        "gate.bg": (1, d),
    })
    return shapes


@dataclass
class EncoderState:
    """All trainable arrays by name, plus the config that fixes their shapes."""

    config: EncoderConfig
    params: Dict[str, np.ndarray]
    entity_counts: Tuple[int, int]

    @classmethod
    def initialize(cls, cfg: EncoderConfig, n1: int, n2: int, rng: np.random.Generator) -> "EncoderState":
        params: Dict[str, np.ndarray] = {}
        for name, shape in parameter_shapes(cfg, n1, n2).items():
            if name.endswith((".bf", ".b2", ".bg")):
                params[name] = np.zeros(shape)
            else:
                params[name] = xavier_uniform(shape, rng)
        return cls(config=cfg, params=params, entity_counts=(n1, n2))

    def copy(self) -> "EncoderState":
        return EncoderState(self.config, {k: v.copy() for k, v in self.params.items()}, self.entity_counts)

    def register(self, record: ComputationRecord) -> Dict[str, DiffTensor]:
        return {name: record.param(name, value) for name, value in self.params.items()}

    @property
    def output_dim(self) -> int:
        return self.config.hidden_dim * (self.config.depth + 1)

    def save(self, path: Union[str, Path], meta: Optional[Mapping] = None) -> Path:
        p = write_tensors(path, self.params)
        if meta is not None:
            write_sidecar(p, meta)
        return p

    @classmethod
    def load(cls, path: Union[str, Path], cfg: EncoderConfig) -> "EncoderState":
        tensors = read_tensors(path)
        for side in ("emb1", "emb2"):
            if side not in tensors:
                raise CheckpointFormatError(f"{path}: missing {side}")
        n1, n2 = tensors["emb1"].shape[0], tensors["emb2"].shape[0]
        expected = parameter_shapes(cfg, n1, n2)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise CheckpointFormatError(f"{path}: parameter names differ (missing={missing}, unexpected={extra})")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise CheckpointFormatError(f"{path}: {name} has shape {tensors[name].shape}, expected {shape}")
        return cls(config=cfg, params=dict(tensors), entity_counts=(n1, n2))


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Row i is entity i of one KG."""

    vectors: np.ndarray
    labels: Optional[Tuple[str, ...]] = field(default=None)

    def __post_init__(self) -> None:
        if self.labels is not None and len(self.labels) != len(self.vectors):
            raise ValueError("labels length must equal the row count")

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def export(self, path: Union[str, Path], name: str = "embeddings") -> Tuple[Path, Path]:
        """Tensor record file plus `<path>.ids.tsv` (row -> label)."""
        p = write_tensors(path, {name: self.vectors})
        ids = p.with_name(p.name + ".ids.tsv")
        labels = self.labels or tuple(str(i) for i in range(len(self)))
        ids.write_text("".join(f"{i}\t{u}\n" for i, u in enumerate(labels)), encoding="utf-8")
        return p, ids


# -- layers ---------------------------------------------------------------

def _edge_scores(h: DiffTensor, W1: DiffTensor, a: DiffTensor, src, dst, slope: float):
    wh = ops.matmul(h, W1)
    pair = ops.concat([ops.gather_rows(wh, src), ops.gather_rows(wh, dst)], axis="cols")
    return wh, ops.leaky_relu(ops.matmul(pair, a), slope)


def intra_attention_layer(
    h: DiffTensor,
    kg: KnowledgeGraph,
    heads: Sequence[Tuple[DiffTensor, DiffTensor]],
    slope: float,
) -> DiffTensor:
    """
    tanh(sum_j alpha_ij W1 h_j) over N(i) plus i, alpha a softmax of
    leaky_relu(a . [W1 h_i | W1 h_j]). Several heads are averaged.
    """
    n = kg.entity_count
    if h.shape[0] != n:
        raise ShapeError("intra_attention_layer", h.shape, (n,), detail="row count must equal entity_count")
    src, dst = kg.attention_edges
    outs: List[DiffTensor] = []
    for W1, a in heads:
        wh, scores = _edge_scores(h, W1, a, src, dst, slope)
        alpha = ops.segment_softmax(scores, src, n)
        msg = ops.mul(ops.tile_cols(alpha, wh.shape[1]), ops.gather_rows(wh, dst))
        outs.append(ops.tanh(ops.scatter_add_rows(msg, src, n)))
    if len(outs) == 1:
        return outs[0]
    total = outs[0]
    for o in outs[1:]:
        total = ops.add(total, o)
    return ops.scalar_mul(total, 1.0 / len(outs))


def attention_weights(h: np.ndarray, kg: KnowledgeGraph, W1: np.ndarray, a: np.ndarray, slope: float) -> np.ndarray:
    """alpha per attention edge (aligned with kg.attention_edges), for inspection."""
    src, dst = kg.attention_edges
    _, scores = _edge_scores(ops.constant(h), ops.constant(W1), ops.constant(a), src, dst, slope)
    return ops.segment_softmax(scores, src, kg.entity_count).values[:, 0]


def _transformed_proxies(proxies: DiffTensor, Wf: DiffTensor, bf: DiffTensor) -> DiffTensor:
    return ops.add(ops.matmul(proxies, Wf), ops.tile_rows(bf, proxies.shape[0]))


def _proxy_delta(h: DiffTensor, fp: DiffTensor) -> DiffTensor:
    theta = ops.row_softmax(ops.matmul(h, ops.transpose(fp)))
    return ops.sub(h, ops.matmul(theta, fp))


def inter_attention(
    h1: DiffTensor,
    h2: DiffTensor,
    proxies: DiffTensor,
    Wf: DiffTensor,
    bf: DiffTensor,
) -> Tuple[DiffTensor, DiffTensor]:
    """sum_p theta_ip (h_i - f(proxy_p)); theta = softmax_p(h_i . f(proxy_p)). Proxies shared by both KGs."""
    if h1.shape[1] != h2.shape[1] or h1.shape[1] != Wf.shape[1]:
        raise ShapeError("inter_attention", h1.shape, h2.shape, Wf.shape)
    fp = _transformed_proxies(proxies, Wf, bf)
    return _proxy_delta(h1, fp), _proxy_delta(h2, fp)


def gate_fuse(
    h: DiffTensor,
    delta: DiffTensor,
    W2: DiffTensor,
    b2: DiffTensor,
    Wg: DiffTensor,
    bg: DiffTensor,
) -> DiffTensor:
    """beta*h + (1-beta)*delta with beta = sigmoid(Wg sigmoid(W2 delta + b2) + bg)."""
    if h.shape != delta.shape:
        raise ShapeError("gate_fuse", h.shape, delta.shape)
    n = h.shape[0]
    matching = ops.sigmoid(ops.add(ops.matmul(delta, W2), ops.tile_rows(b2, n)))
    beta = ops.sigmoid(ops.add(ops.matmul(matching, Wg), ops.tile_rows(bg, n)))
    keep_delta = ops.add_scalar(ops.scalar_mul(beta, -1.0), 1.0)
    return ops.add(ops.mul(beta, h), ops.mul(keep_delta, delta))


# -- full encoder ---------------------------------------------------------

def encode_tensors(
    p: Mapping[str, DiffTensor],
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    cfg: EncoderConfig,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[DiffTensor, DiffTensor]:
    """Differentiable forward pass over registered parameters."""
    train = mode == "train"
    if train and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    h1 = ops.dropout(p["emb1"], cfg.dropout, rng, train=train)
    h2 = ops.dropout(p["emb2"], cfg.dropout, rng, train=train)
    outs1, outs2 = [h1], [h2]
    gate = (p["gate.W2"], p["gate.b2"], p["gate.Wg"], p["gate.bg"])
    for layer in range(cfg.depth):
        heads = [(p[w1_name(layer, k)], p[attn_name(layer, k)]) for k in range(cfg.heads)]
        g1 = intra_attention_layer(h1, kg1, heads, cfg.leaky_relu_slope)
        g2 = intra_attention_layer(h2, kg2, heads, cfg.leaky_relu_slope)
        d1, d2 = inter_attention(g1, g2, p["inter.proxies"], p["inter.Wf"], p["inter.bf"])
        h1, h2 = gate_fuse(g1, d1, *gate), gate_fuse(g2, d2, *gate)
        outs1.append(h1)
        outs2.append(h2)
    z1 = ops.l2_normalize_rows(ops.concat(outs1, axis="cols"))
    z2 = ops.l2_normalize_rows(ops.concat(outs2, axis="cols"))
    return z1, z2


def encode(
    graphs,
    state: EncoderState,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[EmbeddingTable, EmbeddingTable]:
    """`graphs` is anything with kg1/kg2 (an AlignmentCorpus or its TrainingView)."""
    kg1, kg2 = graphs.kg1, graphs.kg2
    if state.entity_counts != (kg1.entity_count, kg2.entity_count):
        raise ShapeError(
            "encode", state.entity_counts, (kg1.entity_count, kg2.entity_count),
            detail="encoder state was built for different entity counts",
        )
    rec = ComputationRecord()
    z1, z2 = encode_tensors(state.register(rec), kg1, kg2, state.config, mode, rng)
    return EmbeddingTable(z1.values, kg1.entity_labels), EmbeddingTable(z2.values, kg2.entity_labels)


__all__ = [
    "Mode",
    "EncoderState",
    "EmbeddingTable",
    "parameter_shapes",
    "intra_attention_layer",
    "attention_weights",
    "inter_attention",
    "gate_fuse",
    "encode_tensors",
    "encode",
]
