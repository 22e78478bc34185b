# diffcore/ops.py
"""
Primitive ops over DiffTensor. Shapes must match exactly; anything that would
broadcast elsewhere is spelled out (tile_rows / tile_cols go through matmul
with constant ones).

Every op computes its value with numpy, and when any operand is recorded it
pushes one node whose vjp maps the output gradient to input gradients.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from diffcore.tensor import DiffTensor, ShapeError, constant, record_of

LOG_FLOOR = 1e-30
Axis = Optional[int]


def _emit(op: str, value: np.ndarray, inputs: Sequence[DiffTensor], vjp) -> DiffTensor:
    rec = record_of(*inputs)
    if rec is None:
        return DiffTensor(value)
    return rec.push(op, value, inputs, vjp)


def _need(t: DiffTensor, g: np.ndarray) -> Optional[np.ndarray]:
    return g if t.node is not None else None


def _same_shape(op: str, a: DiffTensor, b: DiffTensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _matrix(op: str, *ts: DiffTensor) -> None:
    for t in ts:
        if t.values.ndim != 2:
            raise ShapeError(op, t.shape, detail="expected a 2-d matrix")


# -- linear algebra -------------------------------------------------------

def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _matrix("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.values, b.values
    return _emit(
        "matmul", av @ bv, (a, b),
        lambda g: (_need(a, g @ bv.T), _need(b, av.T @ g)),
    )


def transpose(x: DiffTensor) -> DiffTensor:
    _matrix("transpose", x)
    return _emit("transpose", x.values.T.copy(), (x,), lambda g: (g.T,))


# -- elementwise arithmetic -----------------------------------------------

def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _same_shape("add", a, b)
    return _emit("add", a.values + b.values, (a, b), lambda g: (_need(a, g), _need(b, g)))


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.values - b.values, (a, b), lambda g: (_need(a, g), _need(b, -g)))


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _same_shape("mul", a, b)
    av, bv = a.values, b.values
    return _emit("mul", av * bv, (a, b), lambda g: (_need(a, g * bv), _need(b, g * av)))


def div(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    _same_shape("div", a, b)
    av, bv = a.values, b.values
    out = av / bv
    return _emit("div", out, (a, b), lambda g: (_need(a, g / bv), _need(b, -g * out / bv)))


def scalar_mul(x: DiffTensor, c: float) -> DiffTensor:
    c = float(c)
    return _emit("scalar_mul", x.values * c, (x,), lambda g: (g * c,))


def add_scalar(x: DiffTensor, c: float) -> DiffTensor:
    return _emit("add_scalar", x.values + float(c), (x,), lambda g: (g,))


# -- shape plumbing -------------------------------------------------------

def concat(tensors: Sequence[DiffTensor], axis: Union[int, str] = 1) -> DiffTensor:
    """axis 0 / "rows" stacks vertically, axis 1 / "cols" side by side."""
    axis = {"rows": 0, "cols": 1}.get(axis, axis)  # type: ignore[arg-type]
    if axis not in (0, 1):
        raise ValueError(f"concat: axis must be 0/'rows' or 1/'cols', got {axis!r}")
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: no tensors")
    _matrix("concat", *tensors)
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) != 1:
        raise ShapeError("concat", *(t.shape for t in tensors))
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    value = np.concatenate([t.values for t in tensors], axis=axis)

    def vjp(g: np.ndarray):
        parts = np.split(g, cuts, axis=axis)
        return tuple(_need(t, p) for t, p in zip(tensors, parts))

    return _emit("concat", value, tensors, vjp)


def gather_rows(x: DiffTensor, index: Sequence[int]) -> DiffTensor:
    _matrix("gather_rows", x)
    idx = np.asarray(index, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError("gather_rows", x.shape, detail=f"index out of range [0, {x.shape[0]})")
    n = x.shape[0]

    def vjp(g: np.ndarray):
        out = np.zeros((n, g.shape[1]), dtype=np.float64)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", x.values[idx], (x,), vjp)


def scatter_add_rows(x: DiffTensor, index: Sequence[int], n_rows: int) -> DiffTensor:
    """out[index[k]] += x[k]; rows never targeted stay zero."""
    _matrix("scatter_add_rows", x)
    idx = np.asarray(index, dtype=np.int64)
    if len(idx) != x.shape[0]:
        raise ShapeError("scatter_add_rows", x.shape, (len(idx),), detail="one index per row")
    if len(idx) and (idx.min() < 0 or idx.max() >= n_rows):
        raise ShapeError("scatter_add_rows", x.shape, detail=f"index out of range [0, {n_rows})")
    out = np.zeros((n_rows, x.shape[1]), dtype=np.float64)
    np.add.at(out, idx, x.values)
    return _emit("scatter_add_rows", out, (x,), lambda g: (g[idx],))


def ones(rows: int, cols: int) -> DiffTensor:
    return constant(np.ones((rows, cols)))


def tile_rows(x: DiffTensor, n: int) -> DiffTensor:
    """(1, d) -> (n, d) by repeating the row."""
    if x.values.ndim != 2 or x.shape[0] != 1:
        raise ShapeError("tile_rows", x.shape, detail="expected one row")
    return matmul(ones(n, 1), x)


def tile_cols(x: DiffTensor, d: int) -> DiffTensor:
    """(n, 1) -> (n, d) by repeating the column."""
    if x.values.ndim != 2 or x.shape[1] != 1:
        raise ShapeError("tile_cols", x.shape, detail="expected one column")
    return matmul(x, ones(1, d))


# -- reductions -----------------------------------------------------------

def sum(x: DiffTensor, axis: Axis = None) -> DiffTensor:  # noqa: A001
    """axis None -> shape (); 0 -> (1, m); 1 -> (n, 1)."""
    shape = x.values.shape
    if axis is None:
        value = np.array(x.values.sum())
        return _emit("sum", value, (x,), lambda g: (np.full(shape, float(g)),))
    _matrix("sum", x)
    value = x.values.sum(axis=axis, keepdims=True)
    return _emit("sum", value, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: DiffTensor, axis: Axis = None) -> DiffTensor:
    count = x.values.size if axis is None else x.values.shape[axis]
    if count == 0:
        raise ShapeError("mean", x.shape, detail="empty reduction")
    return scalar_mul(sum(x, axis), 1.0 / count)


# -- nonlinearities -------------------------------------------------------

def exp(x: DiffTensor) -> DiffTensor:
    out = np.exp(x.values)
    return _emit("exp", out, (x,), lambda g: (g * out,))


def log(x: DiffTensor) -> DiffTensor:
    """Natural log with inputs clamped at LOG_FLOOR; no gradient below the floor."""
    xv = x.values
    safe = np.maximum(xv, LOG_FLOOR)
    live = xv > LOG_FLOOR
    return _emit("log", np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),))


def tanh(x: DiffTensor) -> DiffTensor:
    out = np.tanh(x.values)
    return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: DiffTensor) -> DiffTensor:
    xv = x.values
    out = np.where(xv >= 0, 1.0 / (1.0 + np.exp(-np.abs(xv))), np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(x: DiffTensor, slope: float = 0.2) -> DiffTensor:
    xv = x.values
    scale = np.where(xv > 0, 1.0, slope)
    return _emit("leaky_relu", xv * scale, (x,), lambda g: (g * scale,))


def clip(x: DiffTensor, lo: Optional[float] = None, hi: Optional[float] = None) -> DiffTensor:
    """Clamp values; gradient passes only where the input was inside [lo, hi]."""
    xv = x.values
    out = np.clip(xv, -np.inf if lo is None else lo, np.inf if hi is None else hi)
    inside = out == xv
    return _emit("clip", out, (x,), lambda g: (np.where(inside, g, 0.0),))


def row_softmax(x: DiffTensor) -> DiffTensor:
    _matrix("row_softmax", x)
    z = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _emit("row_softmax", out, (x,), vjp)


def masked_row_softmax(x: DiffTensor, mask: np.ndarray) -> DiffTensor:
    """Softmax over entries where mask is True; the rest get weight 0 and gradient 0."""
    _matrix("masked_row_softmax", x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.values.shape:
        raise ShapeError("masked_row_softmax", x.shape, mask.shape)
    if not mask.any(axis=1).all():
        raise ValueError("masked_row_softmax: every row needs at least one unmasked entry")
    z = np.where(mask, x.values, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _emit("masked_row_softmax", out, (x,), vjp)


def segment_softmax(scores: DiffTensor, segments: Sequence[int], n_segments: int) -> DiffTensor:
    """
    Softmax of a column of scores within each segment id (edge lists grouped
    by source entity). Built from exp / scatter_add_rows / gather_rows / div;
    the per-segment max shift is a constant and leaves the gradient unchanged.
    """
    if scores.values.ndim != 2 or scores.shape[1] != 1:
        raise ShapeError("segment_softmax", scores.shape, detail="expected one column")
    seg = np.asarray(segments, dtype=np.int64)
    shift = np.full(n_segments, -np.inf)
    np.maximum.at(shift, seg, scores.values[:, 0])
    shifted = sub(scores, constant(shift[seg].reshape(-1, 1)))
    e = exp(shifted)
    denom = scatter_add_rows(e, seg, n_segments)
    return div(e, gather_rows(denom, seg))


def l2_normalize_rows(x: DiffTensor, eps: float = 1e-12) -> DiffTensor:
    _matrix("l2_normalize_rows", x)
    norms = np.maximum(np.linalg.norm(x.values, axis=1, keepdims=True), eps)
    out = x.values / norms

    def vjp(g: np.ndarray):
        return ((g - out * (g * out).sum(axis=1, keepdims=True)) / norms,)

    return _emit("l2_normalize_rows", out, (x,), vjp)


def dropout(x: DiffTensor, rate: float, rng: np.random.Generator, train: bool = True) -> DiffTensor:
    """Inverted dropout: kept entries are scaled by 1/(1-rate) so eval needs no rescale."""
    if not train or rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.values.shape) >= rate) / (1.0 - rate)
    return _emit("dropout", x.values * keep, (x,), lambda g: (g * keep,))


__all__ = [
    "LOG_FLOOR",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "div",
    "scalar_mul",
    "add_scalar",
    "concat",
    "gather_rows",
    "scatter_add_rows",
    "constant",
    "ones",
    "tile_rows",
    "tile_cols",
    "sum",
    "mean",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "leaky_relu",
    "clip",
    "row_softmax",
    "masked_row_softmax",
    "segment_softmax",
    "l2_normalize_rows",
    "dropout",
]
