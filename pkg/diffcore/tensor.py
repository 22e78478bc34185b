# diffcore/tensor.py
"""
Dense float64 tensors with a tape-based reverse pass.

A ComputationRecord owns the tape: every op that touches a recorded tensor
appends one node (output value, input handles, vector-Jacobian function).
Nodes are appended in evaluation order, so the tape is already topologically
sorted and backward walks it once in reverse.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, Sequence, float, int]
# grad_out -> one gradient per input (None where the input is a constant)
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Operand shapes an op cannot combine (no broadcasting)."""

    def __init__(self, op: str, *shapes: Tuple[int, ...], detail: str = "") -> None:
        shown = ", ".join(str(tuple(s)) for s in shapes)
        msg = f"{op}: incompatible shapes {shown}"
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.op = op
        self.shapes = shapes


class GradientError(RuntimeError):
    """backward on a non-scalar, or tensors from two different records mixed."""


@dataclass
class _Node:
    value: np.ndarray
    inputs: Tuple[Optional[int], ...]
    vjp: Optional[VJP]
    op: str


class ComputationRecord:
    """One forward pass worth of nodes. Confined to a single thread."""

    def __init__(self) -> None:
        self._nodes: List[_Node] = []
        self._params: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def param(self, name: str, value: ArrayLike) -> "DiffTensor":
        """Register a trainable leaf under `name`; the value is copied."""
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice in one record")
        arr = np.array(value, dtype=np.float64, copy=True)
        handle = self._append(_Node(arr, (), None, f"param:{name}"))
        self._params[name] = handle
        return DiffTensor(arr, self, handle)

    def constant(self, value: ArrayLike) -> "DiffTensor":
        return constant(value)

    @property
    def parameter_names(self) -> List[str]:
        return list(self._params)

    def _append(self, node: _Node) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def push(
        self,
        op: str,
        value: np.ndarray,
        inputs: Sequence["DiffTensor"],
        vjp: VJP,
    ) -> "DiffTensor":
        handle = self._append(_Node(value, tuple(t.node for t in inputs), vjp, op))
        return DiffTensor(value, self, handle)


class DiffTensor:
    """
    Values plus an optional handle into a ComputationRecord.
    Constants carry neither record nor handle and never receive gradients.
    """

    __slots__ = ("values", "record", "node")

    def __init__(
        self,
        values: np.ndarray,
        record: Optional[ComputationRecord] = None,
        node: Optional[int] = None,
    ) -> None:
        self.values = values
        self.record = record
        self.node = node

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def requires_grad(self) -> bool:
        return self.node is not None

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="not a scalar")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        kind = "const" if self.node is None else f"node={self.node}"
        return f"DiffTensor(shape={self.shape}, {kind})"

    # operator sugar; each maps onto one primitive in diffcore.ops
    def __add__(self, other: "DiffTensor") -> "DiffTensor":
        from diffcore import ops
        return ops.add(self, other)

    def __sub__(self, other: "DiffTensor") -> "DiffTensor":
        from diffcore import ops
        return ops.sub(self, other)

    def __mul__(self, other: Union["DiffTensor", float]) -> "DiffTensor":
        from diffcore import ops
        if isinstance(other, DiffTensor):
            return ops.mul(self, other)
        return ops.scalar_mul(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: "DiffTensor") -> "DiffTensor":
        from diffcore import ops
        return ops.div(self, other)

    def __matmul__(self, other: "DiffTensor") -> "DiffTensor":
        from diffcore import ops
        return ops.matmul(self, other)

    def __neg__(self) -> "DiffTensor":
        from diffcore import ops
        return ops.scalar_mul(self, -1.0)

    @property
    def T(self) -> "DiffTensor":
        from diffcore import ops
        return ops.transpose(self)


def constant(value: ArrayLike) -> DiffTensor:
    return DiffTensor(np.array(value, dtype=np.float64))


def record_of(*tensors: DiffTensor) -> Optional[ComputationRecord]:
    """The single record shared by the non-constant operands (None if all constant)."""
    rec: Optional[ComputationRecord] = None
    for t in tensors:
        if t.node is None:
            continue
        if rec is None:
            rec = t.record
        elif t.record is not rec:
            raise GradientError("operands belong to different computation records")
    return rec


def backward(scalar: DiffTensor, record: Optional[ComputationRecord] = None) -> Dict[str, np.ndarray]:
    """
    Gradients of `scalar` w.r.t. every parameter of its record.
    Parameters the scalar does not depend on get zeros. Pass `record` to get
    the zero map for a scalar that turned out constant.
    """
    if scalar.values.size != 1:
        raise GradientError(f"backward needs a scalar, got shape {scalar.shape}")
    rec = scalar.record or record
    if rec is None:
        return {}
    if record is not None and scalar.record is not None and record is not scalar.record:
        raise GradientError("scalar was not produced by the given record")
    nodes = rec._nodes
    if scalar.node is None:
        return {name: np.zeros_like(nodes[h].value) for name, h in rec._params.items()}
    grads: List[Optional[np.ndarray]] = [None] * (scalar.node + 1)
    grads[scalar.node] = np.ones_like(nodes[scalar.node].value)

    for handle in range(scalar.node, -1, -1):
        g = grads[handle]
        node = nodes[handle]
        if g is None or node.vjp is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if inp is None or gi is None:
                continue
            grads[inp] = gi if grads[inp] is None else grads[inp] + gi

    out: Dict[str, np.ndarray] = {}
    for name, handle in rec._params.items():
        g = grads[handle] if handle < len(grads) else None
        out[name] = np.zeros_like(nodes[handle].value) if g is None else g
    return out


__all__ = [
    "ShapeError",
    "GradientError",
    "ComputationRecord",
    "DiffTensor",
    "constant",
    "record_of",
    "backward",
]
