"""
Reverse-mode automatic differentiation over dense float64 arrays.

Operations are recorded on a :class:`Tape` as they run. :func:`backward` walks
the tape in reverse and applies each primitive's vector-Jacobian product. Every
VJP is itself written with the primitives of this module, so running the
reverse pass with ``create_graph=True`` records the gradient computation on the
same tape and it can be differentiated again. The gradient penalty of WGAN-GP,
a function of input gradients, is trained this way.

Only bias-add broadcasts; all other binary operations need equal shapes.

.. moduleauthor:: Team Indigo

Classes
-------
Tensor
    Handle to a value, recorded on a tape or detached.
Node
    One recorded operation.
Tape
    Append-only operation log.

Functions
---------
backward
    Reverse accumulation from a scalar root to every leaf.
grad
    Gradients of a scalar root with respect to chosen tensors.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from specfid.config import LEAKY_SLOPE, LOG_EPS, SQRT_EPS
from specfid.errors import NumericError

logger = logging.getLogger(__name__)

PRIMITIVES: FrozenSet[str] = frozenset(
    {
        "add",
        "sub",
        "mul",
        "matmul",
        "affine",
        "bias_add",
        "relu",
        "leaky_relu",
        "tanh",
        "sigmoid",
        "square",
        "sqrt_eps",
        "log_eps",
        "sum",
        "mean",
        "transpose",
        "reshape",
        "expand",
        "reciprocal",
        "clamp_min",
    }
)

# Primitives each backward rule emits. Checked against PRIMITIVES by the tests.
VJP_EMITS: Dict[str, FrozenSet[str]] = {
    "add": frozenset(),
    "sub": frozenset({"mul"}),
    "mul": frozenset({"mul"}),
    "matmul": frozenset({"matmul", "transpose"}),
    "affine": frozenset({"matmul", "transpose", "sum"}),
    "bias_add": frozenset({"sum"}),
    "relu": frozenset({"mul"}),
    "leaky_relu": frozenset({"mul"}),
    "tanh": frozenset({"mul", "sub", "square"}),
    "sigmoid": frozenset({"mul", "sub"}),
    "square": frozenset({"mul"}),
    "sqrt_eps": frozenset({"mul", "reciprocal"}),
    "log_eps": frozenset({"mul", "reciprocal", "clamp_min"}),
    "sum": frozenset({"expand"}),
    "mean": frozenset({"expand", "mul"}),
    "transpose": frozenset({"transpose"}),
    "reshape": frozenset({"reshape"}),
    "expand": frozenset({"sum"}),
    "reciprocal": frozenset({"mul", "square"}),
    "clamp_min": frozenset({"mul"}),
}

Operand = Union["Tensor", float, int, np.ndarray]


class Tensor:
    """Value handle. ``index`` is the producing node on ``tape``, or None when detached."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", value: np.ndarray, index: Optional[int] = None):
        self.tape = tape
        self.value = value
        self.index = index

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the value."""
        return self.value.ravel()

    @property
    def recorded(self) -> bool:
        return self.index is not None

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, index={self.index})"


@dataclass
class Node:
    """A recorded operation: kind, input handles, saved attributes and its output."""

    op: str
    inputs: Tuple[Tensor, ...]
    out: Tensor
    saved: Dict[str, object] = field(default_factory=dict)
    grad: Optional[np.ndarray] = None


class Tape:
    """Append-only log of operations; inputs always precede the nodes using them."""

    def __init__(self):
        self.nodes: List[Node] = []
        self._recording = True

    def leaf(self, value: np.ndarray) -> Tensor:
        """Record a differentiable input (parameters, images needing gradients)."""
        array = np.array(value, dtype=np.float64)
        _check_finite("leaf", array)
        out = Tensor(self, array, len(self.nodes))
        self.nodes.append(Node("leaf", (), out))
        return out

    def constant(self, value: Union[np.ndarray, float]) -> Tensor:
        """Wrap a value that gradients never flow into."""
        return Tensor(self, np.asarray(value, dtype=np.float64))

    @contextmanager
    def recording(self, enabled: bool) -> Iterator["Tape"]:
        previous = self._recording
        self._recording = enabled
        try:
            yield self
        finally:
            self._recording = previous

    def record(self, op: str, inputs: Sequence[Tensor], value: np.ndarray, **saved) -> Tensor:
        value = np.asarray(value, dtype=np.float64)
        _check_finite(op, value)
        if not (self._recording and any(t.recorded for t in inputs)):
            return Tensor(self, value)
        out = Tensor(self, value, len(self.nodes))
        self.nodes.append(Node(op, tuple(inputs), out, dict(saved)))
        return out


def _check_finite(op: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")


def _lift(x: Operand, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    array = np.asarray(x, dtype=np.float64)
    if array.ndim == 0:
        array = np.full(like.shape, float(array))
    return like.tape.constant(array)


def _pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        b = _lift(b, a)
    elif isinstance(b, Tensor):
        a = _lift(a, b)
    else:
        raise TypeError("At least one operand must be a Tensor")
    if a.tape is not b.tape:
        raise ValueError("Operands belong to different tapes")
    return a, b


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _same_shape("add", a, b)
    return a.tape.record("add", (a, b), a.value + b.value)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _same_shape("sub", a, b)
    return a.tape.record("sub", (a, b), a.value - b.value)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    _same_shape("mul", a, b)
    return a.tape.record("mul", (a, b), a.value * b.value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    return a.tape.record("matmul", (a, b), a.value @ b.value)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ValueError(f"bias_add: shape mismatch {x.shape} + {b.shape}")
    return x.tape.record("bias_add", (x, b), x.value + b.value)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for a (batch, in) input, (in, out) weights and (out,) bias."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"affine: shape mismatch {x.shape} @ {w.shape}")
    if b.value.ndim != 1 or b.shape[0] != w.shape[1]:
        raise ValueError(f"affine: bias shape {b.shape} does not match {w.shape}")
    return x.tape.record("affine", (x, w, b), x.value @ w.value + b.value)


def relu(x: Tensor) -> Tensor:
    return x.tape.record("relu", (x,), np.maximum(x.value, 0.0))


def leaky_relu(x: Tensor) -> Tensor:
    return x.tape.record("leaky_relu", (x,), np.where(x.value > 0, x.value, LEAKY_SLOPE * x.value))


def tanh(x: Tensor) -> Tensor:
    return x.tape.record("tanh", (x,), np.tanh(x.value))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form stays finite for large |x|
    return x.tape.record("sigmoid", (x,), 0.5 * (1.0 + np.tanh(0.5 * x.value)))


def square(x: Tensor) -> Tensor:
    return x.tape.record("square", (x,), x.value * x.value)


def sqrt_eps(x: Tensor) -> Tensor:
    """sqrt(x + 1e-12)."""
    return x.tape.record("sqrt_eps", (x,), np.sqrt(x.value + SQRT_EPS))


def log_eps(x: Tensor) -> Tensor:
    """log(max(x, 1e-12))."""
    return x.tape.record("log_eps", (x,), np.log(np.maximum(x.value, LOG_EPS)))


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # pylint: disable=redefined-builtin
    return x.tape.record("sum", (x,), np.sum(x.value, axis=axis), axis=axis)


def mean(x: Tensor) -> Tensor:
    return x.tape.record("mean", (x,), np.mean(x.value))


def transpose(x: Tensor) -> Tensor:
    if x.value.ndim != 2:
        raise ValueError(f"transpose needs a matrix, got shape {x.shape}")
    return x.tape.record("transpose", (x,), x.value.T.copy())


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return x.tape.record("reshape", (x,), x.value.reshape(shape), shape=tuple(shape))


def expand(x: Tensor, shape: Tuple[int, ...], axis: Optional[int] = None) -> Tensor:
    """Inverse of :func:`sum`: repeat x along ``axis`` (or everywhere) to ``shape``."""
    value = x.value if axis is None else np.expand_dims(x.value, axis)
    value = np.broadcast_to(value, shape).copy()
    return x.tape.record("expand", (x,), value, axis=axis)


def reciprocal(x: Tensor) -> Tensor:
    return x.tape.record("reciprocal", (x,), 1.0 / x.value)


def clamp_min(x: Tensor, floor: float) -> Tensor:
    return x.tape.record("clamp_min", (x,), np.maximum(x.value, floor), floor=floor)


def _const(like: Tensor, value: Union[np.ndarray, float]) -> Tensor:
    return _lift(value, like)


def _vjp_add(node: Node, g: Tensor):
    return g, g


def _vjp_sub(node: Node, g: Tensor):
    return g, mul(g, -1.0)


def _vjp_mul(node: Node, g: Tensor):
    a, b = node.inputs
    return mul(g, b), mul(g, a)


def _vjp_matmul(node: Node, g: Tensor):
    a, b = node.inputs
    return matmul(g, transpose(b)), matmul(transpose(a), g)


def _vjp_affine(node: Node, g: Tensor):
    x, w, _ = node.inputs
    return matmul(g, transpose(w)), matmul(transpose(x), g), sum(g, axis=0)


def _vjp_bias_add(node: Node, g: Tensor):
    return g, sum(g, axis=0)


def _vjp_relu(node: Node, g: Tensor):
    (x,) = node.inputs
    return (mul(g, _const(g, (x.value > 0).astype(np.float64))),)


def _vjp_leaky_relu(node: Node, g: Tensor):
    (x,) = node.inputs
    return (mul(g, _const(g, np.where(x.value > 0, 1.0, LEAKY_SLOPE))),)


def _vjp_tanh(node: Node, g: Tensor):
    y = node.out
    return (mul(g, sub(1.0, square(y))),)


def _vjp_sigmoid(node: Node, g: Tensor):
    y = node.out
    return (mul(g, mul(y, sub(1.0, y))),)


def _vjp_square(node: Node, g: Tensor):
    (x,) = node.inputs
    return (mul(g, mul(x, 2.0)),)


def _vjp_sqrt_eps(node: Node, g: Tensor):
    return (mul(g, mul(reciprocal(node.out), 0.5)),)


def _vjp_log_eps(node: Node, g: Tensor):
    (x,) = node.inputs
    live = _const(g, (x.value > LOG_EPS).astype(np.float64))
    return (mul(g, mul(live, reciprocal(clamp_min(x, LOG_EPS)))),)


def _vjp_sum(node: Node, g: Tensor):
    (x,) = node.inputs
    return (expand(g, x.shape, node.saved["axis"]),)


def _vjp_mean(node: Node, g: Tensor):
    (x,) = node.inputs
    return (mul(expand(g, x.shape), 1.0 / x.value.size),)


def _vjp_transpose(node: Node, g: Tensor):
    return (transpose(g),)


def _vjp_reshape(node: Node, g: Tensor):
    (x,) = node.inputs
    return (reshape(g, x.shape),)


def _vjp_expand(node: Node, g: Tensor):
    axis = node.saved["axis"]
    return (sum(g, axis=axis),)


def _vjp_reciprocal(node: Node, g: Tensor):
    return (mul(g, mul(square(node.out), -1.0)),)


def _vjp_clamp_min(node: Node, g: Tensor):
    (x,) = node.inputs
    return (mul(g, _const(g, (x.value > node.saved["floor"]).astype(np.float64))),)


_VJP: Dict[str, Callable[[Node, Tensor], Tuple[Optional[Tensor], ...]]] = {
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "matmul": _vjp_matmul,
    "affine": _vjp_affine,
    "bias_add": _vjp_bias_add,
    "relu": _vjp_relu,
    "leaky_relu": _vjp_leaky_relu,
    "tanh": _vjp_tanh,
    "sigmoid": _vjp_sigmoid,
    "square": _vjp_square,
    "sqrt_eps": _vjp_sqrt_eps,
    "log_eps": _vjp_log_eps,
    "sum": _vjp_sum,
    "mean": _vjp_mean,
    "transpose": _vjp_transpose,
    "reshape": _vjp_reshape,
    "expand": _vjp_expand,
    "reciprocal": _vjp_reciprocal,
    "clamp_min": _vjp_clamp_min,
}


def _accumulate(root: Tensor, create_graph: bool, keep: FrozenSet[int]) -> Dict[int, Tensor]:
    if not root.recorded:
        raise ValueError("backward root is not recorded on a tape")
    if root.value.size != 1:
        raise ValueError(f"backward root must be a scalar, got shape {root.shape}")
    tape = root.tape
    grads: Dict[int, Tensor] = {root.index: tape.constant(np.ones_like(root.value))}
    kept: Dict[int, Tensor] = {}
    with tape.recording(create_graph):
        for node in reversed(tape.nodes[: root.index + 1]):
            index = node.out.index
            g = grads.pop(index, None)
            if g is None:
                continue
            if node.op == "leaf" or index in keep:
                kept[index] = g
            if node.op == "leaf":
                continue
            for inp, inp_grad in zip(node.inputs, _VJP[node.op](node, g)):
                if inp_grad is None or not inp.recorded:
                    continue
                previous = grads.get(inp.index)
                grads[inp.index] = inp_grad if previous is None else add(previous, inp_grad)
    return kept


def backward(root: Tensor, create_graph: bool = False) -> Dict[int, Tensor]:
    """Reverse accumulation from a scalar root.

    After the call every leaf node carries its gradient in ``node.grad``.

    :param root: Scalar tensor recorded on a tape
    :type root: Tensor
    :param create_graph: Record the reverse pass on the tape so its results can be
        differentiated again
    :type create_graph: bool
    :return: Gradient tensor per leaf node index; unreachable leaves get zeros
    :rtype: dict[int, Tensor]
    :raises ValueError: If root is not a recorded scalar
    """
    kept = _accumulate(root, create_graph, frozenset())
    grads: Dict[int, Tensor] = {}
    for node in root.tape.nodes[: root.index + 1]:
        if node.op != "leaf":
            continue
        index = node.out.index
        g = kept.get(index) or root.tape.constant(np.zeros_like(node.out.value))
        node.grad = g.value
        grads[index] = g
    return grads


def grad(root: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> List[Tensor]:
    """Gradients of a scalar root with respect to each tensor in ``wrt``.

    :param root: Scalar tensor recorded on a tape
    :type root: Tensor
    :param wrt: Recorded tensors, leaves or intermediates
    :type wrt: list[Tensor]
    :param create_graph: Record the reverse pass for higher-order derivatives
    :type create_graph: bool
    :return: One gradient per entry of ``wrt``, zeros where unreachable
    :rtype: list[Tensor]
    """
    kept = _accumulate(root, create_graph, frozenset(t.index for t in wrt if t.recorded))
    return [kept.get(t.index) or root.tape.constant(np.zeros_like(t.value)) for t in wrt]
