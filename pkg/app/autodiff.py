"""Reverse-mode automatic differentiation on an append-only tape.

Every differentiable computation in the package (forward kinematics, skinning,
projection, rasterization, losses) records onto a :class:`Tape`. Node values
are numpy arrays; a scalar is a 0-d array. Elementwise operations cache their
local partials at record time, and hot paths register a single fused node with
a hand-written vector-Jacobian product via :meth:`Tape.fused`.

Usage:
    tape = Tape()
    x = tape.leaf(3.0)
    y = tape.apply("mul", x, x)
    grads = tape.backward(y)
    grads[x]  # 6.0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .exceptions import AutodiffDomainError

Array = np.ndarray
Vjp = Callable[[Array], Sequence[Optional[Array]]]
Forward = Callable[..., Tuple[Array, Optional[Vjp]]]
Operand = Union["VarId", float, int, Array]


@dataclass(frozen=True)
class VarId:
    """Handle to one recorded value; ``index`` is its position on the tape."""

    index: int
    tape: "Tape" = field(compare=False, repr=False)

    # numpy defers to the reflected operators below instead of broadcasting
    __array_ufunc__ = None

    @property
    def value(self):
        return self.tape.value(self)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.tape.array(self).shape

    def __add__(self, other: Operand) -> "VarId":
        return self.tape.apply("add", self, other)

    def __radd__(self, other: Operand) -> "VarId":
        return self.tape.apply("add", other, self)

    def __sub__(self, other: Operand) -> "VarId":
        return self.tape.apply("sub", self, other)

    def __rsub__(self, other: Operand) -> "VarId":
        return self.tape.apply("sub", other, self)

    def __mul__(self, other: Operand) -> "VarId":
        return self.tape.apply("mul", self, other)

    def __rmul__(self, other: Operand) -> "VarId":
        return self.tape.apply("mul", other, self)

    def __truediv__(self, other: Operand) -> "VarId":
        return self.tape.apply("div", self, other)

    def __rtruediv__(self, other: Operand) -> "VarId":
        return self.tape.apply("div", other, self)

    def __neg__(self) -> "VarId":
        return self.tape.apply("neg", self)

    def __matmul__(self, other: Operand) -> "VarId":
        return self.tape.apply("matmul", self, other)

    def __getitem__(self, key) -> "VarId":
        return self.tape.apply("getitem", self, key=key)


@dataclass
class _Node:
    op: str
    inputs: Tuple[int, ...]
    vjp: Optional[Vjp]
    forward: Optional[Forward]


class GradientMap(dict):
    """Gradients keyed by :class:`VarId`; unreached variables read as zero."""

    def __init__(self, tape: "Tape"):
        super().__init__()
        self._tape = tape

    def __missing__(self, key: VarId):
        value = self._tape.array(key)
        return np.zeros_like(value) if value.ndim else 0.0


# ============= Elementwise and structural operations =============

def _unbroadcast(grad: Array, shape: Tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to an operand's shape."""
    grad = np.asarray(grad, dtype=float)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return np.broadcast_to(grad, shape).copy() if grad.shape != shape else grad


def _elementwise(value: Array, operands: Sequence[Array], partials: Sequence) -> Tuple[Array, Vjp]:
    shapes = [np.shape(a) for a in operands]

    def vjp(g: Array):
        return tuple(_unbroadcast(g * p, s) for p, s in zip(partials, shapes))

    return value, vjp


def _add(a, b):
    return _elementwise(a + b, (a, b), (1.0, 1.0))


def _sub(a, b):
    return _elementwise(a - b, (a, b), (1.0, -1.0))


def _mul(a, b):
    return _elementwise(a * b, (a, b), (b, a))


def _div(a, b):
    if np.any(b == 0.0):
        raise AutodiffDomainError("div", "division by exact zero")
    return _elementwise(a / b, (a, b), (1.0 / b, -a / (b * b)))


def _neg(a):
    return _elementwise(-a, (a,), (-1.0,))


def _sin(a):
    return _elementwise(np.sin(a), (a,), (np.cos(a),))


def _cos(a):
    return _elementwise(np.cos(a), (a,), (-np.sin(a),))


def _exp(a):
    value = np.exp(a)
    return _elementwise(value, (a,), (value,))


def _sqrt(a):
    if np.any(a < 0.0):
        raise AutodiffDomainError("sqrt", "square root of a negative value")
    if np.any(a == 0.0):
        raise AutodiffDomainError("sqrt", "square root at exact zero has no derivative")
    value = np.sqrt(a)
    return _elementwise(value, (a,), (0.5 / value,))


def _sigmoid(a):
    # expit switches to the exp(x)/(1+exp(x)) branch for negative inputs
    value = expit(a)
    return _elementwise(value, (a,), (value * (1.0 - value),))


def _min(a, b):
    take_first = (a <= b).astype(float)
    return _elementwise(np.minimum(a, b), (a, b), (take_first, 1.0 - take_first))


def _max(a, b):
    take_first = (a >= b).astype(float)
    return _elementwise(np.maximum(a, b), (a, b), (take_first, 1.0 - take_first))


def _relu(a):
    return _elementwise(np.maximum(a, 0.0), (a,), ((a > 0.0).astype(float),))


def _powi(a, n: int):
    n = int(n)
    partial = n * a ** (n - 1) if n != 0 else np.zeros_like(a)
    return _elementwise(a ** n, (a,), (partial,))


def _matmul(a, b):
    value = a @ b

    def vjp(g):
        b2 = b[..., None] if b.ndim == 1 else b
        g2 = g[..., None] if b.ndim == 1 else g
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g2
        if b.ndim == 1:
            gb = gb[..., 0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return value, vjp


def _sum(a, axis=None):
    value = np.sum(a, axis=axis)

    def vjp(g):
        g = np.asarray(g, dtype=float)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return value, vjp


def _getitem(a, key):
    value = np.array(a[key], dtype=float)

    def vjp(g):
        out = np.zeros_like(a)
        np.add.at(out, key, g)
        return (out,)

    return value, vjp


def _stack(*arrays, axis: int = 0):
    value = np.stack(arrays, axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(arrays)))

    return value, vjp


def _reshape(a, shape):
    value = np.reshape(a, shape)

    def vjp(g):
        return (np.reshape(g, a.shape),)

    return value, vjp


_OPS: Dict[str, Callable[..., Tuple[Array, Vjp]]] = {
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "div": _div,
    "neg": _neg,
    "sin": _sin,
    "cos": _cos,
    "exp": _exp,
    "sqrt": _sqrt,
    "sigmoid": _sigmoid,
    "min": _min,
    "max": _max,
    "relu": _relu,
    "powi": _powi,
    "matmul": _matmul,
    "sum": _sum,
    "getitem": _getitem,
    "stack": _stack,
    "reshape": _reshape,
}

OPS = tuple(_OPS)


class Tape:
    """Append-only record of a computation.

    A tape has a single writer. It may move between threads or processes but
    must never be mutated concurrently.
    """

    def __init__(self):
        self._nodes: List[_Node] = []
        self._values: List[Array] = []

    def __len__(self) -> int:
        return len(self._nodes)

    # ---- recording ----

    def _record(self, op: str, inputs: Tuple[int, ...], value: Array,
                vjp: Optional[Vjp], forward: Optional[Forward]) -> VarId:
        self._nodes.append(_Node(op, inputs, vjp, forward))
        self._values.append(np.asarray(value, dtype=float))
        return VarId(len(self._nodes) - 1, self)

    def leaf(self, value) -> VarId:
        """Record an input with a gradient slot."""
        return self._record("leaf", (), np.array(value, dtype=float), None, None)

    def constant(self, value) -> VarId:
        """Record an input that takes part in no gradient."""
        return self._record("const", (), np.array(value, dtype=float), None, None)

    def _lift(self, operand: Operand) -> VarId:
        if isinstance(operand, VarId):
            if operand.tape is not self:
                raise ValueError("operand belongs to a different tape")
            return operand
        return self.constant(operand)

    def apply(self, op: str, *args: Operand, **params) -> VarId:
        """Apply a named operation to recorded operands."""
        if op not in _OPS:
            raise ValueError(f"unknown operation '{op}'")
        operands = tuple(self._lift(a) for a in args)
        fn = _OPS[op]
        forward = (lambda *values: fn(*values, **params)) if params else fn
        value, vjp = forward(*(self._values[v.index] for v in operands))
        return self._record(op, tuple(v.index for v in operands), value, vjp, forward)

    def fused(self, name: str, forward: Forward, inputs: Sequence[Operand]) -> VarId:
        """Record a vector-valued node with a hand-written adjoint.

        ``forward(*input_values)`` returns ``(value, vjp)`` where ``vjp(g)``
        yields one gradient (or None) per input.
        """
        operands = tuple(self._lift(a) for a in inputs)
        value, vjp = forward(*(self._values[v.index] for v in operands))
        return self._record(name, tuple(v.index for v in operands), value, vjp, forward)

    # ---- reading ----

    def array(self, var: VarId) -> Array:
        return self._values[var.index]

    def value(self, var: VarId):
        """Stored value; scalars come back as Python floats."""
        value = self._values[var.index]
        return float(value) if value.ndim == 0 else value

    def replay(self) -> List[Array]:
        """Recompute every node from the leaves."""
        values: List[Array] = []
        for node, stored in zip(self._nodes, self._values):
            if node.forward is None:
                values.append(stored)
            else:
                value, _ = node.forward(*(values[i] for i in node.inputs))
                values.append(np.asarray(value, dtype=float))
        return values

    # ---- differentiation ----

    def backward(self, root: VarId) -> GradientMap:
        """Single reverse sweep from ``root`` in reverse record order."""
        grads: Dict[int, Array] = {root.index: np.ones_like(self._values[root.index])}
        for index in range(root.index, -1, -1):
            grad = grads.get(index)
            if grad is None:
                continue
            node = self._nodes[index]
            if node.vjp is None:
                continue
            for source, contribution in zip(node.inputs, node.vjp(grad)):
                if contribution is None or self._nodes[source].op == "const":
                    continue
                contribution = np.asarray(contribution, dtype=float)
                grads[source] = grads[source] + contribution if source in grads else contribution

        result = GradientMap(self)
        for index, grad in grads.items():
            result[VarId(index, self)] = float(grad) if grad.ndim == 0 else grad
        return result


# ============= Functional interface =============

def leaf(tape: Tape, value) -> VarId:
    return tape.leaf(value)


def apply(tape: Tape, op: str, *args: Operand, **params) -> VarId:
    return tape.apply(op, *args, **params)


def backward(tape: Tape, root: VarId) -> GradientMap:
    return tape.backward(root)
