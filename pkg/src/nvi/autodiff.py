"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Every primitive evaluates eagerly.  When a :class:`Tape` is active and at
least one input requires a gradient, the primitive appends a node holding
its inputs, its output and a local backward rule; :func:`backward` replays
those rules in reverse order.

    >>> x = Tensor([0.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = tanh(x).sum()
    >>> backward(tape, y)[x]
    array([1.])
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DeterminismError, DimensionError, NumericError

__all__ = [
    "Tensor", "Tape", "backward", "grad_check", "apply_primitive", "PRIMITIVES",
    "make_node", "constant",
    "add", "sub", "mul", "scale", "shift", "neg", "square", "matmul", "concat",
    "tanh", "relu", "sigmoid", "log_sigmoid", "exp", "log", "softmax",
    "log_softmax", "sum", "mean", "take_rows", "cols", "dropout", "clamp",
    "reshape", "scale_rows",
]

_ACTIVE: list["Tape"] = []


class Tensor:
    """Dense array of reals with an optional accumulated gradient."""

    __slots__ = ("values", "requires_grad", "grad", "name")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, values, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.array(values, dtype=dtype if dtype is not None else None, copy=True)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in tensor {name or ''}".rstrip())
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # operator sugar; python scalars become shift/scale so shapes stay explicit
    def __add__(self, other):
        return shift(self, other) if _is_scalar(other) else add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return shift(self, -other) if _is_scalar(other) else sub(self, other)

    def __rsub__(self, other):
        return shift(neg(self), other) if _is_scalar(other) else sub(other, self)

    def __mul__(self, other):
        return scale(self, other) if _is_scalar(other) else mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not _is_scalar(other):
            raise DimensionError("tensor division is only defined by a scalar")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def constant(values, like: Tensor | None = None) -> Tensor:
    """A non-differentiable tensor, cast to the dtype of ``like`` if given."""
    dtype = like.dtype if like is not None else None
    return Tensor(values, dtype=dtype)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # array operands become constants in the dtype of the tensor operand
    if not isinstance(a, Tensor):
        a = constant(a, b)
    if not isinstance(b, Tensor):
        b = constant(b, a)
    return a, b


@dataclass
class Node:
    kind: str
    inputs: tuple
    output: Tensor
    rule: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of executed primitives.

    Only one forward/backward pass should own a tape; use it as a context
    manager to make it the active recorder.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self):
        return len(self.nodes)


def make_node(kind: str, value: np.ndarray, inputs: Sequence[Tensor],
              rule: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap a forward value as a primitive output and record it on the active tape.

    ``rule`` maps the output gradient to one gradient (or None) per input.
    """
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite output from primitive '{kind}'")
    out = Tensor._wrap(np.asarray(value))
    if _ACTIVE and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE[-1].nodes.append(Node(kind, tuple(inputs), out, rule))
    return out


# ---------------------------------------------------------------------------
# primitives


def _check_same(kind, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def _is_bias(a: Tensor, b: Tensor) -> bool:
    return a.values.ndim >= 2 and b.values.ndim == 1 and a.shape[-1] == b.shape[0]


def _reduce_bias(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may be a bias row vector added to every row of ``a``."""
    a, b = _pair(a, b)
    if a.shape == b.shape:
        return make_node("add", a.values + b.values, (a, b), lambda g: (g, g))
    if _is_bias(a, b):
        return make_node("add", a.values + b.values, (a, b), lambda g: (g, _reduce_bias(g)))
    raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.shape == b.shape:
        return make_node("sub", a.values - b.values, (a, b), lambda g: (g, -g))
    if _is_bias(a, b):
        return make_node("sub", a.values - b.values, (a, b), lambda g: (g, -_reduce_bias(g)))
    raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_same("mul", a, b)
    av, bv = a.values, b.values
    return make_node("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return make_node("scale", a.values * c, (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return make_node("shift", a.values + c, (a,), lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return make_node("neg", -a.values, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    av = a.values
    return make_node("square", av * av, (a,), lambda g: (2 * g * av,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` with ``b`` a matrix and ``a`` a vector, matrix or stack of matrices."""
    if b.values.ndim != 2 or a.values.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    av, bv = a.values, b.values

    def rule(g):
        ga = g @ bv.T
        if av.ndim == 1:
            gb = np.outer(av, g)
        else:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_node("matmul", av @ bv, (a, b), rule)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat: no inputs")
    ref = tensors[0].values
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.values.ndim != ref.ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != ax):
            raise DimensionError(f"concat: shapes {ref.shape} and {t.shape} do not conform on axis {axis}")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    value = np.concatenate([t.values for t in tensors], axis=ax)
    return make_node("concat", value, tensors, lambda g: np.split(g, splits, axis=ax))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.values)
    return make_node("tanh", y, (a,), lambda g: (g * (1 - y * y),))


def relu(a: Tensor) -> Tensor:
    on = a.values > 0
    return make_node("relu", np.where(on, a.values, 0).astype(a.dtype), (a,), lambda g: (g * on,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.values)
    # sigmoid(x) * sigmoid(-x) keeps precision in both tails, unlike y * (1 - y)
    return make_node("sigmoid", y, (a,), lambda g: (g * (y * _sigmoid(-a.values)),))


def log_sigmoid(a: Tensor) -> Tensor:
    """``log(sigmoid(a))`` without overflow for large negative inputs."""
    x = a.values
    y = np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))
    return make_node("log_sigmoid", y, (a,), lambda g: (g * _sigmoid(-x),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.values)
    return make_node("exp", y, (a,), lambda g: (g * y,))


def expm1(a: Tensor) -> Tensor:
    """exp(a) - 1 without cancellation near zero."""
    y = np.expm1(a.values)
    return make_node("expm1", y, (a,), lambda g: (g * (y + 1),))


def log(a: Tensor) -> Tensor:
    x = a.values
    if np.any(x <= 0):
        raise NumericError("log: non-positive input")
    return make_node("log", np.log(x), (a,), lambda g: (g / x,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.values
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node("softmax", y, (a,), rule)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.values
    z = x - x.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def rule(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return make_node("log_softmax", y, (a,), rule)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = a.values
    if axis is None:
        return make_node("sum", np.asarray(x.sum()), (a,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    ax = axis % x.ndim
    return make_node("sum", x.sum(axis=ax), (a,),
                     lambda g: (np.broadcast_to(np.expand_dims(g, ax), x.shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows ``a[index]``; also used as the embedding lookup."""
    idx = np.asarray(index, dtype=np.intp)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise DimensionError(f"take_rows: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def rule(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return make_node("take_rows", a.values[idx], (a,), rule)


def cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of the last axis."""
    if not 0 <= start < stop <= a.shape[-1]:
        raise DimensionError(f"cols: range {start}:{stop} invalid for shape {a.shape}")
    shape = a.shape

    def rule(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[..., start:stop] = g
        return (out,)

    return make_node("cols", a.values[..., start:stop], (a,), rule)


def dropout(a: Tensor, mask, rate: float) -> Tensor:
    """Inverted dropout with an externally supplied 0/1 keep mask."""
    m = np.asarray(mask.values if isinstance(mask, Tensor) else mask, dtype=a.dtype)
    if m.shape != a.shape:
        raise DimensionError(f"dropout: mask shape {m.shape} differs from input {a.shape}")
    if not 0 <= rate < 1:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    keep = m / a.dtype.type(1 - rate)
    return make_node("dropout", a.values * keep, (a,), lambda g: (g * keep,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.values
    inside = (x >= lo) & (x <= hi)
    return make_node("clamp", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        y = a.values.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from exc
    return make_node("reshape", y, (a,), lambda g: (g.reshape(old),))


def scale_rows(a: Tensor, s: Tensor) -> Tensor:
    """Multiply each row of the matrix ``a`` (n, m) by the matching entry of ``s`` (n, 1)."""
    if a.values.ndim != 2 or s.shape != (a.shape[0], 1):
        raise DimensionError(f"scale_rows: shapes {a.shape} and {s.shape} do not conform")
    av, sv = a.values, s.values
    return make_node("scale_rows", av * sv, (a, s),
                     lambda g: (g * sv, (g * av).sum(axis=1, keepdims=True)))


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "add": add, "sub": sub, "mul": mul, "scale": scale, "shift": shift, "neg": neg,
    "square": square, "matmul": matmul, "concat": concat, "tanh": tanh, "relu": relu,
    "sigmoid": sigmoid, "log_sigmoid": log_sigmoid, "exp": exp, "expm1": expm1, "log": log,
    "softmax": softmax, "log_softmax": log_softmax, "sum": sum, "mean": mean,
    "take_rows": take_rows, "cols": cols, "dropout": dropout, "clamp": clamp,
    "reshape": reshape, "scale_rows": scale_rows,
}


def apply_primitive(kind: str, *inputs, **attrs) -> Tensor:
    """Dispatch a primitive by name, e.g. ``apply_primitive("matmul", a, b)``."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown primitive '{kind}'") from None
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# reverse pass


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = (),
             grad_output: float = 1.0, accumulate: bool = True) -> dict[Tensor, np.ndarray]:
    """Propagate ``d loss`` back through ``tape``.

    Returns a map from every leaf that requires a gradient (those recorded on
    the tape plus any in ``params``) to its total derivative.  Leaves the
    loss does not depend on get zeros.  With ``accumulate`` the result is
    also added into each leaf's ``.grad``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.full(loss.shape, grad_output, dtype=loss.dtype)
    produced = set()
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        produced.add(id(node.output))
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves.setdefault(id(t), t)
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.rule(g)):
            if gi is None or not t.requires_grad:
                continue
            if not np.all(np.isfinite(gi)):
                raise NumericError(f"non-finite gradient from primitive '{node.kind}'")
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=t.dtype, copy=True)
    for p in params:
        leaves.setdefault(id(p), p)
    result = {}
    for key, t in leaves.items():
        if key in produced:
            continue
        g = grads.get(key)
        if g is None:
            g = np.zeros(t.shape, dtype=t.dtype)
        result[t] = g
        if accumulate:
            t.grad = g.copy() if t.grad is None else t.grad + g
    return result


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               floor: float = 1e-8) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` must rebuild the scalar objective from the current values of
    ``params`` on every call.  Run it in float64.
    """
    first, second = fn().values.copy(), fn().values.copy()
    if not np.array_equal(first, second):
        raise DeterminismError("function returned different values for identical parameters")
    with Tape() as tape:
        loss = fn()
    analytic = backward(tape, loss, params, accumulate=False)
    worst = 0.0
    for p in params:
        flat = p.values.reshape(-1)
        ga = analytic[p].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().values)
            flat[i] = orig - step
            down = float(fn().values)
            flat[i] = orig
            num = (up - down) / (2 * step)
            err = abs(ga[i] - num) / max(abs(ga[i]), abs(num), floor)
            worst = max(worst, err)
    return worst
