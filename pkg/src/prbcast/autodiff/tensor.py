"""Dense float64 tensors with a recorded tape for reverse-mode gradients.

Operations run eagerly on numpy arrays. While a :class:`Tape` is active
(``with Tape() as tape:``) every op whose inputs require gradients appends
a node holding its inputs, outputs and a closure mapping output gradients
to input gradients. :func:`backward` walks the nodes in reverse insertion
order, which is a valid reverse topological order because nodes can only
consume tensors that already exist.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import kernels
from ..errors import ContractError, NumericError, ShapeError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    # make ndarray <op> Tensor dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


class Node:
    __slots__ = ("op", "inputs", "outputs", "backward")

    def __init__(self, op, inputs, outputs, backward):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(op: str, arr: np.ndarray) -> None:
    # a finite sum implies finite entries; only an overflowing sum needs the full scan
    with np.errstate(over="ignore", invalid="ignore"):
        total = arr.sum()
    if not np.isfinite(total) and not np.isfinite(arr).all():
        raise NumericError(f"{op}: non-finite output")


def _emit(op: str, inputs: Sequence[Tensor], out_arrays: Sequence[np.ndarray],
          backward: Callable) -> list[Tensor]:
    for arr in out_arrays:
        _check_finite(op, arr)
    needs = any(t.requires_grad for t in inputs)
    outs = [Tensor(arr, requires_grad=needs) for arr in out_arrays]
    if needs:
        tape = active_tape()
        if tape is not None:
            tape.nodes.append(Node(op, tuple(inputs), tuple(outs), backward))
    return outs


def _unary(op: str, x: Tensor, out: np.ndarray, backward: Callable) -> Tensor:
    return _emit(op, (x,), (out,), backward)[0]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g[0], a.shape), _unbroadcast(g[0], b.shape)

    return _emit("add", (a, b), (a.data + b.data,), bw)[0]


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g[0], a.shape), _unbroadcast(-g[0], b.shape)

    return _emit("sub", (a, b), (a.data - b.data,), bw)[0]


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g[0] * b.data, a.shape), _unbroadcast(g[0] * a.data, b.shape)

    return _emit("mul", (a, b), (a.data * b.data,), bw)[0]


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g[0] / b.data, a.shape),
                _unbroadcast(-g[0] * out / b.data, b.shape))

    return _emit("div", (a, b), (out,), bw)[0]


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy semantics for 2-D and batched (>=3-D) operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # shared weight: fold leading axes into one gemm
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def bw(g):
            g2 = g[0].reshape(-1, b.shape[1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _emit("matmul", (a, b), (out,), bw)[0]
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        ga = g[0] @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g[0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", (a, b), (out,), bw)[0]


# ----------------------------------------------------------------- unary ops

def neg(x) -> Tensor:
    x = as_tensor(x)
    return _unary("neg", x, -x.data, lambda g: (-g[0],))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _unary("tanh", x, out, lambda g: (g[0] * (1.0 - out * out),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _unary("sigmoid", x, out, lambda g: (g[0] * out * (1.0 - out),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _unary("relu", x, np.where(mask, x.data, 0.0), lambda g: (g[0] * mask,))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    sig = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _unary("softplus", x, out, lambda g: (g[0] * sig,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _unary("exp", x, out, lambda g: (g[0] * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _unary("log", x, out, lambda g: (g[0] / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _unary("sqrt", x, out, lambda g: (g[0] * 0.5 / out,))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _unary("square", x, x.data * x.data, lambda g: (2.0 * g[0] * x.data,))


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        gy = g[0]
        return (out * (gy - (gy * out).sum(axis=-1, keepdims=True)),)

    return _unary("softmax", x, out, bw)


# ------------------------------------------------------------ structural ops

def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        gy = g[0]
        if axis is not None and not keepdims:
            gy = np.expand_dims(gy, axis)
        return (np.broadcast_to(gy, x.shape).copy(),)

    return _unary("reduce_sum", x, out, bw)


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.data.size // max(out.size, 1) if axis is not None else x.data.size

    def bw(g):
        gy = g[0] / count
        if axis is not None and not keepdims:
            gy = np.expand_dims(gy, axis)
        return (np.broadcast_to(gy, x.shape).copy(),)

    return _unary("reduce_mean", x, out, bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    return _unary("reshape", x, out, lambda g: (g[0].reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _unary("transpose", x, out, lambda g: (np.transpose(g[0], inv),))


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    out = x.data[index]
    basic = not any(isinstance(i, (list, np.ndarray)) for i in
                    (index if isinstance(index, tuple) else (index,)))

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g[0]
        else:
            np.add.at(full, index, g[0])
        return (full,)

    return _unary("slice", x, np.array(out, copy=True), bw)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(t.shape) for t in ts)) from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g[0], bounds, axis=axis))

    return _emit("concat", ts, (out,), bw)[0]


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("stack: incompatible shapes " + ", ".join(str(t.shape) for t in ts)) from None

    def bw(g):
        return tuple(np.moveaxis(g[0], axis, 0))

    return _emit("stack", ts, (out,), bw)[0]


# ------------------------------------------------------------------ fused ops

def lstm_cell(x, h, c, W, b) -> tuple[Tensor, Tensor]:
    """Fused LSTM step; gate order (input, forget, cell, output).

    ``W`` has shape ``(n_in + H, 4H)`` and multiplies ``[x, h]``.
    """
    x, h, c, W, b = (as_tensor(t) for t in (x, h, c, W, b))
    H = h.shape[-1]
    if (x.ndim != 2 or h.shape != c.shape or h.shape[0] != x.shape[0]
            or W.shape != (x.shape[1] + H, 4 * H) or b.shape != (4 * H,)):
        raise ShapeError(
            f"lstm_cell: incompatible shapes x={x.shape} h={h.shape} c={c.shape} "
            f"W={W.shape} b={b.shape}")
    h_new, c_new, xh, acts, tanh_c = kernels.lstm_cell_forward(x.data, h.data, c.data, W.data, b.data)

    def bw(g):
        dh, dc = g
        dx, dh_prev, dc_prev, dW, db = kernels.lstm_cell_backward(
            dh, dc, c.data, W.data, xh, acts, tanh_c)
        return dx, dh_prev, dc_prev, dW, db

    out = _emit("lstm_cell", (x, h, c, W, b), (h_new, c_new), bw)
    return out[0], out[1]


# ------------------------------------------------------------------ backward

def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict:
    """Gradients of scalar ``loss`` with respect to leaf tensors.

    Returns a dict keyed by tensor (identity). When ``params`` is given the
    dict holds exactly those tensors, with zeros for any not reachable from
    the loss.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    keep: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        gouts = [grads.pop(id(o), None) for o in node.outputs]
        if all(g is None for g in gouts):
            continue
        gouts = [np.zeros_like(o.data) if g is None else g for o, g in zip(node.outputs, gouts)]
        gins = node.backward(gouts)
        for t, gi in zip(node.inputs, gins):
            if not t.requires_grad or gi is None:
                continue
            k = id(t)
            if k in grads:
                grads[k] = grads[k] + gi
            else:
                grads[k] = gi
                keep[k] = t
    if params is None:
        return {keep[k]: g for k, g in grads.items() if k in keep}
    out = {}
    for p in params:
        g = grads.get(id(p))
        out[p] = np.zeros_like(p.data) if g is None else g.reshape(p.shape)
    return out
