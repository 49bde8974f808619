"""
Minimal dense tensor with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays. Every operation records its inputs and a
closure that maps the output gradient to input gradients; the graph is built
on each forward pass and walked in reverse topological order by `backward`.

Broadcasting is limited to what the transformer needs: the second operand of
`add`/`mul`/`matmul` may have fewer leading dimensions than the first (bias
vectors, positional tables, shared weight matrices).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from railfuse.errors import NonFiniteError, ShapeError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def backward(self) -> None:
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], fn, name: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{name} produced non-finite values")
    needs = any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    out._parents = parents if needs else ()
    out._backward = fn if needs else None
    out.name = name
    return out


def _check_suffix(a: tuple[int, ...], b: tuple[int, ...], op: str) -> None:
    if a == b:
        return
    if len(b) > len(a) or a[len(a) - len(b):] != b:
        raise ShapeError(f"{op}: shapes {a} and {b} are not compatible")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))) if lead > 0 else grad


# -- elementwise ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. `b` may be a trailing-suffix broadcast of `a`."""
    _check_suffix(a.shape, b.shape, "add")
    out = a.data + b.data

    def fn(g):
        return g, _unbroadcast(g, b.shape)

    return _make(out, (a, b), fn, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product. `b` may be a trailing-suffix broadcast of `a`."""
    _check_suffix(a.shape, b.shape, "mul")
    out = a.data * b.data

    def fn(g):
        return g * b.data, _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), fn, "mul")


def elementwise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind in ("mul", "multiply"):
        return mul(a, b)
    raise ValueError(f"unknown elementwise op {kind!r}")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = x.data * cdf

    def fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data**2)
        return (g * (cdf + x.data * pdf),)

    return _make(out, (x,), fn, "gelu")


# -- linear algebra --------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    `a` is (..., m, k); `b` is either (k, n) shared across the batch or has
    the same leading dimensions as `a`.
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul needs operands with at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    if b.data.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if b.data.ndim == 2 and gb.ndim > 2:
            gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return _make(out, (a, b), fn, "matmul")


# -- normalisation ---------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (x,), fn, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def fn(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gain, bias), fn, "layer_norm")


# -- shape manipulation ------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return _make(out, (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    out = np.array(x.data[index])

    basic = all(isinstance(i, (int, slice, type(Ellipsis))) for i in (index if isinstance(index, tuple) else (index,)))

    def fn(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(out, (x,), fn, "getitem")


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    _check_suffix(tuple(shape), x.shape, "broadcast_to")
    out = np.broadcast_to(x.data, shape).copy()
    return _make(out, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), fn, "concat")


# -- reductions and losses -------------------------------------------------------------


def tsum(x: Tensor) -> Tensor:
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),), "sum")


def tmean(x: Tensor) -> Tensor:
    n = x.size
    return _make(np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, float(g) / n),), "mean")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (B, K) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy expects (B, K) logits and (B,) labels")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(labels.size)
    loss = -logp[rows, labels].mean()

    def fn(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (float(g) / labels.size),)

    return _make(np.array(loss), (logits,), fn, "cross_entropy")


# -- backward ----------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into `t.grad` for every reachable tensor."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def gradients(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Run backward and return one gradient per parameter; unreached ones are zero."""
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# -- optimiser ------------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 1e-6, **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            lr=lr,
            **kw,
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place and advance the step counter."""
    if state.lr <= 0:
        raise ValueError("learning rate must be positive")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("adam_step: parameter, gradient and state counts differ")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"adam_step: shape mismatch for parameter {p.name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
