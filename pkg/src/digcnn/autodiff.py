"""Dense tensors with define-by-run reverse-mode differentiation.

Only the handful of operations the parser needs are provided: dilated 2-D
convolution over an ``H x W x C`` grid, ReLU, affine maps over the trailing
axis, masked log-softmax, inverted dropout, row lookup, concatenation and a
few reductions.  Every operation records a closure mapping the upstream
gradient to one gradient per parent; :func:`backward` walks the recorded graph
in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, DataError, InvalidDistributionError

DEFAULT_DTYPE = np.float64

TRAIN = "train"
INFER = "infer"


class Tensor:
    """An n-d array plus the bookkeeping needed for reverse-mode AD."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other, self.dtype), -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return multiply(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __getitem__(self, index):
        return take(self, index)

    def sum(self):
        return total(self)

    def mean(self):
        return scale(total(self), 1.0 / self.data.size)

    def reshape(self, *shape):
        return reshape(self, *shape)


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE))


def _result(data, parents, grad_fn):
    """Wrap ``data`` as an op output, recording the graph only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaves are tensors created with ``requires_grad=True`` rather than by an
    operation.  Gradients accumulate across calls until ``zero_grad``.
    """
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ContractViolation(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# elementwise and structural ops --------------------------------------


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.shape != b.shape:
        raise ContractViolation(f"add: shapes {a.shape} and {b.shape} differ")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"multiply: shapes {a.shape} and {b.shape} differ")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor: float) -> Tensor:
    return _result(x.data * factor, (x,), lambda g: (g * factor,))


def total(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def take(x: Tensor, index) -> Tensor:
    """Numpy-style indexing; repeated fancy indices accumulate gradient."""

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _result(x.data[index], (x,), grad_fn)


def stack_mean(xs: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of equally shaped tensors."""
    if not xs:
        raise ContractViolation("stack_mean needs at least one tensor")
    k = 1.0 / len(xs)
    out = xs[0].data.copy()
    for x in xs[1:]:
        out = out + x.data
    return _result(out * k, tuple(xs), lambda g: tuple(g * k for _ in xs))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tuple(xs), grad_fn)


def embedding(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DataError(
            f"index out of vocabulary range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )
    return take(table, ids)


def relu(x: Tensor) -> Tensor:
    """max(0, v); the subgradient at exactly 0 is 0."""
    active = x.data > 0
    return _result(np.where(active, x.data, 0).astype(x.dtype), (x,), lambda g: (g * active,))


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` over the trailing axis of ``x``."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ContractViolation(
            f"affine: input trailing axis {x.shape[-1]} does not match weight rows "
            f"{weight.shape[0] if weight.ndim else weight.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise ContractViolation(f"affine: bias shape {bias.shape} != ({weight.shape[1]},)")
    flat = x.data.reshape(-1, weight.shape[0])
    out = flat @ weight.data + bias.data

    def grad_fn(g):
        g2 = g.reshape(-1, weight.shape[1])
        return (
            (g2 @ weight.data.T).reshape(x.shape),
            flat.T @ g2,
            g2.sum(axis=0),
        )

    return _result(out.reshape(x.shape[:-1] + (weight.shape[1],)), (x, weight, bias), grad_fn)


def log_softmax_masked(scores: Tensor, mask) -> Tensor:
    """Log-softmax over the last axis restricted to entries where ``mask`` is true.

    Masked entries come back as ``-inf`` and receive no gradient.  Leading
    axes are treated as independent rows.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if not mask.any(axis=-1).all():
        raise InvalidDistributionError("log_softmax_masked: a row has every entry masked")
    z = np.where(mask, scores.data, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def grad_fn(g):
        g = np.where(mask, g, 0)
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _result(out, (scores,), grad_fn)


def dropout(x: Tensor, rate: float, mode: str, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity in ``infer`` mode or when ``rate`` is 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in (TRAIN, INFER):
        raise ConfigError(f"mode must be {TRAIN!r} or {INFER!r}, got {mode!r}")
    if mode == INFER or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("train-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# convolution ----------------------------------------------------------


@dataclass
class Conv2dKernel:
    """Square dilated convolution kernel with zero-padded, size-preserving output.

    ``weight`` has shape ``(2r+1, 2r+1, in_channels, out_channels)``.
    """

    weight: Tensor
    bias: Tensor
    dilation: int = 1

    def __post_init__(self):
        w = self.weight.shape
        if len(w) != 4 or w[0] != w[1] or w[0] % 2 != 1:
            raise ContractViolation(f"kernel weight must be (2r+1, 2r+1, in, out), got {w}")
        if self.bias.shape != (w[3],):
            raise ContractViolation(f"kernel bias shape {self.bias.shape} != ({w[3]},)")
        if int(self.dilation) < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        self.dilation = int(self.dilation)

    @property
    def radius(self) -> int:
        return self.weight.shape[0] // 2

    @property
    def in_channels(self) -> int:
        return self.weight.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[3]


def _im2col(x: np.ndarray, radius: int, dilation: int) -> np.ndarray:
    # columns ordered (row offset, col offset, channel)
    h, w, c = x.shape
    k = 2 * radius + 1
    cols = np.zeros((h, w, k * k * c), dtype=x.dtype)
    for a in range(k):
        dy = (a - radius) * dilation
        y0, y1 = max(0, -dy), min(h, h - dy)
        if y0 >= y1:
            continue
        for b in range(k):
            dx = (b - radius) * dilation
            x0, x1 = max(0, -dx), min(w, w - dx)
            if x0 >= x1:
                continue
            j = (a * k + b) * c
            cols[y0:y1, x0:x1, j : j + c] = x[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    return cols


def _col2im(cols: np.ndarray, shape, radius: int, dilation: int) -> np.ndarray:
    h, w, c = shape
    k = 2 * radius + 1
    out = np.zeros(shape, dtype=cols.dtype)
    for a in range(k):
        dy = (a - radius) * dilation
        y0, y1 = max(0, -dy), min(h, h - dy)
        if y0 >= y1:
            continue
        for b in range(k):
            dx = (b - radius) * dilation
            x0, x1 = max(0, -dx), min(w, w - dx)
            if x0 >= x1:
                continue
            j = (a * k + b) * c
            out[y0 + dy : y1 + dy, x0 + dx : x1 + dx] += cols[y0:y1, x0:x1, j : j + c]
    return out


def conv2d_dilated(x: Tensor, kernel: Conv2dKernel) -> Tensor:
    """Dilated 2-D convolution of an ``H x W x Cin`` grid.

    ``out[y, x, o] = bias[o] + sum_{a, b, c} w[a, b, c, o] * in[y + d*a, x + d*b, c]``
    with ``a, b`` ranging over ``[-r, r]`` and out-of-range taps reading zero.
    """
    if x.ndim != 3:
        raise ContractViolation(f"conv2d_dilated: input must be H x W x C, got shape {x.shape}")
    if x.shape[2] != kernel.in_channels:
        raise ContractViolation(
            f"conv2d_dilated: channel axis (2) has {x.shape[2]} channels, "
            f"kernel expects {kernel.in_channels}"
        )
    h, w, _ = x.shape
    r, d = kernel.radius, kernel.dilation
    wmat = kernel.weight.data.reshape(-1, kernel.out_channels)
    if r == 0:
        cols = x.data
    else:
        cols = _im2col(x.data, r, d)
    flat = cols.reshape(h * w, -1)
    out = (flat @ wmat + kernel.bias.data).reshape(h, w, kernel.out_channels)

    def grad_fn(g):
        g2 = g.reshape(h * w, -1)
        gw = (flat.T @ g2).reshape(kernel.weight.shape)
        gb = g2.sum(axis=0)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(h, w, -1)
            gx = gcols if r == 0 else _col2im(gcols, x.shape, r, d)
        return gx, gw, gb

    return _result(out, (x, kernel.weight, kernel.bias), grad_fn)
