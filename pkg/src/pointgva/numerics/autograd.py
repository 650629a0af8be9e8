"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Ops record onto the innermost active :class:`Tape` only when at least one
input requires a gradient; outside a tape everything runs as plain numpy.
Ragged ops take CSR ``offsets`` (length rows + 1) over contiguous edge rows.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

from . import kernels

_check_finite = os.environ.get("POINTGVA_CHECK_FINITE", "") not in ("", "0")
_tapes: list["Tape"] = []


def set_check_finite(flag: bool) -> None:
    global _check_finite
    _check_finite = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


_param_ids = itertools.count()


class Param(Tensor):
    """Learnable leaf; ``grad`` starts at zero and accumulates until reset."""

    __slots__ = ("id", "name")

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.id = next(_param_ids)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


class Tape:
    """Ordered record of differentiable ops for one backward sweep."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss: Tensor, seed=None) -> None:
        if seed is None:
            if loss.size != 1:
                raise ValueError(f"backward from a non-scalar of shape {loss.shape} needs a seed")
            seed = np.ones_like(loss.data)
        if not any(out is loss for out, _, _ in self.records):
            raise ValueError("loss was not recorded on this tape; build it inside the `with` block")
        for out, _, _ in self.records:
            out.grad = None
        loss.grad = np.asarray(seed, dtype=np.float64).reshape(loss.shape)
        for out, inputs, vjp in reversed(self.records):
            g = out.grad
            if g is None:
                continue
            for t, gt in zip(inputs, vjp(g)):
                if gt is None or not t.requires_grad:
                    continue
                if isinstance(t, Param):
                    t.grad += gt
                elif t.grad is None:
                    t.grad = np.array(gt, dtype=np.float64)
                else:
                    t.grad = t.grad + gt


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, inputs, vjp) -> Tensor:
    rg = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=rg)
    if _check_finite and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite values produced by forward op")
    if rg and _tapes:
        _tapes[-1].records.append((out, tuple(inputs), vjp))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def add_bias(x, b) -> Tensor:
    """Row-wise bias: the only broadcast supported."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.reshape(-1).shape[0] != x.shape[1]:
        raise ValueError(f"add_bias: cannot add bias {b.shape} to rows of {x.shape}")
    bshape = b.shape
    return _result(x.data + b.data.reshape(1, -1), (x, b),
                   lambda g: (g, g.sum(axis=0).reshape(bshape)))


def row_scale(x, w) -> Tensor:
    """Scale row i of ``x`` by the constant ``w[i]``."""
    x = as_tensor(x)
    w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    return _result(x.data * w, (x,), lambda g: (g * w,))


# -- linear algebra --------------------------------------------------------------


def matmul(x, w) -> Tensor:
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"matmul: shape mismatch {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    return _result(xd @ wd, (x, w), lambda g: (g @ wd.T, xd.T @ g))


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with weight stored as (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data
    if bias is None:
        return _result(xd @ wd, (x, weight), lambda g: (g @ wd.T, xd.T @ g))
    bias = as_tensor(bias)
    if bias.data.reshape(-1).shape[0] != wd.shape[1]:
        raise ValueError(f"linear: bias {bias.shape} incompatible with weight {weight.shape}")
    bshape = bias.shape
    return _result(
        xd @ wd + bias.data.reshape(1, -1),
        (x, weight, bias),
        lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0).reshape(bshape)),
    )


def _check_groups(c: int, groups: int):
    if groups < 1 or c % groups:
        raise ValueError(f"channel count {c} is not divisible by {groups} groups")


def group_sum(x, groups: int) -> Tensor:
    """Sum each contiguous block of ``c / groups`` channels: (m, c) -> (m, groups)."""
    x = as_tensor(x)
    m, c = x.shape
    _check_groups(c, groups)
    cg = c // groups
    return _result(x.data.reshape(m, groups, cg).sum(axis=2), (x,),
                   lambda g: (np.repeat(g, cg, axis=1),))


def group_expand(x, width: int) -> Tensor:
    """Repeat every column ``width`` times: (m, g) -> (m, g * width)."""
    x = as_tensor(x)
    m, groups = x.shape
    return _result(np.repeat(x.data, width, axis=1), (x,),
                   lambda g: (g.reshape(m, groups, width).sum(axis=2),))


def grouped_dot(x, p, groups: int) -> Tensor:
    """Block-diagonal projection: out[:, l] = x[:, block l] . p[block l]."""
    x, p = as_tensor(x), as_tensor(p)
    m, c = x.shape
    _check_groups(c, groups)
    if p.data.reshape(-1).shape[0] != c:
        raise ValueError(f"grouped_dot: parameter vector {p.shape} does not match {c} channels")
    cg = c // groups
    xr = x.data.reshape(m, groups, cg)
    pr = p.data.reshape(groups, cg)
    pshape = p.shape

    def vjp(g):
        gx = (g[:, :, None] * pr[None]).reshape(m, c)
        gp = np.einsum("mg,mgc->gc", g, xr).reshape(pshape)
        return gx, gp

    return _result(np.einsum("mgc,gc->mg", xr, pr), (x, p), vjp)


def batch_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-feature normalization over the rows present in this call."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.shape[0]
    mu = x.data.mean(axis=0)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=0) + eps)
    xhat = xc * inv
    gd = gamma.data

    def vjp(g):
        gxhat = g * gd
        gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _result(xhat * gd + beta.data, (x, gamma, beta), vjp)


# -- shape ops -------------------------------------------------------------------


def concat_cols(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.shape[1] for p in parts]
    cuts = np.cumsum(widths)[:-1]
    return _result(np.concatenate([p.data for p in parts], axis=1), parts,
                   lambda g: tuple(np.split(g, cuts, axis=1)))


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _result(x.data[:, start:stop], (x,), vjp)


def gather_rows(x, idx) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(x.data[idx], (x,), vjp)


def total(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _result(np.sum(x.data), (x,), lambda g: (np.full(shape, float(g)),))


def weighted_total(x, weights) -> Tensor:
    """Scalar ``sum(x * weights)`` for a constant weight array."""
    x = as_tensor(x)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.shape:
        raise ValueError(f"weighted_total: shape mismatch {x.shape} vs {w.shape}")
    return _result(np.sum(x.data * w), (x,), lambda g: (float(g) * w,))


def mean_rows(x) -> Tensor:
    x = as_tensor(x)
    n = x.shape[0]
    if n == 0:
        raise ValueError("mean over zero rows")
    return _result(x.data.mean(axis=0, keepdims=True), (x,),
                   lambda g: (np.repeat(g / n, n, axis=0),))


# -- ragged segment ops -----------------------------------------------------------


def _segments(offsets, m: int):
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[0] != 0 or offsets[-1] != m:
        raise ValueError(f"offsets cover [{offsets[0]}, {offsets[-1]}) but there are {m} rows")
    counts = np.diff(offsets)
    return offsets, counts


def segment_sum(x, offsets) -> Tensor:
    x = as_tensor(x)
    offsets, counts = _segments(offsets, x.shape[0])
    rows = np.repeat(np.arange(counts.shape[0]), counts)
    return _result(kernels.segment_sum_rows(x.data, offsets), (x,), lambda g: (g[rows],))


def segment_softmax(x, offsets) -> Tensor:
    """Column-wise softmax within every segment, with max subtraction."""
    x = as_tensor(x)
    offsets, counts = _segments(offsets, x.shape[0])
    if np.any(counts == 0):
        raise ValueError("softmax over an empty segment")
    rows = np.repeat(np.arange(counts.shape[0]), counts)
    top = kernels.segment_max_rows(x.data, offsets)
    e = np.exp(x.data - top[rows])
    y = e / kernels.segment_sum_rows(e, offsets)[rows]

    def vjp(g):
        dot = kernels.segment_sum_rows(y * g, offsets)
        return (y * (g - dot[rows]),)

    return _result(y, (x,), vjp)


def segment_max(x, offsets) -> Tensor:
    """Column-wise max per segment; gradient goes to the first maximal row."""
    x = as_tensor(x)
    offsets, counts = _segments(offsets, x.shape[0])
    if np.any(counts == 0):
        raise ValueError("max over an empty segment")
    m, c = x.shape
    xd = x.data
    top = kernels.segment_max_rows(xd, offsets)

    def vjp(g):
        first = kernels.segment_argmax_rows(xd, offsets)
        gx = np.zeros((m, c))
        gx[first, np.broadcast_to(np.arange(c), first.shape)] = g
        return (gx,)

    return _result(top, (x,), vjp)
