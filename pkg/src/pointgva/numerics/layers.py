"""Parameterized layers built on the tape ops, plus their functional forms."""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Param, Tensor


class Module:
    """Minimal parameter container; parameters are discovered by attribute walk."""

    def parameters(self) -> list[Param]:
        seen: dict[int, Param] = {}
        self._collect(self, seen)
        return list(seen.values())

    @staticmethod
    def _collect(obj, seen):
        if isinstance(obj, Param):
            seen.setdefault(id(obj), obj)
        elif isinstance(obj, Module):
            for value in vars(obj).values():
                Module._collect(value, seen)
        elif isinstance(obj, (list, tuple)):
            for value in obj:
                Module._collect(value, seen)
        elif isinstance(obj, dict):
            for value in obj.values():
                Module._collect(value, seen)

    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


# -- functional forms ------------------------------------------------------------


def linear(x, weight, bias=None) -> Tensor:
    return ag.linear(x, weight, bias)


def grouped_linear(r, params, groups: int) -> Tensor:
    """Project each of ``groups`` channel blocks with its own slice of ``params``."""
    return ag.grouped_dot(r, params, groups)


def msa_weight_encoding(r, groups: int) -> Tensor:
    """Fixed block-sum encoding scaled by 1/sqrt(c/g); no learnable parameters."""
    r = ag.as_tensor(r)
    c = r.shape[1]
    ag._check_groups(c, groups)
    return ag.scale(ag.group_sum(r, groups), 1.0 / math.sqrt(c // groups))


def masked_group_softmax(w, offsets) -> Tensor:
    """Softmax over each point's reference rows, independently per group column."""
    return ag.segment_softmax(w, offsets)


# -- layers ---------------------------------------------------------------------------


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = Param(uniform_init(rng, (in_dim, out_dim), in_dim), "weight")
        self.bias = Param(uniform_init(rng, (out_dim,), in_dim), "bias") if bias else None

    def forward(self, x) -> Tensor:
        return ag.linear(x, self.weight, self.bias)


class GroupedLinear(Module):
    """c -> g map with one length-c/g vector per group (c parameters total)."""

    def __init__(self, channels: int, groups: int, rng: np.random.Generator):
        ag._check_groups(channels, groups)
        self.channels, self.groups = channels, groups
        self.weight = Param(uniform_init(rng, (channels,), channels // groups), "weight")

    def forward(self, r) -> Tensor:
        return ag.grouped_dot(r, self.weight, self.groups)

    def block_diagonal(self) -> np.ndarray:
        """Materialized (c, g) matrix equivalent to this layer."""
        cg = self.channels // self.groups
        mat = np.zeros((self.channels, self.groups))
        for l in range(self.groups):
            mat[l * cg:(l + 1) * cg, l] = self.weight.data[l * cg:(l + 1) * cg]
        return mat


class MSAEncoding(Module):
    def __init__(self, channels: int, groups: int):
        ag._check_groups(channels, groups)
        self.channels, self.groups = channels, groups

    def forward(self, r) -> Tensor:
        return msa_weight_encoding(r, self.groups)


class BatchNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Param(np.ones(dim), "gamma")
        self.beta = Param(np.zeros(dim), "beta")

    def forward(self, x) -> Tensor:
        return ag.batch_norm(x, self.gamma, self.beta, self.eps)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class ReLU(Module):
    def forward(self, x) -> Tensor:
        return ag.relu(x)


class MLP2(Module):
    """linear -> norm -> ReLU -> linear."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
                 norm: bool = True):
        self.fc1 = Linear(in_dim, hidden, rng)
        self.norm = BatchNorm(hidden) if norm else None
        self.fc2 = Linear(hidden, out_dim, rng)

    def forward(self, x) -> Tensor:
        h = self.fc1(x)
        if self.norm is not None:
            h = self.norm(h)
        return self.fc2(ag.relu(h))


def mlp2(x, hidden: int, out: int, rng: np.random.Generator, norm: bool = True) -> Tensor:
    """Apply a freshly initialized two-layer MLP (convenience for one-off calls)."""
    x = ag.as_tensor(x)
    return MLP2(x.shape[1], hidden, out, rng, norm=norm)(x)
