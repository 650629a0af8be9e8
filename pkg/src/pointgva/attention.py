"""Local attention over ragged reference sets.

Four mechanisms share one edge layout (a :class:`NeighborTable`): scalar
attention, multi-head scalar attention, vector attention and grouped vector
attention. Attention weights are normalized per query point over its
reference rows, independently for each group (or channel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import NeighborTable
from .numerics import autograd as ag
from .numerics.layers import (
    BatchNorm,
    GroupedLinear,
    Linear,
    MLP2,
    Module,
    MSAEncoding,
    ReLU,
    Sequential,
    masked_group_softmax,
)
from .posenc import PosEncConfig, PositionEncoding, relative_positions

RELATIONS = ("subtract", "multiply")
WEIGHT_ENCODINGS = ("MSA", "L", "GL", "L+N+A+L", "GL+N+A+L")
REFERENCE_MODES = ("knn", "grid")


@dataclass(frozen=True)
class AttentionConfig:
    channels: int
    groups: int
    relation: str = "subtract"
    weight_encoding: str = "GL+N+A+L"
    reference_mode: str = "knn"
    k: int = 16
    value_pe: bool = False

    def __post_init__(self):
        c, g = self.channels, self.groups
        if not 1 <= g <= c or c % g:
            raise ValueError(f"groups={g} must divide channels={c}")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}; expected one of {RELATIONS}")
        if self.weight_encoding not in WEIGHT_ENCODINGS:
            raise ValueError(
                f"unknown weight encoding {self.weight_encoding!r}; expected one of {WEIGHT_ENCODINGS}"
            )
        if self.reference_mode not in REFERENCE_MODES:
            raise ValueError(f"unknown reference mode {self.reference_mode!r}")

    @property
    def group_width(self) -> int:
        return self.channels // self.groups


def make_weight_encoding(variant: str, channels: int, groups: int,
                         rng: np.random.Generator | None = None) -> Module:
    """Build one of the five relation -> group-weight maps."""
    if variant not in WEIGHT_ENCODINGS:
        raise ValueError(f"unknown weight encoding {variant!r}; expected one of {WEIGHT_ENCODINGS}")
    if channels % groups:
        raise ValueError(f"groups={groups} must divide channels={channels}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if variant == "MSA":
        return MSAEncoding(channels, groups)
    if variant == "L":
        return Linear(channels, groups, rng)
    if variant == "GL":
        return GroupedLinear(channels, groups, rng)
    first = Linear(channels, groups, rng) if variant == "L+N+A+L" else GroupedLinear(channels, groups, rng)
    return Sequential(first, BatchNorm(groups), ReLU(), Linear(groups, groups, rng))


# -- functional core ---------------------------------------------------------------


def relation(q, k, neighbors: NeighborTable, kind: str = "subtract") -> ag.Tensor:
    qi = ag.gather_rows(q, neighbors.row_ids)
    kj = ag.gather_rows(k, neighbors.indices)
    if kind == "subtract":
        return qi - kj
    if kind == "multiply":
        return qi * kj
    raise ValueError(f"unknown relation {kind!r}")


def _check_nonempty(neighbors: NeighborTable):
    if neighbors.n_query and np.any(neighbors.counts == 0):
        row = int(np.flatnonzero(neighbors.counts == 0)[0])
        raise ValueError(f"empty reference set for point {row}")


def grouped_aggregate(weights, v, neighbors: NeighborTable, value_bias=None):
    """Softmax group weights per point, then sum weight * value over references.

    Returns ``(features, attention)`` with attention of shape (edges, groups).
    """
    _check_nonempty(neighbors)
    weights = ag.as_tensor(weights)
    v = ag.as_tensor(v)
    c, groups = v.shape[1], weights.shape[1]
    if c % groups:
        raise ValueError(f"{groups} weight groups do not divide {c} value channels")
    attn = masked_group_softmax(weights, neighbors.offsets)
    vj = ag.gather_rows(v, neighbors.indices)
    if value_bias is not None:
        vj = vj + value_bias
    out = ag.segment_sum(ag.group_expand(attn, c // groups) * vj, neighbors.offsets)
    return out, attn


def gva(q, k, v, neighbors: NeighborTable, encoding, groups: int, *,
        relation_kind: str = "subtract", posenc: PositionEncoding | None = None,
        rel_pos=None, value_bias=None, return_weights: bool = False):
    """Grouped vector attention: value channels in one group share one weight."""
    r = relation(q, k, neighbors, relation_kind)
    if posenc is not None:
        r = posenc(r, rel_pos)
    w = encoding(r)
    if w.shape[1] != groups:
        raise ValueError(f"weight encoding produced {w.shape[1]} columns, expected {groups}")
    out, attn = grouped_aggregate(w, v, neighbors, value_bias)
    return (out, attn) if return_weights else out


def vector_attention(q, k, v, neighbors: NeighborTable, encoding, *,
                     relation_kind: str = "subtract", posenc: PositionEncoding | None = None,
                     rel_pos=None, return_weights: bool = False):
    """Per-channel attention weights modulating each value channel."""
    _check_nonempty(neighbors)
    r = relation(q, k, neighbors, relation_kind)
    if posenc is not None:
        r = posenc(r, rel_pos)
    w = encoding(r)
    v = ag.as_tensor(v)
    if w.shape[1] != v.shape[1]:
        raise ValueError(f"vector attention needs {v.shape[1]} weight channels, got {w.shape[1]}")
    attn = ag.segment_softmax(w, neighbors.offsets)
    out = ag.segment_sum(attn * ag.gather_rows(v, neighbors.indices), neighbors.offsets)
    return (out, attn) if return_weights else out


def scalar_attention(q, k, v, neighbors: NeighborTable, return_weights: bool = False):
    """Scaled dot-product attention over each point's reference set."""
    _check_nonempty(neighbors)
    q, k, v = ag.as_tensor(q), ag.as_tensor(k), ag.as_tensor(v)
    ch = q.shape[1]
    dots = ag.group_sum(relation(q, k, neighbors, "multiply"), 1)
    attn = ag.segment_softmax(ag.scale(dots, 1.0 / math.sqrt(ch)), neighbors.offsets)
    vj = ag.gather_rows(v, neighbors.indices)
    out = ag.segment_sum(ag.group_expand(attn, v.shape[1]) * vj, neighbors.offsets)
    return (out, attn) if return_weights else out


def multi_head_attention(q, k, v, neighbors: NeighborTable, heads: int,
                         return_weights: bool = False):
    """Independent scalar attention on each of ``heads`` channel slices, concatenated."""
    q, k, v = ag.as_tensor(q), ag.as_tensor(k), ag.as_tensor(v)
    c = q.shape[1]
    if heads < 1 or c % heads:
        raise ValueError(f"heads={heads} must divide channels={c}")
    width = c // heads
    outs, weights = [], []
    for h in range(heads):
        a, b = h * width, (h + 1) * width
        o, w = scalar_attention(ag.slice_cols(q, a, b), ag.slice_cols(k, a, b),
                                ag.slice_cols(v, a, b), neighbors, return_weights=True)
        outs.append(o)
        weights.append(w)
    out = ag.concat_cols(outs) if heads > 1 else outs[0]
    if return_weights:
        return out, ag.concat_cols(weights) if heads > 1 else weights[0]
    return out


# -- module --------------------------------------------------------------------------


class GroupedVectorAttention(Module):
    """q/k/v projections + weight encoding + optional position encoding."""

    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator,
                 posenc_mode: str | None = "multiplier_and_bias"):
        self.cfg = cfg
        c = cfg.channels
        self.q = Linear(c, c, rng)
        self.k = Linear(c, c, rng)
        self.v = Linear(c, c, rng)
        self.encoding = make_weight_encoding(cfg.weight_encoding, c, cfg.groups, rng)
        self.posenc = PositionEncoding(PosEncConfig(c, posenc_mode), rng) if posenc_mode else None
        self.value_pe = MLP2(3, c, c, rng) if cfg.value_pe else None

    def forward(self, x, positions: np.ndarray, neighbors: NeighborTable,
                ref_x=None, ref_positions: np.ndarray | None = None,
                return_weights: bool = False):
        ref_x = x if ref_x is None else ref_x
        ref_positions = positions if ref_positions is None else ref_positions
        q, k, v = self.q(x), self.k(ref_x), self.v(ref_x)
        rel_pos = None
        if self.posenc is not None or self.value_pe is not None:
            rel_pos = relative_positions(positions, ref_positions, neighbors)
        value_bias = self.value_pe(rel_pos) if self.value_pe is not None else None
        return gva(q, k, v, neighbors, self.encoding, self.cfg.groups,
                   relation_kind=self.cfg.relation, posenc=self.posenc, rel_pos=rel_pos,
                   value_bias=value_bias, return_weights=return_weights)
