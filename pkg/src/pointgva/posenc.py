"""Relative-position encodings folded into the attention relation vector.

``bias_only``:            rel + bias(p_i - p_j)
``multiplier_and_bias``:  mul(p_i - p_j) * rel + bias(p_i - p_j)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import autograd as ag
from .numerics.layers import MLP2, Module

MODES = ("bias_only", "multiplier_and_bias")


@dataclass(frozen=True)
class PosEncConfig:
    channels: int
    mode: str = "multiplier_and_bias"
    hidden: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown position-encoding mode {self.mode!r}; expected one of {MODES}")

    @property
    def hidden_dim(self) -> int:
        return self.hidden or self.channels


class PositionEncoding(Module):
    def __init__(self, cfg: PosEncConfig, rng: np.random.Generator):
        self.cfg = cfg
        h, c = cfg.hidden_dim, cfg.channels
        self.bias = MLP2(3, h, c, rng)
        self.mul = MLP2(3, h, c, rng) if cfg.mode == "multiplier_and_bias" else None

    def encode_bias(self, rel_pos) -> ag.Tensor:
        return self.bias(_rel_pos(rel_pos))

    def encode_mul(self, rel_pos) -> ag.Tensor:
        if self.mul is None:
            raise ValueError("multiplier is disabled in bias_only mode")
        return self.mul(_rel_pos(rel_pos))

    def forward(self, rel, rel_pos) -> ag.Tensor:
        return compose_relation(rel, rel_pos, self)


def _rel_pos(rel_pos) -> ag.Tensor:
    rel_pos = ag.as_tensor(rel_pos)
    if rel_pos.data.ndim != 2 or rel_pos.shape[1] != 3:
        raise ValueError(f"relative positions must be m x 3, got {rel_pos.shape}")
    return rel_pos


def encode_bias(rel_pos, encoder: PositionEncoding) -> ag.Tensor:
    return encoder.encode_bias(rel_pos)


def compose_relation(rel, rel_pos, encoder: PositionEncoding) -> ag.Tensor:
    rel = ag.as_tensor(rel)
    rel_pos = _rel_pos(rel_pos)
    if rel.shape[0] != rel_pos.shape[0] or rel.shape[1] != encoder.cfg.channels:
        raise ValueError(
            f"relation {rel.shape} does not match positions {rel_pos.shape} "
            f"with {encoder.cfg.channels} channels"
        )
    bias = encoder.encode_bias(rel_pos)
    if encoder.mul is None:
        return rel + bias
    return encoder.encode_mul(rel_pos) * rel + bias


def relative_positions(query_pos: np.ndarray, ref_pos: np.ndarray, neighbors) -> np.ndarray:
    """p_i - p_j for every (query i, reference j) edge of the table."""
    return query_pos[neighbors.row_ids] - ref_pos[neighbors.indices]
