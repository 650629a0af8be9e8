"""U-Net backbone of grouped-vector-attention blocks, with segmentation and
classification heads.

Blocks are pre-norm residual: ``x + proj(attn(norm(x)))`` then
``x + ffn(norm(x))``. Encoder stage ``s`` pools with grid size
``base_grid * prod(grid_multipliers[:s + 1])``; the decoder unpools back
level by level and fuses the skip features.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .attention import AttentionConfig, GroupedVectorAttention
from .geom import NeighborTable, PointCloud
from .numerics import autograd as ag
from .numerics.layers import MLP2, BatchNorm, Linear, Module
from .pooling import Pool, PoolResult, unpool
from .spatial import GridSpec, grid_reference_sets, knn, shifted_grid_spec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POSENC_MODES = ("none", "bias_only", "multiplier_and_bias")


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 6
    num_classes: int = 20
    stem_dim: int = 48
    stem_groups: int = 6
    stem_depth: int = 1
    encoder_depths: tuple[int, ...] = (2, 2, 6, 2)
    decoder_depths: tuple[int, ...] = (1, 1, 1, 1)
    dims: tuple[int, ...] = (96, 192, 384, 384)
    groups: tuple[int, ...] = (12, 24, 48, 48)
    grid_multipliers: tuple[float, ...] = (3.0, 2.5, 2.5, 2.5)
    base_grid: float = 0.02
    k: int = 16
    attention: str = "gva"
    weight_encoding: str = "GL+N+A+L"
    relation: str = "subtract"
    reference_mode: str = "knn"
    attn_window: float = 2.0
    posenc: str = "multiplier_and_bias"
    value_pe: bool = False
    pooling: str = "grid"
    pool_ratio: float = 0.25
    pool_k: int = 16
    unpooling: str = "map"
    skip_fusion: str = "concat"
    seed: int = 0

    def __post_init__(self):
        for name in ("encoder_depths", "decoder_depths", "dims", "groups", "grid_multipliers"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        lengths = {len(self.encoder_depths), len(self.decoder_depths), len(self.dims),
                   len(self.groups), len(self.grid_multipliers)}
        if len(lengths) != 1:
            raise ValueError("depths, dims, groups and grid_multipliers must have equal lengths")
        for d, g in zip((self.stem_dim,) + self.dims, (self.stem_groups,) + self.groups):
            if g < 1 or d % g:
                raise ValueError(f"dim {d} is not divisible by {g} groups")
        if self.attention not in ("gva", "msa"):
            raise ValueError(f"unknown attention {self.attention!r}")
        if self.posenc not in POSENC_MODES:
            raise ValueError(f"unknown posenc {self.posenc!r}; expected one of {POSENC_MODES}")
        if self.skip_fusion not in ("concat", "add"):
            raise ValueError(f"unknown skip fusion {self.skip_fusion!r}")
        if self.unpooling not in ("map", "interp"):
            raise ValueError(f"unknown unpooling {self.unpooling!r}")
        if self.unpooling == "map" and self.pooling != "grid":
            raise ValueError("map unpooling requires grid pooling")
        if self.pooling not in Pool.METHODS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if not self.base_grid > 0:
            raise ValueError("base_grid must be positive")

    @classmethod
    def toy(cls, **overrides) -> "BackboneConfig":
        base = dict(stem_dim=8, stem_groups=2, encoder_depths=(1, 1, 1, 1),
                    decoder_depths=(1, 1, 1, 1), dims=(16, 32, 32, 32), groups=(4, 8, 8, 8))
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneConfig":
        data = dict(data.get("backbone", data))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BackboneConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_toml(self) -> str:
        lines = ["[backbone]"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"

    @property
    def n_stages(self) -> int:
        return len(self.dims)

    def stage_grid_sizes(self) -> list[float]:
        sizes, size = [], self.base_grid
        for mult in self.grid_multipliers:
            size *= mult
            sizes.append(size)
        return sizes

    def attention_config(self, dim: int, groups: int) -> AttentionConfig:
        if self.attention == "msa":
            return AttentionConfig(dim, groups, relation="multiply", weight_encoding="MSA",
                                   reference_mode=self.reference_mode, k=self.k)
        return AttentionConfig(dim, groups, relation=self.relation,
                               weight_encoding=self.weight_encoding,
                               reference_mode=self.reference_mode, k=self.k,
                               value_pe=self.value_pe)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


@dataclass
class Level:
    """One resolution of the U-Net: positions plus the tables built on them."""

    positions: np.ndarray
    grid_size: float
    pool: PoolResult | None = None
    tables: list[NeighborTable] = field(default_factory=list)


class Block(Module):
    def __init__(self, attn_cfg: AttentionConfig, rng: np.random.Generator,
                 posenc: str = "multiplier_and_bias"):
        dim = attn_cfg.channels
        self.norm1 = BatchNorm(dim)
        self.attn = GroupedVectorAttention(attn_cfg, rng, None if posenc == "none" else posenc)
        self.proj = Linear(dim, dim, rng)
        self.norm2 = BatchNorm(dim)
        self.ffn = MLP2(dim, dim, dim, rng, norm=False)

    def forward(self, x, positions: np.ndarray, neighbors: NeighborTable) -> ag.Tensor:
        x = ag.as_tensor(x)
        h = self.attn(self.norm1(x), positions, neighbors)
        x = x + self.proj(h)
        return x + self.ffn(self.norm2(x))


def block_forward(cloud: PointCloud, neighbors: NeighborTable, block: Block) -> PointCloud:
    out = block(cloud.features, cloud.positions, neighbors)
    return PointCloud(cloud.positions, out.data)


def reference_table(positions: np.ndarray, k: int, mode: str = "knn",
                    window: float | None = None, block_index: int = 0) -> NeighborTable:
    """kNN table (k clamped to the point count) or a shifted-grid window table."""
    if mode == "knn":
        return knn(positions, positions, min(k, positions.shape[0]))
    spec = shifted_grid_spec(GridSpec(window), block_index)
    return grid_reference_sets(positions, spec)


class Backbone(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator | None = None,
                 decoder: bool = True):
        self.cfg = cfg
        rng = rng if rng is not None else rng_mod.make_rng(cfg.seed, "init")
        att = cfg.attention_config
        self.stem = Linear(cfg.in_channels, cfg.stem_dim, rng)
        self.stem_norm = BatchNorm(cfg.stem_dim)
        self.stem_blocks = [Block(att(cfg.stem_dim, cfg.stem_groups), rng, cfg.posenc)
                            for _ in range(cfg.stem_depth)]
        level_dims = (cfg.stem_dim,) + cfg.dims
        level_groups = (cfg.stem_groups,) + cfg.groups
        self.pools, self.encoders, self.fuse, self.decoders = [], [], [], []
        for s in range(cfg.n_stages):
            self.pools.append(Pool(level_dims[s], cfg.dims[s], rng, cfg.pooling,
                                   cfg.pool_k, cfg.pool_ratio))
            self.encoders.append([Block(att(cfg.dims[s], cfg.groups[s]), rng, cfg.posenc)
                                  for _ in range(cfg.encoder_depths[s])])
        for s in range(cfg.n_stages if decoder else 0):
            # decoder s lifts level s + 1 back to level s
            up_dim, skip_dim = level_dims[s + 1], level_dims[s]
            if cfg.skip_fusion == "concat":
                self.fuse.append(Linear(up_dim + skip_dim, skip_dim, rng))
            else:
                self.fuse.append(Linear(up_dim, skip_dim, rng))
            self.decoders.append([Block(att(skip_dim, level_groups[s]), rng, cfg.posenc)
                                  for _ in range(cfg.decoder_depths[s])])

    @property
    def out_dim(self) -> int:
        return self.cfg.stem_dim

    def _tables(self, positions, grid_size, depth):
        cfg = self.cfg
        window = grid_size * cfg.attn_window
        if cfg.reference_mode == "knn":
            table = reference_table(positions, cfg.k)
            return [table] * depth
        return [reference_table(positions, cfg.k, "grid", window, b) for b in range(depth)]

    def encode(self, cloud: PointCloud):
        """Stem + encoder stages; returns (levels, per-level features)."""
        cfg = self.cfg
        if cloud.n == 0:
            raise ValueError("cannot run the backbone on an empty cloud")
        if cloud.c != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {cloud.c}")
        x = ag.relu(self.stem_norm(self.stem(ag.Tensor(cloud.features))))
        level = Level(cloud.positions, cfg.base_grid)
        level.tables = self._tables(level.positions, cfg.base_grid, len(self.stem_blocks))
        for block, table in zip(self.stem_blocks, level.tables):
            x = block(x, level.positions, table)
        levels, feats = [level], [x]
        for s, grid_size in enumerate(cfg.stage_grid_sizes()):
            res = self.pools[s](levels[-1].positions, x, grid_size)
            level = Level(res.positions, grid_size, res)
            level.tables = self._tables(level.positions, grid_size, len(self.encoders[s]))
            x = res.features
            for block, table in zip(self.encoders[s], level.tables):
                x = block(x, level.positions, table)
            levels.append(level)
            feats.append(x)
        return levels, feats

    def forward(self, cloud: PointCloud) -> ag.Tensor:
        cfg = self.cfg
        levels, feats = self.encode(cloud)
        x = feats[-1]
        for s in reversed(range(cfg.n_stages)):
            fine, coarse = levels[s], levels[s + 1]
            up = unpool(coarse.pool, x, fine.positions, cfg.unpooling)
            if cfg.skip_fusion == "concat":
                x = self.fuse[s](ag.concat_cols([up, feats[s]]))
            else:
                x = self.fuse[s](up) + feats[s]
            tables = fine.tables
            if len(tables) < len(self.decoders[s]):
                tables = self._tables(fine.positions, fine.grid_size, len(self.decoders[s]))
            for block, table in zip(self.decoders[s], tables):
                x = block(x, fine.positions, table)
        return x


class SegHead(Module):
    def __init__(self, in_dim: int, classes: int, rng: np.random.Generator):
        self.mlp = MLP2(in_dim, in_dim, classes, rng)

    def forward(self, features) -> ag.Tensor:
        return self.mlp(features)


class ClsHead(Module):
    """Global mean over points, then a two-layer MLP (no norm: a single row)."""

    def __init__(self, in_dim: int, classes: int, rng: np.random.Generator):
        self.mlp = MLP2(in_dim, in_dim, classes, rng, norm=False)

    def forward(self, features) -> ag.Tensor:
        features = ag.as_tensor(features)
        if features.shape[0] == 0:
            raise ValueError("classification head needs at least one point")
        return self.mlp(ag.mean_rows(features))


def seg_head(features, head: SegHead) -> ag.Tensor:
    return head(features)


def cls_head(features, head: ClsHead) -> ag.Tensor:
    return head(features)


class SegmentationNet(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else rng_mod.make_rng(cfg.seed, "init")
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng)
        self.head = SegHead(cfg.stem_dim, cfg.num_classes, rng)

    def forward(self, cloud: PointCloud) -> ag.Tensor:
        return self.head(self.backbone(cloud))


class ClassificationNet(Module):
    """Encoder only; logits from the deepest stage's features."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else rng_mod.make_rng(cfg.seed, "init")
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng, decoder=False)
        self.head = ClsHead(cfg.dims[-1], cfg.num_classes, rng)

    def forward(self, cloud: PointCloud) -> ag.Tensor:
        _, feats = self.backbone.encode(cloud)
        return self.head(feats[-1])


def unet_forward(cloud: PointCloud, cfg: BackboneConfig | Backbone) -> ag.Tensor:
    backbone = cfg if isinstance(cfg, Backbone) else Backbone(cfg)
    return backbone(cloud)


def count_params(obj) -> int:
    """Exact learnable scalar count of a module, or of the segmentation model for a config."""
    if isinstance(obj, BackboneConfig):
        obj = SegmentationNet(obj)
    return obj.n_params()


def stage_point_counts(backbone: Backbone, cloud: PointCloud) -> list[int]:
    levels, _ = backbone.encode(cloud)
    return [lv.positions.shape[0] for lv in levels]


def posenc_multiplier_params(model: Module) -> int:
    """Parameters held by every position-encoding multiplier MLP in ``model``."""
    total = 0
    stack = [model]
    seen = set()
    while stack:
        obj = stack.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        if isinstance(obj, GroupedVectorAttention) and obj.posenc is not None and obj.posenc.mul is not None:
            total += obj.posenc.mul.n_params()
        if isinstance(obj, Module):
            stack.extend(v for v in vars(obj).values() if isinstance(v, (Module, list)))
        elif isinstance(obj, list):
            stack.extend(v for v in obj if isinstance(v, (Module, list)))
    return total
