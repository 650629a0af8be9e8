"""Point-cloud pooling and unpooling.

Grid pooling fuses every non-overlapping grid cell into one point
(max of projected features, mean of positions) and unpools by copying each
cell's feature back to its members. The sampling-based baselines (FPS-kNN,
Grid-kNN) gather k nearest input points per sampled center instead, so their
receptive fields may overlap; they unpool by inverse-distance interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import NeighborTable, PartitionMap, PointCloud
from .numerics import autograd as ag
from .numerics.autograd import Param
from .numerics.kernels import segment_sum_rows
from .numerics.layers import BatchNorm, Module, uniform_init
from .spatial import GridSpec, fps, grid_partition, knn

INTERP_EPS = 1e-8


@dataclass
class PoolResult:
    positions: np.ndarray
    features: ag.Tensor
    map: PartitionMap | None = None
    neighbors: NeighborTable | None = None
    centers: np.ndarray | None = None
    projection: Param | None = None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def pooled(self) -> PointCloud:
        return PointCloud(self.positions, self.features.data)


def _inputs(cloud, features):
    pos = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if features is None:
        if not isinstance(cloud, PointCloud):
            raise ValueError("features are required when pooling bare positions")
        features = cloud.features
    features = ag.as_tensor(features)
    if features.shape[0] != pos.shape[0]:
        raise ValueError(f"{pos.shape[0]} positions but {features.shape[0]} feature rows")
    return pos, features


def _project(features, projection):
    return features if projection is None else ag.linear(features, projection)


def _segment_mean(values: np.ndarray, order: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return segment_sum_rows(values[order], offsets) / np.diff(offsets)[:, None]


def grid_pool(cloud, spec: GridSpec, projection: Param | None = None,
              features=None) -> PoolResult:
    """Per-cell channelwise max of ``f @ U`` and mean position."""
    pos, feats = _inputs(cloud, features)
    if pos.shape[0] == 0:
        raise ValueError("cannot pool an empty cloud")
    part = grid_partition(pos, spec)
    projected = _project(feats, projection)
    pooled = ag.segment_max(ag.gather_rows(projected, part.order), part.member_offsets)
    centers = _segment_mean(pos, part.order, part.member_offsets)
    return PoolResult(centers, pooled, map=part, projection=projection)


def map_unpool(pooled_features, partition: PartitionMap) -> ag.Tensor:
    """Copy each cell's pooled row to every member point."""
    pooled_features = ag.as_tensor(pooled_features)
    if pooled_features.shape[0] != partition.n_cells:
        raise ValueError(
            f"{pooled_features.shape[0]} pooled rows for a partition of {partition.n_cells} cells"
        )
    return ag.gather_rows(pooled_features, partition.cell_of)


def _knn_pool(pos, feats, centers, k, projection):
    if k > pos.shape[0]:
        raise ValueError(f"pooling needs k={k} input points but only n={pos.shape[0]} exist")
    nbr = knn(centers, pos, k)
    projected = _project(feats, projection)
    pooled = ag.segment_max(ag.gather_rows(projected, nbr.indices), nbr.offsets)
    return nbr, pooled


def fps_knn_pool(cloud, ratio: float, k: int, projection: Param | None = None,
                 features=None, start: int = 0) -> PoolResult:
    """Sample ceil(n * ratio) centers by FPS; each max-pools its k nearest inputs."""
    pos, feats = _inputs(cloud, features)
    m = math.ceil(pos.shape[0] * ratio)
    if m < 1:
        raise ValueError(f"ratio {ratio} leaves no points to sample from n={pos.shape[0]}")
    if k > pos.shape[0]:
        raise ValueError(f"pooling needs k={k} input points but only n={pos.shape[0]} exist")
    idx = fps(pos, m, start)
    centers = pos[idx]
    nbr, pooled = _knn_pool(pos, feats, centers, k, projection)
    return PoolResult(centers, pooled, neighbors=nbr, centers=idx, projection=projection)


def grid_knn_pool(cloud, spec: GridSpec, k: int, projection: Param | None = None,
                  features=None) -> PoolResult:
    """One center per non-empty cell (member centroid); max-pools its k nearest inputs."""
    pos, feats = _inputs(cloud, features)
    if pos.shape[0] == 0:
        raise ValueError("cannot pool an empty cloud")
    if k > pos.shape[0]:
        raise ValueError(f"pooling needs k={k} input points but only n={pos.shape[0]} exist")
    part = grid_partition(pos, spec)
    centers = _segment_mean(pos, part.order, part.member_offsets)
    nbr, pooled = _knn_pool(pos, feats, centers, k, projection)
    return PoolResult(centers, pooled, map=part, neighbors=nbr, projection=projection)


def interpolation_weights(pooled_positions, positions, neighbors: int = 3):
    """Inverse-distance weights of the nearest pooled points, rows summing to 1."""
    pooled_positions = np.asarray(pooled_positions, dtype=np.float64)
    if pooled_positions.shape[0] == 0:
        raise ValueError("cannot interpolate from an empty pooled cloud")
    kk = min(neighbors, pooled_positions.shape[0])
    nbr = knn(positions, pooled_positions, kk)
    diff = np.asarray(positions)[nbr.row_ids] - pooled_positions[nbr.indices]
    w = 1.0 / (np.sqrt((diff * diff).sum(axis=1)) + INTERP_EPS)
    w /= segment_sum_rows(w, nbr.offsets)[nbr.row_ids]
    return nbr, w


def interp_unpool(pooled_positions, pooled_features, positions, neighbors: int = 3) -> ag.Tensor:
    nbr, w = interpolation_weights(pooled_positions, positions, neighbors)
    src = ag.gather_rows(pooled_features, nbr.indices)
    return ag.segment_sum(ag.row_scale(src, w), nbr.offsets)


def unpool(result: PoolResult, pooled_features, positions, method: str = "map") -> ag.Tensor:
    if method == "map":
        if result.map is None or result.neighbors is not None:
            raise ValueError("map unpooling needs a non-overlapping grid partition")
        return map_unpool(pooled_features, result.map)
    if method == "interp":
        return interp_unpool(result.positions, pooled_features, positions)
    raise ValueError(f"unknown unpooling method {method!r}")


class Pool(Module):
    """Learnable pooling stage: projection U, pooling, then norm + ReLU."""

    METHODS = ("grid", "fps_knn", "grid_knn")

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 method: str = "grid", k: int = 16, ratio: float = 0.25):
        if method not in self.METHODS:
            raise ValueError(f"unknown pooling method {method!r}; expected one of {self.METHODS}")
        self.method, self.k, self.ratio = method, k, ratio
        self.projection = Param(uniform_init(rng, (in_dim, out_dim), in_dim), "U")
        self.norm = BatchNorm(out_dim)

    def forward(self, positions: np.ndarray, features, grid_size: float) -> PoolResult:
        n = positions.shape[0]
        k = min(self.k, n)
        if self.method == "grid":
            res = grid_pool(positions, GridSpec(grid_size), self.projection, features)
        elif self.method == "grid_knn":
            res = grid_knn_pool(positions, GridSpec(grid_size), k, self.projection, features)
        else:
            res = fps_knn_pool(positions, self.ratio, k, self.projection, features)
        res.features = ag.relu(self.norm(res.features))
        return res
