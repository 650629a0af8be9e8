"""Core point-cloud containers: clouds, ragged neighbor tables, partition maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PointCloud:
    """Positions (n x 3, meters) with per-point feature rows (n x c)."""

    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        feat = np.array(self.features, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be n x 3, got {pos.shape}")
        if feat.ndim == 1 and feat.shape[0] == 0:
            feat = feat.reshape(0, 0)
        if feat.ndim != 2:
            raise ValueError(f"features must be 2-D, got {feat.shape}")
        if feat.shape[0] != pos.shape[0]:
            raise ValueError(
                f"row count mismatch: positions {pos.shape[0]}, features {feat.shape[0]}"
            )
        pos.setflags(write=False)
        feat.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feat)

    @classmethod
    def from_positions(cls, positions, channels: int = 0) -> "PointCloud":
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        return cls(positions, np.zeros((positions.shape[0], channels)))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def c(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def with_features(self, features) -> "PointCloud":
        return PointCloud(self.positions, features)

    def permuted(self, perm) -> "PointCloud":
        perm = np.asarray(perm)
        return PointCloud(self.positions[perm], self.features[perm])

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self.positions + np.asarray(offset, dtype=np.float64), self.features)


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)
    bad_rows: list[int] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate(cloud: PointCloud) -> ValidationReport:
    """Check shape and finiteness invariants; never raises."""
    violations = []
    bad_rows: set[int] = set()
    pos, feat = cloud.positions, cloud.features
    if pos.shape[0] != feat.shape[0]:
        violations.append(f"row count mismatch: {pos.shape[0]} vs {feat.shape[0]}")
    for name, arr in (("positions", pos), ("features", feat)):
        if arr.size == 0:
            continue
        rows = np.flatnonzero(~np.isfinite(arr).all(axis=1))
        for r in rows:
            violations.append(f"non-finite {name} at row {int(r)}")
        bad_rows.update(int(r) for r in rows)
    return ValidationReport(not violations, violations, sorted(bad_rows))


@dataclass(frozen=True)
class NeighborTable:
    """CSR layout of per-query reference sets.

    Row ``i`` holds ``indices[offsets[i]:offsets[i + 1]]``, indices into the
    reference cloud (which may differ from the query cloud).
    """

    offsets: np.ndarray
    indices: np.ndarray
    n_reference: int

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=np.int64)
        indices = np.array(self.indices, dtype=np.int64)
        if offsets.ndim != 1 or offsets.shape[0] < 1 or offsets[0] != 0:
            raise ValueError("offsets must be a 1-D vector starting at 0")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        if offsets[-1] != indices.shape[0]:
            raise ValueError(
                f"offsets end at {offsets[-1]} but there are {indices.shape[0]} indices"
            )
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_reference):
            raise ValueError(f"index out of range for reference size {self.n_reference}")
        offsets.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "indices", indices)

    @classmethod
    def from_fixed(cls, idx: np.ndarray, n_reference: int) -> "NeighborTable":
        idx = np.asarray(idx, dtype=np.int64)
        n, k = idx.shape
        return cls(np.arange(n + 1, dtype=np.int64) * k, idx.reshape(-1), n_reference)

    @classmethod
    def from_lists(cls, rows, n_reference: int) -> "NeighborTable":
        counts = [len(r) for r in rows]
        offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        flat = np.concatenate([np.asarray(r, dtype=np.int64) for r in rows]) if rows else []
        return cls(offsets, np.asarray(flat, dtype=np.int64), n_reference)

    @property
    def n_query(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def row_ids(self) -> np.ndarray:
        """Query row of every stored edge."""
        return np.repeat(np.arange(self.n_query, dtype=np.int64), self.counts)

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    def as_fixed(self) -> np.ndarray:
        counts = self.counts
        if counts.size and np.any(counts != counts[0]):
            raise ValueError("rows have different lengths")
        k = int(counts[0]) if counts.size else 0
        return self.indices.reshape(self.n_query, k)


@dataclass(frozen=True)
class PartitionMap:
    """Dense point-to-cell assignment; ``members`` is stored in CSR form.

    ``order[member_offsets[j]:member_offsets[j + 1]]`` lists the points of
    cell ``j`` in ascending point index.
    """

    cell_of: np.ndarray
    n_cells: int
    order: np.ndarray
    member_offsets: np.ndarray

    @classmethod
    def from_cell_ids(cls, cell_of) -> "PartitionMap":
        cell_of = np.array(cell_of, dtype=np.int64)
        n_cells = int(cell_of.max()) + 1 if cell_of.size else 0
        counts = np.bincount(cell_of, minlength=n_cells)
        if np.any(counts == 0):
            raise ValueError("cell ids must be dense")
        offsets = np.zeros(n_cells + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        order = np.argsort(cell_of, kind="stable").astype(np.int64)
        for arr in (cell_of, order, offsets):
            arr.setflags(write=False)
        return cls(cell_of, n_cells, order, offsets)

    @property
    def n(self) -> int:
        return self.cell_of.shape[0]

    @property
    def members(self) -> list[np.ndarray]:
        return [self.order[a:b] for a, b in zip(self.member_offsets[:-1], self.member_offsets[1:])]

    def cell_members(self, j: int) -> np.ndarray:
        return self.order[self.member_offsets[j]:self.member_offsets[j + 1]]

    def as_neighbor_table(self) -> NeighborTable:
        """Cells as query rows, members as references."""
        return NeighborTable(self.member_offsets, self.order, self.n)
