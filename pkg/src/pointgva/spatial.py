"""Spatial queries: kNN, farthest point sampling, grid partitions.

kNN uses uniform-grid bucketing with an expanding ring search; ties in
distance resolve to the lower index both here and in FPS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .geom import NeighborTable, PartitionMap, PointCloud

DEFAULT_K = 16
BASE_GRID_SIZE = 0.02


@dataclass(frozen=True)
class GridSpec:
    grid_size: float
    origin: tuple[float, float, float] | None = None
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.grid_size > 0:
            raise ValueError(f"grid_size must be positive, got {self.grid_size}")
        shift = tuple(float(s) for s in self.shift)
        if len(shift) != 3 or any(not 0.0 <= s < 1.0 for s in shift):
            raise ValueError(f"shift components must lie in [0, 1), got {self.shift}")
        object.__setattr__(self, "shift", shift)
        if self.origin is not None:
            object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    def shifted(self, shift) -> "GridSpec":
        if np.isscalar(shift):
            shift = (shift,) * 3
        return GridSpec(self.grid_size, self.origin, tuple(shift))

    def resolve_origin(self, positions: np.ndarray) -> np.ndarray:
        if self.origin is None:
            return positions.min(axis=0)
        return np.asarray(self.origin, dtype=np.float64)


def _positions(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.positions
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, 3))


# -- kNN ---------------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _worse(d1, i1, d2, i2):
    return d1 > d2 or (d1 == d2 and i1 > i2)


@numba.njit(cache=True)
def _heap_push(hd, hi, count, k, d, j):
    """Bounded max-heap on (distance, index); returns the new size."""
    if count < k:
        pos = count
        count += 1
        while pos > 0:
            parent = (pos - 1) >> 1
            if not _worse(d, j, hd[parent], hi[parent]):
                break
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        hd[pos] = d
        hi[pos] = j
        return count
    if not _worse(hd[0], hi[0], d, j):
        return count
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= k:
            break
        if child + 1 < k and _worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if not _worse(hd[child], hi[child], d, j):
            break
        hd[pos] = hd[child]
        hi[pos] = hi[child]
        pos = child
    hd[pos] = d
    hi[pos] = j
    return count


@numba.njit(cache=True)
def _knn_one(q, ref_sorted, k, lo, cell, dims, cell_start, sorted_idx, out_row):
    best_d = np.empty(k, dtype=np.float64)
    best_i = np.empty(k, dtype=np.int64)
    count = 0
    qc = np.empty(3, dtype=np.int64)
    # queries outside the box start from the nearest boundary cell
    for a in range(3):
        c = np.floor((q[a] - lo[a]) / cell)
        qc[a] = np.int64(min(max(c, 0.0), dims[a] - 1.0))
    r = 0
    while True:
        lo0 = max(qc[0] - r, 0)
        hi0 = min(qc[0] + r, dims[0] - 1)
        lo1 = max(qc[1] - r, 0)
        hi1 = min(qc[1] + r, dims[1] - 1)
        lo2 = max(qc[2] - r, 0)
        hi2 = min(qc[2] + r, dims[2] - 1)
        for cx in range(lo0, hi0 + 1):
            ex = cx == qc[0] - r or cx == qc[0] + r
            for cy in range(lo1, hi1 + 1):
                ey = ex or cy == qc[1] - r or cy == qc[1] + r
                for cz in range(lo2, hi2 + 1):
                    if not (ey or cz == qc[2] - r or cz == qc[2] + r):
                        continue
                    c = (cx * dims[1] + cy) * dims[2] + cz
                    for t in range(cell_start[c], cell_start[c + 1]):
                        dx = q[0] - ref_sorted[t, 0]
                        dy = q[1] - ref_sorted[t, 1]
                        dz = q[2] - ref_sorted[t, 2]
                        d = dx * dx + dy * dy + dz * dz
                        if count < k or d <= best_d[0]:
                            count = _heap_push(best_d, best_i, count, k, d, sorted_idx[t])
        covered = (
            qc[0] - r <= 0 and qc[0] + r >= dims[0] - 1
            and qc[1] - r <= 0 and qc[1] + r >= dims[1] - 1
            and qc[2] - r <= 0 and qc[2] + r >= dims[2] - 1
        )
        if covered:
            break
        if count == k:
            # distance from q to any unsearched cell; exhausted sides hold none
            bound = np.inf
            for a in range(3):
                if qc[a] - r > 0:
                    bound = min(bound, q[a] - (lo[a] + (qc[a] - r) * cell))
                if qc[a] + r < dims[a] - 1:
                    bound = min(bound, lo[a] + (qc[a] + r + 1) * cell - q[a])
            # margin absorbs rounding in the cell assignment of boundary points
            bound *= 1.0 - 1e-9
            if bound > 0 and best_d[0] < bound * bound:
                break
        r += 1
    # heap -> ascending (distance, index)
    for t in range(1, k):
        d, j = best_d[t], best_i[t]
        pos = t
        while pos > 0 and _worse(best_d[pos - 1], best_i[pos - 1], d, j):
            best_d[pos] = best_d[pos - 1]
            best_i[pos] = best_i[pos - 1]
            pos -= 1
        best_d[pos] = d
        best_i[pos] = j
    for t in range(k):
        out_row[t] = best_i[t]


@numba.njit(cache=True)
def _knn_serial(query, visit, ref_sorted, k, lo, cell, dims, cell_start, sorted_idx, out):
    for t in range(visit.shape[0]):
        i = visit[t]
        _knn_one(query[i], ref_sorted, k, lo, cell, dims, cell_start, sorted_idx, out[i])


@numba.njit(cache=True, parallel=True)
def _knn_parallel(query, visit, ref_sorted, k, lo, cell, dims, cell_start, sorted_idx, out):
    for t in numba.prange(visit.shape[0]):
        i = visit[t]
        _knn_one(query[i], ref_sorted, k, lo, cell, dims, cell_start, sorted_idx, out[i])


def _bucket_cell_size(extent: np.ndarray, target_cells: int) -> float:
    """Largest-resolution cell size whose dense grid stays within target_cells."""
    hi = float(extent.max()) + 1.0
    lo = hi * 1e-12
    if np.prod(np.floor(extent / lo) + 1) <= target_cells:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if np.prod(np.floor(extent / mid) + 1) <= target_cells:
            hi = mid
        else:
            lo = mid
    return hi


def knn(query, reference, k: int = DEFAULT_K, threads: int = 1) -> NeighborTable:
    """k nearest reference points for every query point, sorted by (distance, index)."""
    q = _positions(query)
    ref = _positions(reference)
    n_ref = ref.shape[0]
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if n_ref < k:
        raise ValueError(f"knn needs k={k} reference points but only n={n_ref} are available")
    out = np.empty((q.shape[0], k), dtype=np.int64)
    if q.shape[0] == 0:
        return NeighborTable.from_fixed(out, n_ref)

    lo = ref.min(axis=0)
    extent = ref.max(axis=0) - lo
    target = max(1, (2 * n_ref) // max(k, 1))
    cell = _bucket_cell_size(extent, target)
    dims = (np.floor(extent / cell).astype(np.int64) + 1)
    coords = np.minimum(np.floor((ref - lo) / cell).astype(np.int64), dims - 1)
    lin = (coords[:, 0] * dims[1] + coords[:, 1]) * dims[2] + coords[:, 2]
    sorted_idx = np.argsort(lin, kind="stable").astype(np.int64)
    cell_start = np.zeros(int(np.prod(dims)) + 1, dtype=np.int64)
    np.cumsum(np.bincount(lin, minlength=int(np.prod(dims))), out=cell_start[1:])

    ref_sorted = np.ascontiguousarray(ref[sorted_idx])
    # visiting queries in bucket order keeps the scanned cells cache-resident
    qcoords = np.clip(np.floor((q - lo) / cell).astype(np.int64), 0, dims - 1)
    visit = np.argsort((qcoords[:, 0] * dims[1] + qcoords[:, 1]) * dims[2] + qcoords[:, 2],
                       kind="stable").astype(np.int64)

    kernel = _knn_parallel if threads > 1 else _knn_serial
    if threads > 1:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    kernel(np.ascontiguousarray(q), visit, ref_sorted, k, lo, cell, dims,
           cell_start, sorted_idx, out)
    return NeighborTable.from_fixed(out, n_ref)


# -- farthest point sampling -------------------------------------------------


_FPS_LANES = 8


@numba.njit(cache=True)
def _fps_kernel(x, y, z, m, start, out):
    n = x.shape[0]
    # selected points hold -1 so they never win the argmax again
    min_d = np.full(n, np.inf)
    # the argmax runs in independent lanes (j mod 8) to break the compare chain;
    # each lane keeps its first maximum and lanes merge by (value, lowest index)
    lane_d = np.empty(_FPS_LANES)
    lane_i = np.empty(_FPS_LANES, dtype=np.int64)
    full = n - n % _FPS_LANES
    cur = start
    out[0] = cur
    min_d[cur] = -1.0
    for s in range(1, m):
        px = x[cur]
        py = y[cur]
        pz = z[cur]
        for lane in range(_FPS_LANES):
            lane_d[lane] = -np.inf
            lane_i[lane] = 0
        for j0 in range(0, full, _FPS_LANES):
            for lane in range(_FPS_LANES):
                j = j0 + lane
                dx = x[j] - px
                dy = y[j] - py
                dz = z[j] - pz
                d = dx * dx + dy * dy + dz * dz
                md = min_d[j]
                md = d if d < md else md
                min_d[j] = md
                if md > lane_d[lane]:
                    lane_d[lane] = md
                    lane_i[lane] = j
        best_d = -np.inf
        best = n
        for j in range(full, n):
            dx = x[j] - px
            dy = y[j] - py
            dz = z[j] - pz
            d = dx * dx + dy * dy + dz * dz
            md = min_d[j]
            md = d if d < md else md
            min_d[j] = md
            if md > best_d:
                best_d = md
                best = j
        for lane in range(_FPS_LANES):
            ld = lane_d[lane]
            if ld > best_d or (ld == best_d and lane_i[lane] < best):
                best_d = ld
                best = lane_i[lane]
        cur = best
        out[s] = cur
        min_d[cur] = -1.0


def fps(cloud, m: int, start: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; returns ``m`` distinct indices."""
    pos = np.ascontiguousarray(_positions(cloud))
    n = pos.shape[0]
    if m > n:
        raise ValueError(f"cannot sample m={m} points from a cloud of n={n}")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range for n={n}")
    out = np.empty(m, dtype=np.int64)
    x, y, z = (np.ascontiguousarray(pos[:, a]) for a in range(3))
    _fps_kernel(x, y, z, m, start, out)
    return out


# -- grid partitions ---------------------------------------------------------


def lattice_coords(positions: np.ndarray, spec: GridSpec) -> np.ndarray:
    origin = spec.resolve_origin(positions)
    shift = np.asarray(spec.shift) * spec.grid_size
    return np.floor((positions - origin - shift) / spec.grid_size).astype(np.int64)


def grid_partition(cloud, spec: GridSpec) -> PartitionMap:
    """Assign points to non-overlapping grid cells, ids dense by first occurrence."""
    pos = _positions(cloud)
    if pos.shape[0] == 0:
        raise ValueError("cannot partition an empty cloud")
    coords = lattice_coords(pos, spec)
    coords -= coords.min(axis=0)
    span = coords.max(axis=0) + 1
    key = (coords[:, 0] * span[1] + coords[:, 1]) * span[2] + coords[:, 2]
    _, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    rank = np.empty(first.shape[0], dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.shape[0])
    return PartitionMap.from_cell_ids(rank[inverse.reshape(-1)])


def grid_reference_sets(cloud, spec: GridSpec) -> NeighborTable:
    """Reference set of each point = all members of its own grid cell."""
    part = grid_partition(cloud, spec)
    counts = np.diff(part.member_offsets)[part.cell_of]
    offsets = np.zeros(part.n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    starts = part.member_offsets[part.cell_of]
    # edge e of row i reads order[starts[i] + (e - offsets[i])]
    rows = np.repeat(np.arange(part.n), counts)
    flat = part.order[starts[rows] + np.arange(offsets[-1]) - offsets[rows]]
    return NeighborTable(offsets, flat, part.n)


def shifted_grid_spec(spec: GridSpec, block_index: int) -> GridSpec:
    """Alternate between the plain grid and a half-cell shifted grid."""
    return spec.shifted(0.5 if block_index % 2 else 0.0)
