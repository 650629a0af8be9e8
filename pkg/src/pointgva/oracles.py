"""Slow reference implementations used to cross-check the fast kernels.

Nothing here calls into :mod:`spatial`, :mod:`pooling` or the attention
aggregation code; every result is recomputed from the definition.
"""

from __future__ import annotations

import math

import numpy as np


def sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances from each row of ``b`` to point ``a`` (same op order as the kernels)."""
    dx = a[0] - b[:, 0]
    dy = a[1] - b[:, 1]
    dz = a[2] - b[:, 2]
    return dx * dx + dy * dy + dz * dz


def brute_knn(query: np.ndarray, reference: np.ndarray, k: int) -> np.ndarray:
    """All-pairs scan; rows sorted by (distance, index)."""
    out = np.empty((query.shape[0], k), dtype=np.int64)
    idx = np.arange(reference.shape[0])
    for i, q in enumerate(query):
        d = sq_dist(q, reference)
        out[i] = np.lexsort((idx, d))[:k]
    return out


def greedy_fps(positions: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    n = positions.shape[0]
    chosen = [start]
    taken = np.zeros(n, dtype=bool)
    taken[start] = True
    min_d = np.full(n, np.inf)
    for _ in range(1, m):
        last = positions[chosen[-1]]
        dx = positions[:, 0] - last[0]
        dy = positions[:, 1] - last[1]
        dz = positions[:, 2] - last[2]
        min_d = np.minimum(min_d, dx * dx + dy * dy + dz * dz)
        cand = np.where(taken, -np.inf, min_d)
        nxt = int(np.argmax(cand))  # argmax returns the first maximum
        chosen.append(nxt)
        taken[nxt] = True
    return np.asarray(chosen, dtype=np.int64)


def fps_prefix_violations(positions: np.ndarray, picks: np.ndarray) -> int:
    """Count steps where the pick does not attain the max min-distance."""
    bad = 0
    for s in range(1, len(picks)):
        prev = positions[picks[:s]]
        d = ((positions[:, None, :] - prev[None]) ** 2).sum(-1).min(axis=1)
        d[picks[:s]] = -np.inf
        if d[picks[s]] < d.max():
            bad += 1
    return bad


def loop_partition(positions: np.ndarray, grid_size: float, origin=None, shift=(0.0, 0.0, 0.0)):
    origin = positions.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64) * grid_size
    ids: dict[tuple, int] = {}
    cell_of = np.empty(positions.shape[0], dtype=np.int64)
    for i, p in enumerate(positions):
        key = tuple(int(math.floor(x)) for x in (p - origin - shift) / grid_size)
        cell_of[i] = ids.setdefault(key, len(ids))
    members = [[] for _ in ids]
    for i, c in enumerate(cell_of):
        members[c].append(i)
    return cell_of, members


def loop_grid_pool(positions, features, grid_size, projection=None, origin=None):
    cell_of, members = loop_partition(positions, grid_size, origin)
    proj = features if projection is None else features @ projection
    pooled = np.empty((len(members), proj.shape[1]))
    centers = np.empty((len(members), 3))
    for j, mem in enumerate(members):
        pooled[j] = proj[mem[0]]
        for i in mem[1:]:
            pooled[j] = np.maximum(pooled[j], proj[i])
        centers[j] = positions[mem].sum(axis=0) / len(mem)
    return centers, pooled, cell_of


def loop_knn_pool(positions, features, centers, k, projection=None):
    proj = features if projection is None else features @ projection
    nbrs = brute_knn(centers, positions, k)
    pooled = np.array([proj[row].max(axis=0) for row in nbrs])
    return pooled, nbrs


def loop_interp(pooled_positions, pooled_features, positions, neighbors=3, eps=1e-8):
    kk = min(neighbors, pooled_positions.shape[0])
    nbrs = brute_knn(positions, pooled_positions, kk)
    out = np.zeros((positions.shape[0], pooled_features.shape[1]))
    for i, row in enumerate(nbrs):
        w = np.array([1.0 / (math.dist(positions[i], pooled_positions[j]) + eps) for j in row])
        w /= w.sum()
        for wj, j in zip(w, row):
            out[i] += wj * pooled_features[j]
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=0))
    return e / e.sum(axis=0)


def dense_scalar_attention(q, k, v, rows: list) -> np.ndarray:
    """Full n x n logits with -inf outside each reference set."""
    n, ch = q.shape
    logits = (q @ k.T) / math.sqrt(ch)
    mask = np.full((n, k.shape[0]), -np.inf)
    for i, row in enumerate(rows):
        mask[i, list(row)] = 0.0
    logits = logits + mask
    logits -= logits.max(axis=1, keepdims=True)
    a = np.exp(logits)
    a /= a.sum(axis=1, keepdims=True)
    return a @ v


def dense_multi_head_attention(q, k, v, rows: list, heads: int) -> np.ndarray:
    w = q.shape[1] // heads
    return np.concatenate(
        [dense_scalar_attention(q[:, h * w:(h + 1) * w], k[:, h * w:(h + 1) * w],
                                v[:, h * w:(h + 1) * w], rows) for h in range(heads)],
        axis=1,
    )


def loop_grouped_attention(weights: np.ndarray, v: np.ndarray, rows: list) -> np.ndarray:
    """Aggregate with per-edge group logits ``weights`` (edges in row order)."""
    n, c = len(rows), v.shape[1]
    g = weights.shape[1]
    cg = c // g
    out = np.zeros((n, c))
    e = 0
    for i, row in enumerate(rows):
        block = weights[e:e + len(row)]
        a = _softmax(block)
        for t, j in enumerate(row):
            for l in range(g):
                for m in range(cg):
                    out[i, l * cg + m] += a[t, l] * v[j, l * cg + m]
        e += len(row)
    return out


def loop_relation(q, k, rows: list, kind: str = "subtract") -> np.ndarray:
    out = []
    for i, row in enumerate(rows):
        for j in row:
            out.append(q[i] - k[j] if kind == "subtract" else q[i] * k[j])
    return np.asarray(out).reshape(-1, q.shape[1])
