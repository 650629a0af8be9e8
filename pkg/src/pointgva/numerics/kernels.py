"""Compiled row-segment reductions over CSR offsets.

``np.ufunc.reduceat`` along axis 0 is slow for many short segments; these
loops are linear in the number of entries. Segments must be non-empty.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _seg_sum(x, offsets):
    nseg = offsets.shape[0] - 1
    c = x.shape[1]
    out = np.zeros((nseg, c))
    for s in range(nseg):
        for i in range(offsets[s], offsets[s + 1]):
            for k in range(c):
                out[s, k] += x[i, k]
    return out


@numba.njit(cache=True)
def _seg_max(x, offsets):
    nseg = offsets.shape[0] - 1
    c = x.shape[1]
    out = np.empty((nseg, c))
    for s in range(nseg):
        a = offsets[s]
        for k in range(c):
            out[s, k] = x[a, k]
        for i in range(a + 1, offsets[s + 1]):
            for k in range(c):
                v = x[i, k]
                if v > out[s, k]:
                    out[s, k] = v
    return out


@numba.njit(cache=True)
def _seg_argmax(x, offsets):
    nseg = offsets.shape[0] - 1
    c = x.shape[1]
    out = np.empty((nseg, c), dtype=np.int64)
    best = np.empty(c)
    for s in range(nseg):
        a = offsets[s]
        for k in range(c):
            best[k] = x[a, k]
            out[s, k] = a
        for i in range(a + 1, offsets[s + 1]):
            for k in range(c):
                v = x[i, k]
                if v > best[k]:
                    best[k] = v
                    out[s, k] = i
    return out


def _as_rows(x: np.ndarray) -> np.ndarray:
    width = int(np.prod(x.shape[1:], dtype=np.int64))
    return np.ascontiguousarray(x, dtype=np.float64).reshape(x.shape[0], width)


def segment_sum_rows(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-segment column sums; empty segments give zeros."""
    return _seg_sum(_as_rows(x), offsets).reshape((offsets.shape[0] - 1,) + x.shape[1:])


def segment_max_rows(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return _seg_max(_as_rows(x), offsets).reshape((offsets.shape[0] - 1,) + x.shape[1:])


def segment_argmax_rows(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Row index of the first maximum in each (segment, column)."""
    return _seg_argmax(_as_rows(x), offsets).reshape((offsets.shape[0] - 1,) + x.shape[1:])
