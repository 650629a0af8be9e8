"""Pooling-latency benchmark on uniform synthetic clouds.

Each method is timed as pooling followed by unpooling back to the input
resolution. Grid-based methods use grid size ``(n * r) ** (-1 / 3)`` so
all three methods keep roughly the same fraction ``r`` of the points.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .geom import PointCloud
from .numerics.layers import uniform_init
from .pooling import fps_knn_pool, grid_knn_pool, grid_pool, interp_unpool, map_unpool
from .rng import make_rng
from .spatial import GridSpec

log = logging.getLogger(__name__)

METHODS = ("fps_knn", "grid", "grid_knn")
CSV_HEADER = ("method", "n", "r", "median_ms", "p25_ms", "p75_ms")


@dataclass(frozen=True)
class BenchSpec:
    n_values: tuple[int, ...] = (10_000, 40_000, 160_000)
    ratios: tuple[float, ...] = (1 / 2, 1 / 4, 1 / 8)
    repeats: int = 5
    warmup: int = 1
    seed: int = 0
    channels: int = 32
    k: int = 16
    methods: tuple[str, ...] = METHODS
    threads: int = 1

    def __post_init__(self):
        if self.repeats < 3:
            raise ValueError(f"repeats must be >= 3, got {self.repeats}")
        if self.warmup < 1:
            raise ValueError(f"warmup must be >= 1, got {self.warmup}")
        if any(n < 1 for n in self.n_values):
            raise ValueError("point counts must be positive")
        if any(not 0 < r <= 1 for r in self.ratios):
            raise ValueError("ratios must lie in (0, 1]")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")


@dataclass(frozen=True, order=True)
class BenchRow:
    method: str
    n: int
    r: float
    median_ms: float
    p25_ms: float
    p75_ms: float


@dataclass
class BenchTable:
    rows: list[BenchRow] = field(default_factory=list)
    threads: int = 1
    seed: int = 0
    version: str = __version__

    def sorted_rows(self) -> list[BenchRow]:
        return sorted(self.rows, key=lambda r: (r.method, r.n, r.r))

    def lookup(self, method: str, n: int, r: float) -> BenchRow:
        for row in self.rows:
            if row.method == method and row.n == n and math.isclose(row.r, r):
                return row
        raise KeyError((method, n, r))


def synth_uniform(n: int, c: int, seed: int) -> PointCloud:
    """``n`` points i.i.d. uniform in the unit cube with standard-normal features."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pos = make_rng(seed, "positions").random((n, 3))
    feat = make_rng(seed, "features").standard_normal((n, c))
    return PointCloud(pos, feat)


def grid_size_for(n: int, r: float) -> float:
    return (n * r) ** (-1.0 / 3.0)


def run_method(method: str, cloud: PointCloud, r: float, k: int, projection) -> np.ndarray:
    """Pool then unpool; returns the unpooled (n, c') features."""
    if method == "grid":
        res = grid_pool(cloud, GridSpec(grid_size_for(cloud.n, r)), projection)
        return map_unpool(res.features, res.map).data
    if method == "grid_knn":
        res = grid_knn_pool(cloud, GridSpec(grid_size_for(cloud.n, r)), k, projection)
    elif method == "fps_knn":
        res = fps_knn_pool(cloud, r, k, projection)
    else:
        raise ValueError(f"unknown method {method!r}")
    return interp_unpool(res.positions, res.features, cloud.positions).data


def _time(fn, warmup: int, repeats: int):
    """Returns (times_ms, first warmup output, last timed output)."""
    first = fn()
    for _ in range(warmup - 1):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return np.asarray(times), first, out


def bench_pooling(spec: BenchSpec) -> BenchTable:
    """Times every (method, n, r) cell; data generation is outside the timed region.

    Raises if a method's output differs between the warmup and the last
    timed repeat.
    """
    table = BenchTable(threads=spec.threads, seed=spec.seed)
    for n in spec.n_values:
        cloud = synth_uniform(n, spec.channels, spec.seed)
        projection = uniform_init(make_rng(spec.seed, "projection"),
                                  (spec.channels, spec.channels), spec.channels)
        for r in spec.ratios:
            for method in spec.methods:
                times, first, last = _time(
                    lambda: run_method(method, cloud, r, spec.k, projection),
                    spec.warmup, spec.repeats)
                if not np.array_equal(first, last):
                    raise RuntimeError(f"{method} output changed between repeats (n={n}, r={r})")
                p25, med, p75 = np.percentile(times, [25, 50, 75])
                table.rows.append(BenchRow(method, n, float(r), float(med), float(p25), float(p75)))
                log.info("%s n=%d r=%.4g median %.2f ms", method, n, r, med)
    return table


def emit_csv(table: BenchTable, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(f"# threads={table.threads} seed={table.seed} version={table.version}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in table.sorted_rows():
                writer.writerow([row.method, row.n, repr(row.r), repr(row.median_ms),
                                 repr(row.p25_ms), repr(row.p75_ms)])
    except OSError as exc:
        raise OSError(f"could not write benchmark CSV to {path}: {exc}") from exc


def read_csv(path) -> BenchTable:
    table = BenchTable()
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            meta = dict(kv.split("=", 1) for kv in first[1:].split())
            table.threads = int(meta.get("threads", 1))
            table.seed = int(meta.get("seed", 0))
            table.version = meta.get("version", "")
            header = next(csv.reader([fh.readline()]))
        else:
            header = next(csv.reader([first]))
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in csv.reader(fh):
            table.rows.append(BenchRow(rec[0], int(rec[1]), float(rec[2]), float(rec[3]),
                                       float(rec[4]), float(rec[5])))
    return table
