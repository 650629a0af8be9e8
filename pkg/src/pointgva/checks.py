"""Randomized equivalence and gradient suites.

Each suite draws fresh instances from a seeded generator and reports the
worst error seen. The CLI and the acceptance tests both run these.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracles
from .bench import grid_size_for, synth_uniform
from .attention import (
    AttentionConfig,
    GroupedVectorAttention,
    grouped_aggregate,
    gva,
    make_weight_encoding,
    multi_head_attention,
    vector_attention,
)
from .geom import NeighborTable, PointCloud
from .network import ClsHead, SegHead
from .numerics import autograd as ag
from .numerics.autograd import Param
from .numerics.gradcheck import grad_check
from .numerics.kernels import segment_sum_rows
from .numerics.layers import MLP2, GroupedLinear, Linear, MSAEncoding
from .pooling import fps_knn_pool, grid_knn_pool, grid_pool, interp_unpool
from .rng import make_rng
from .spatial import GridSpec, fps, grid_partition, grid_reference_sets, knn, shifted_grid_spec


@dataclass
class CheckResult:
    name: str
    trials: int
    max_error: float
    tol: float
    seconds: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return (f"{status} {self.name}: max error {self.max_error:.3e} (tol {self.tol:.0e}) "
                f"over {self.trials} trials in {self.seconds:.2f}s{extra}")


def random_reference_sets(rng: np.random.Generator, n: int, max_refs: int = 16) -> NeighborTable:
    """Ragged, non-empty, duplicate-free reference sets over ``n`` points."""
    rows = []
    for _ in range(n):
        m = int(rng.integers(1, min(n, max_refs) + 1))
        rows.append(rng.choice(n, size=m, replace=False))
    return NeighborTable.from_lists(rows, n)


def _rows(nbr: NeighborTable) -> list:
    return [nbr.row(i) for i in range(nbr.n_query)]


def _attention_instance(rng, channels=(4, 8, 16), n_max: int = 64):
    n = int(rng.integers(1, n_max + 1))
    c = int(rng.choice(channels))
    q, k, v = (rng.standard_normal((n, c)) for _ in range(3))
    return n, c, q, k, v, random_reference_sets(rng, n)


# -- equivalence suites -----------------------------------------------------------------


def equiv_gva_va(trials: int = 100, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """GVA with one group per channel against per-channel vector attention."""
    rng = make_rng(seed, "gva-va")
    t0, worst = time.perf_counter(), 0.0
    variants = ("L", "GL", "L+N+A+L", "GL+N+A+L")
    for t in range(trials):
        n, c, q, k, v, nbr = _attention_instance(rng)
        enc = make_weight_encoding(variants[t % len(variants)], c, c, rng)
        a = gva(q, k, v, nbr, enc, c).data
        b = vector_attention(q, k, v, nbr, enc).data
        logits = enc(ag.as_tensor(oracles.loop_relation(q, k, _rows(nbr)))).data
        ref = oracles.loop_grouped_attention(logits, v, _rows(nbr))
        worst = max(worst, float(np.abs(a - b).max()), float(np.abs(a - ref).max()))
    return CheckResult("gva-va", trials, worst, tol, time.perf_counter() - t0)


def equiv_gva_msa(trials: int = 100, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """GVA with the fixed block-sum encoding and product relation against multi-head attention."""
    rng = make_rng(seed, "gva-msa")
    t0, worst = time.perf_counter(), 0.0
    for _ in range(trials):
        n, c, q, k, v, nbr = _attention_instance(rng)
        divisors = [g for g in range(1, c + 1) if c % g == 0]
        g = int(rng.choice(divisors))
        a = gva(q, k, v, nbr, MSAEncoding(c, g), g, relation_kind="multiply").data
        b = multi_head_attention(q, k, v, nbr, heads=g).data
        ref = oracles.dense_multi_head_attention(q, k, v, _rows(nbr), g)
        worst = max(worst, float(np.abs(a - b).max()), float(np.abs(a - ref).max()))
    return CheckResult("gva-msa", trials, worst, tol, time.perf_counter() - t0)


def _random_positions(rng, n: int) -> np.ndarray:
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return rng.random((n, 3))
    if kind == 1:  # coarse lattice, many exact distance ties
        return rng.integers(0, 6, size=(n, 3)).astype(np.float64) * 0.25
    if kind == 2:  # anisotropic slab
        return rng.random((n, 3)) * np.array([10.0, 1.0, 0.01])
    return rng.standard_normal((n, 3)) * 5.0


def equiv_knn_brute(trials: int = 50, seed: int = 0, n_max: int = 2000) -> CheckResult:
    """Mismatch count of grid-bucketed kNN against the all-pairs scan (must be 0)."""
    rng = make_rng(seed, "knn")
    t0, bad = time.perf_counter(), 0
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        k = int(rng.integers(1, min(n, 32) + 1))
        ref = _random_positions(rng, n)
        query = ref if rng.random() < 0.5 else _random_positions(rng, int(rng.integers(1, 200)))
        got = knn(query, ref, k).as_fixed()
        bad += int(np.sum(got != oracles.brute_knn(query, ref, k)))
    return CheckResult("knn-brute", trials, float(bad), 0.0, time.perf_counter() - t0,
                       "(error = mismatched indices)")


def equiv_fps_greedy(trials: int = 50, seed: int = 0, n_max: int = 500) -> CheckResult:
    """Mismatch count of the FPS kernel against the greedy loop (must be 0)."""
    rng = make_rng(seed, "fps")
    t0, bad = time.perf_counter(), 0
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, n + 1))
        start = int(rng.integers(0, n))
        pos = _random_positions(rng, n)
        got = fps(pos, m, start)
        bad += int(np.sum(got != oracles.greedy_fps(pos, m, start)))
    return CheckResult("fps-greedy", trials, float(bad), 0.0, time.perf_counter() - t0,
                       "(error = mismatched picks)")


def equiv_pool_oracle(trials: int = 50, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Grid, Grid-kNN and FPS-kNN pooling (and interpolation) against loop oracles."""
    rng = make_rng(seed, "pool")
    t0, worst = time.perf_counter(), 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 400))
        c = int(rng.integers(1, 9))
        pos = _random_positions(rng, n)
        feats = rng.standard_normal((n, c))
        proj = rng.standard_normal((c, int(rng.integers(1, 9))))
        extent = float(np.ptp(pos, axis=0).max()) or 1.0
        gs = extent * float(rng.uniform(0.05, 0.6))
        k = int(rng.integers(1, min(n, 16) + 1))
        cloud = PointCloud(pos, feats)

        centers, pooled, cell_of = oracles.loop_grid_pool(pos, feats, gs, proj)
        res = grid_pool(cloud, GridSpec(gs), Param(proj))
        if not np.array_equal(res.map.cell_of, cell_of):
            worst = math.inf
        worst = max(worst, float(np.abs(res.features.data - pooled).max()),
                    float(np.abs(res.positions - centers).max()))

        res = grid_knn_pool(cloud, GridSpec(gs), k, Param(proj))
        want, _ = oracles.loop_knn_pool(pos, feats, centers, k, proj)
        worst = max(worst, float(np.abs(res.features.data - want).max()),
                    float(np.abs(res.positions - centers).max()))

        ratio = float(rng.uniform(0.05, 1.0))
        res = fps_knn_pool(cloud, ratio, k, Param(proj))
        idx = oracles.greedy_fps(pos, math.ceil(n * ratio))
        want, _ = oracles.loop_knn_pool(pos, feats, pos[idx], k, proj)
        if not np.array_equal(res.centers, idx):
            worst = math.inf
        worst = max(worst, float(np.abs(res.features.data - want).max()))

        up = interp_unpool(res.positions, res.features, pos).data
        worst = max(worst, float(np.abs(up - oracles.loop_interp(res.positions, want, pos)).max()))
    return CheckResult("pool-oracle", trials, worst, tol, time.perf_counter() - t0)


ATTENTION_VARIANTS = ("MSA", "L", "GL", "L+N+A+L", "GL+N+A+L", "VA", "multi-head")
REFERENCE_MODES = ("knn", "grid", "shifted-grid")


def _reference_table(pos, mode, k):
    if mode == "knn":
        return knn(pos, pos, min(k, pos.shape[0]))
    spec = GridSpec(2.5 * pos.shape[0] ** (-1 / 3))
    return grid_reference_sets(pos, shifted_grid_spec(spec, 0 if mode == "grid" else 1))


def softmax_normalization(trials: int = 10, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Attention weights summed over each reference set, per point and group."""
    rng = make_rng(seed, "softmax-norm")
    t0, worst, count = time.perf_counter(), 0.0, 0
    for _ in range(trials):
        n, c = int(rng.integers(1, 400)), int(rng.choice([4, 8, 16]))
        g = int(rng.choice([d for d in (1, 2, 4, c) if c % d == 0]))
        pos = rng.random((n, 3))
        x = rng.standard_normal((n, c))
        for mode in REFERENCE_MODES:
            nbr = _reference_table(pos, mode, 16)
            for variant in ATTENTION_VARIANTS:
                if variant == "multi-head":
                    _, attn = multi_head_attention(x, x, x, nbr, g, return_weights=True)
                else:
                    groups = c if variant == "VA" else g
                    enc = "L+N+A+L" if variant == "VA" else variant
                    relation = "multiply" if variant == "MSA" else "subtract"
                    posenc = None if variant == "MSA" else "multiplier_and_bias"
                    block = GroupedVectorAttention(
                        AttentionConfig(c, groups, relation=relation, weight_encoding=enc), rng,
                        posenc)
                    _, attn = block(x, pos, nbr, return_weights=True)
                sums = segment_sum_rows(attn.data, nbr.offsets)
                worst = max(worst, float(np.abs(sums - 1.0).max()))
                count += 1
    return CheckResult("softmax-sum", count, worst, tol, time.perf_counter() - t0,
                       f"({len(ATTENTION_VARIANTS)} variants x {len(REFERENCE_MODES)} modes)")


EQUIV_CHECKS = {
    "gva-va": equiv_gva_va,
    "gva-msa": equiv_gva_msa,
    "knn-brute": equiv_knn_brute,
    "fps-greedy": equiv_fps_greedy,
    "pool-oracle": equiv_pool_oracle,
    "softmax-sum": softmax_normalization,
}


# -- gradient suites --------------------------------------------------------------------
# Each builder returns (objective, params). The objective contracts the output
# with fixed random weights so normalized outputs still carry gradient.


def _contract(out, rng):
    weights = rng.standard_normal(out.shape)
    return lambda t: ag.weighted_total(t, weights)


def _grad_linear(rng):
    n, i, o = (int(x) for x in rng.integers(1, 9, size=3))
    x = Param(rng.standard_normal((n, i)), "x")
    layer = Linear(i, o, rng)
    loss = _contract(np.empty((n, o)), rng)
    return (lambda: loss(layer(x))), [x, *layer.parameters()]


def _grad_grouped_linear(rng):
    g = int(rng.integers(1, 5))
    c = g * int(rng.integers(1, 5))
    n = int(rng.integers(1, 9))
    r = Param(rng.standard_normal((n, c)), "r")
    layer = GroupedLinear(c, g, rng)
    loss = _contract(np.empty((n, g)), rng)
    return (lambda: loss(layer(r))), [r, *layer.parameters()]


def _grad_mlp2(rng):
    n = int(rng.integers(2, 10))
    i, h, o = (int(x) for x in rng.integers(1, 7, size=3))
    x = Param(rng.standard_normal((n, i)), "x")
    mlp = MLP2(i, h, o, rng, norm=True)
    loss = _contract(np.empty((n, o)), rng)
    return (lambda: loss(mlp(x))), [x, *mlp.parameters()]


def _grad_softmax(rng):
    n = int(rng.integers(1, 12))
    g = int(rng.integers(1, 5))
    c = g * int(rng.integers(1, 4))
    nbr = random_reference_sets(rng, n, 8)
    w = Param(rng.standard_normal((len(nbr.indices), g)), "logits")
    v = Param(rng.standard_normal((n, c)), "values")
    loss = _contract(np.empty((n, c)), rng)
    return (lambda: loss(grouped_aggregate(w, v, nbr)[0])), [w, v]


def _grad_gva_block(rng):
    n = int(rng.integers(4, 16))
    g = int(rng.choice([1, 2, 4]))
    c = g * int(rng.integers(1, 4))
    # k >= 2 keeps relative positions non-constant; with k = 1 every offset is
    # zero and the position MLP's normalized activations sit on the ReLU kink
    k = int(rng.integers(2, min(n, 6) + 1))
    pos = rng.random((n, 3))
    nbr = knn(pos, pos, k)
    x = Param(rng.standard_normal((n, c)), "x")
    enc = str(rng.choice(["L", "GL", "L+N+A+L", "GL+N+A+L"]))
    block = GroupedVectorAttention(AttentionConfig(c, g, weight_encoding=enc), rng,
                                   "multiplier_and_bias")
    # symmetric neighbor pairs make offsets cancel, so a normalized activation
    # can equal its batch mean; jittering every parameter (beta starts at zero)
    # moves the check off the resulting ReLU kink
    for p in block.parameters():
        p.data += 0.1 * rng.standard_normal(p.shape)
    loss = _contract(np.empty((n, c)), rng)
    return (lambda: loss(block(x, pos, nbr))), [x, *block.parameters()]


def _grad_grid_pool(rng):
    n = int(rng.integers(2, 40))
    c, o = (int(x) for x in rng.integers(1, 6, size=2))
    pos = rng.random((n, 3))
    x = Param(rng.standard_normal((n, c)), "x")
    u = Param(rng.standard_normal((c, o)), "U")
    spec = GridSpec(float(rng.uniform(0.2, 0.7)))
    n_cells = grid_pool(pos, spec, u, x).n
    loss = _contract(np.empty((n_cells, o)), rng)
    return (lambda: loss(grid_pool(pos, spec, u, x).features)), [x, u]


def _grad_seg_head(rng):
    n, c, cls = int(rng.integers(2, 12)), int(rng.integers(1, 8)), int(rng.integers(2, 6))
    x = Param(rng.standard_normal((n, c)), "x")
    head = SegHead(c, cls, rng)
    loss = _contract(np.empty((n, cls)), rng)
    return (lambda: loss(head(x))), [x, *head.parameters()]


def _grad_cls_head(rng):
    n, c, cls = int(rng.integers(1, 12)), int(rng.integers(1, 8)), int(rng.integers(2, 6))
    x = Param(rng.standard_normal((n, c)), "x")
    head = ClsHead(c, cls, rng)
    loss = _contract(np.empty((1, cls)), rng)
    return (lambda: loss(head(x))), [x, *head.parameters()]


GRAD_CHECKS = {
    "linear": _grad_linear,
    "grouped_linear": _grad_grouped_linear,
    "mlp2": _grad_mlp2,
    "softmax": _grad_softmax,
    "gva_block": _grad_gva_block,
    "grid_pool": _grad_grid_pool,
    "seg_head": _grad_seg_head,
    "cls_head": _grad_cls_head,
}


def run_grad_check(module: str, trials: int = 20, tol: float = 1e-4, h: float = 1e-5,
                   seed: int = 0, max_coords: int | None = 24) -> CheckResult:
    if module not in GRAD_CHECKS:
        raise ValueError(f"unknown module {module!r}; expected one of {sorted(GRAD_CHECKS)}")
    rng = make_rng(seed, "grad", module)
    t0, worst, where, coords, nonsmooth = time.perf_counter(), 0.0, None, 0, 0
    failed = False
    for _ in range(trials):
        f, params = GRAD_CHECKS[module](rng)
        rep = grad_check(f, params, h=h, tol=tol, max_coords=max_coords, rng=rng)
        coords += rep.n_coords
        nonsmooth += rep.n_nonsmooth
        failed |= not rep.passed
        if rep.max_rel_error >= worst:
            worst, where = rep.max_rel_error, rep.worst
    if failed and worst <= tol:
        worst = math.inf  # too many non-smooth coordinates in some instance
    return CheckResult(f"grad/{module}", trials, worst, tol, time.perf_counter() - t0,
                       f"({coords} coords, {nonsmooth} non-smooth skipped; worst at {where})")


def pooling_ratios(n: int = 100_000, base_ratio: float = 0.25, factors=(2.0, 2.5),
                   seed: int = 0) -> dict[float, float]:
    """Cell-count shrink factor when the grid grows by each factor, on a uniform cube.

    The base grid follows the synthetic protocol ``(n * base_ratio) ** (-1/3)``.
    """
    pos = synth_uniform(n, 1, seed).positions
    base = grid_size_for(n, base_ratio)
    origin = (0.0, 0.0, 0.0)
    n0 = grid_partition(pos, GridSpec(base, origin)).n_cells
    return {f: n0 / grid_partition(pos, GridSpec(base * f, origin)).n_cells for f in factors}
