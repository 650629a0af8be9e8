"""Central-difference gradient checking against the tape's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Param, Tape

MAX_NONSMOOTH_FRACTION = 0.01


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_coords: int
    worst: tuple[str, tuple[int, ...]] | None
    analytic: float = 0.0
    numeric: float = 0.0
    n_nonsmooth: int = 0

    @property
    def passed(self) -> bool:
        return (self.max_rel_error <= self.tol
                and self.n_nonsmooth <= MAX_NONSMOOTH_FRACTION * max(self.n_coords, 1))

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        return (f"{status}: max rel error {self.max_rel_error:.3e} over {self.n_coords} "
                f"coords (tol {self.tol:.0e}, {self.n_nonsmooth} non-smooth), worst at "
                f"{self.worst} (analytic {self.analytic:.6e}, numeric {self.numeric:.6e})")


def _scalar(value) -> float:
    out = float(np.asarray(value.data if hasattr(value, "data") else value).reshape(()))
    if not np.isfinite(out):
        raise FloatingPointError("objective evaluated to a non-finite value")
    return out


def _rel(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _central(f, p: Param, idx, h: float) -> float:
    orig = p.data[idx]
    p.data[idx] = orig + h
    fp = _scalar(f())
    p.data[idx] = orig - h
    fm = _scalar(f())
    p.data[idx] = orig
    return (fp - fm) / (2 * h)


def grad_check(f, params: list[Param], h: float = 1e-5, tol: float = 1e-4,
               floor: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare d f / d params from the tape with (f(x+h) - f(x-h)) / 2h.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps structurally zero gradients from amplifying roundoff.

    A coordinate that fails is re-differenced at h/2. If the two numeric
    estimates disagree with each other the objective has a kink (a ReLU or
    max switching) inside the window; such coordinates are counted as
    non-smooth instead of scored, and the report fails if they exceed 1%.
    ``max_coords`` samples that many coordinates per parameter.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    _scalar(loss)
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst_err, worst, count, nonsmooth = 0.0, None, 0, 0
    worst_pair = (0.0, 0.0)
    for p, grad in zip(params, analytic):
        coords = list(np.ndindex(p.shape))
        if max_coords is not None and len(coords) > max_coords:
            rng = rng or np.random.default_rng(0)
            pick = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(pick)]
        for idx in coords:
            a = float(grad[idx])
            num = _central(f, p, idx, h)
            err = _rel(a, num, floor)
            count += 1
            if err > tol and _rel(num, _central(f, p, idx, h / 2), floor) > tol:
                nonsmooth += 1
                continue
            if err > worst_err or worst is None:
                worst_err, worst = err, (p.name, tuple(int(i) for i in idx))
                worst_pair = (a, float(num))
    return GradCheckReport(worst_err, tol, count, worst, *worst_pair, n_nonsmooth=nonsmooth)
