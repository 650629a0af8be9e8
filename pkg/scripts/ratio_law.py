"""Cell-count shrink factors on a uniform cube, over a range of base grid sizes.

Prints measured ratios next to the independent-occupancy prediction
s^3 (1 - exp(-lam)) / (1 - exp(-s^3 lam)), lam = mean points per base cell.
"""

import argparse

import numpy as np

from pointgva.checks import pooling_ratios


def predicted(factor: float, lam: float) -> float:
    v = factor ** 3
    return v * -np.expm1(-lam) / -np.expm1(-v * lam)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'base r':>8} {'lam':>6} {'x2.0':>7} {'pred':>7} {'x2.5':>7} {'pred':>7}")
    for base_ratio in (1.0, 0.5, 0.25, 0.125):
        lam = 1.0 / base_ratio
        got = pooling_ratios(args.n, base_ratio, (2.0, 2.5), args.seed)
        print(f"{base_ratio:8.3f} {lam:6.2f} {got[2.0]:7.2f} {predicted(2.0, lam):7.2f} "
              f"{got[2.5]:7.2f} {predicted(2.5, lam):7.2f}")


if __name__ == "__main__":
    main()
