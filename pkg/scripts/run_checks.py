"""Run every equivalence and gradient suite and print one line each."""

import argparse
import sys

from pointgva.checks import EQUIV_CHECKS, GRAD_CHECKS, run_grad_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    results = [check(seed=args.seed) for check in EQUIV_CHECKS.values()]
    results += [run_grad_check(m, seed=args.seed) for m in GRAD_CHECKS]
    for res in results:
        print(res.line())
    sys.exit(0 if all(r.passed for r in results) else 1)


if __name__ == "__main__":
    main()
