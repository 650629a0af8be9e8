"""Command-line front end: data generation, checks, benchmark, forward pass."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .bench import BenchSpec, bench_pooling, emit_csv, synth_uniform
from .checks import EQUIV_CHECKS, GRAD_CHECKS, run_grad_check
from .network import BackboneConfig, SegmentationNet, count_params
from .ptpc import read_cloud, write_cloud
from .rng import make_rng

log = logging.getLogger("pointgva")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def _ratio(text: str) -> float:
    """Accepts ``0.25`` or ``1/4``."""
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            value = float(num) / float(den)
        else:
            value = float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad ratio {text!r}") from None
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1], got {text}")
    return value


def _ratio_list(text: str) -> list[float]:
    return [_ratio(t.strip()) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointgva", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=_positive_int, default=1,
                        help="kernel parallelism where supported")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a uniform synthetic cloud (PTPC)")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--c", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=_positive_int, default=None,
                   help="also write random labels in [0, classes)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench-pool", help="pooling latency sweep, written as CSV")
    p.add_argument("--n-list", type=_int_list, default=[10_000, 40_000, 160_000])
    p.add_argument("--r-list", type=_ratio_list, default=[1 / 2, 1 / 4, 1 / 8])
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--warmup", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=_positive_int, default=32)
    p.add_argument("--k", type=_positive_int, default=16)
    p.add_argument("--out", required=True)

    p = sub.add_parser("check-grad", help="central-difference gradient checks")
    p.add_argument("--module", choices=[*GRAD_CHECKS, "all"], default="all")
    p.add_argument("--trials", type=_positive_int, default=20)
    p.add_argument("--tol", type=_positive_float, default=1e-4)
    p.add_argument("--h", type=_positive_float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("check-equiv", help="degeneracy and oracle equivalence suites")
    p.add_argument("--which", choices=[*EQUIV_CHECKS, "all"], required=True)
    p.add_argument("--trials", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("forward", help="segmentation forward pass; writes per-point logits")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("count-params", help="print the parameter count of a config")
    p.add_argument("--config", required=True)
    return parser


def _report(results) -> int:
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def _gen(args) -> int:
    cloud = synth_uniform(args.n, args.c, args.seed)
    labels = None
    if args.classes is not None:
        labels = make_rng(args.seed, "labels").integers(0, args.classes, size=args.n)
    write_cloud(args.out, cloud, labels)
    return 0


def _bench(args) -> int:
    spec = BenchSpec(tuple(args.n_list), tuple(args.r_list), args.repeats, args.warmup,
                     args.seed, args.channels, args.k, threads=args.threads)
    table = bench_pooling(spec)
    emit_csv(table, args.out)
    for row in table.sorted_rows():
        print(f"{row.method:9s} n={row.n:<7d} r={row.r:<6.4g} median {row.median_ms:9.2f} ms")
    return 0


def _check_grad(args) -> int:
    modules = list(GRAD_CHECKS) if args.module == "all" else [args.module]
    return _report([run_grad_check(m, args.trials, args.tol, args.h, args.seed) for m in modules])


def _check_equiv(args) -> int:
    names = list(EQUIV_CHECKS) if args.which == "all" else [args.which]
    kwargs = {"seed": args.seed}
    if args.trials is not None:
        kwargs["trials"] = args.trials
    return _report([EQUIV_CHECKS[name](**kwargs) for name in names])


def _forward(args) -> int:
    cfg = BackboneConfig.load(args.config)
    cloud, _ = read_cloud(args.inp)
    if cloud.c != cfg.in_channels:
        print(f"error: {args.inp} has {cloud.c} feature channels but the config expects "
              f"{cfg.in_channels}", file=sys.stderr)
        return 1
    logits = SegmentationNet(cfg)(cloud).data
    write_cloud(args.out, cloud.with_features(logits))
    return 0


def _count(args) -> int:
    print(count_params(BackboneConfig.load(args.config)))
    return 0


COMMANDS = {
    "gen": _gen,
    "bench-pool": _bench,
    "check-grad": _check_grad,
    "check-equiv": _check_equiv,
    "forward": _forward,
    "count-params": _count,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads > 1:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
