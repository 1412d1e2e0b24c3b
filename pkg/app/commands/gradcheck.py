"""``gradcheck [--seed <n>]``"""
import argparse

from ..gradcheck import raise_on_failure, run_gradcheck
from ..rendering import rasterizer

NAME = "gradcheck"
FAULT_SCALE = 1.5


def register(subparsers) -> None:
    parser = subparsers.add_parser(NAME, help="Finite-difference check of every gradient")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    parser.set_defaults(command=run)


def run(args) -> int:
    if args.inject_fault:
        rasterizer.ADJOINT_SCALE = FAULT_SCALE
    reports = run_gradcheck(args.seed)
    for report in reports:
        mark = "ok" if report.passed else "FAIL"
        print(f"{report.stage:<12} {report.worst_error:.3e}  {mark}  ({report.parameter})")
    raise_on_failure(reports)
    return 0
