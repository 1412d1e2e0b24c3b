"""``optimize --config <file>``"""
from ..services import run_optimization

NAME = "optimize"


def register(subparsers) -> None:
    parser = subparsers.add_parser(NAME, help="Fit hand poses to a target shadow")
    parser.add_argument("--config", required=True, help="Run configuration (JSON)")
    parser.set_defaults(command=run)


def run(args) -> int:
    result = run_optimization(args.config)
    print(f"{result.final.status}: image term {result.final.image_term:.6g} -> {result.output_dir}")
    return 0
