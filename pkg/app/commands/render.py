"""``render --params <file> --config <file> --out <dir>``"""
from ..services import render_params

NAME = "render"


def register(subparsers) -> None:
    parser = subparsers.add_parser(NAME, help="Render hard and soft silhouettes of a params file")
    parser.add_argument("--params", required=True, help="Params file (JSON)")
    parser.add_argument("--config", required=True, help="Run configuration (JSON)")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.set_defaults(command=run)


def run(args) -> int:
    result = render_params(args.params, args.config, args.out)
    print(f"wrote {len(result.final.files)} files -> {result.output_dir}")
    return 0
