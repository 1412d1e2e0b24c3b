"""``interpolate --a <file> --b <file> -T <n> [--refine] --config <file>``"""
from ..services import run_interpolation

NAME = "interpolate"


def register(subparsers) -> None:
    parser = subparsers.add_parser(NAME, help="Pose sequence between two shadows")
    parser.add_argument("--a", required=True, help="Start: params file (.json), image or bundled:<name>")
    parser.add_argument("--b", required=True, help="End: params file (.json), image or bundled:<name>")
    parser.add_argument("-T", dest="frames", type=int, default=None, help="Steps; the sequence has T + 1 frames")
    parser.add_argument("--refine", action="store_true", default=None, help="Refine intermediate frames")
    parser.add_argument("--config", required=True, help="Run configuration (JSON)")
    parser.set_defaults(command=run)


def run(args) -> int:
    result = run_interpolation(args.a, args.b, args.config, steps=args.frames, refine=args.refine)
    print(f"wrote {result.final.details['frames']} frames -> {result.output_dir}")
    return 0
