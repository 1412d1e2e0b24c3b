"""Command-line entry point: ``python -m app.main <command> ...``."""
import argparse
import sys
from typing import Optional, Sequence

from .commands import COMMANDS
from .exceptions import handle_exception
from .logging_config import logger, setup_logging
from .settings import settings

# Reconfigure logging based on settings
setup_logging(
    level=settings.log_level,
    json_logs=settings.log_json,
    log_file=settings.log_file
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handshadow",
        description="Fit articulated hands to shadow silhouettes by differentiable rendering.",
    )
    subparsers = parser.add_subparsers(dest="name", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    logger.debug(f"Starting {settings.app_name} {args.name} in {settings.environment} mode")
    try:
        return args.command(args)
    except Exception as exc:
        return handle_exception(exc)


if __name__ == "__main__":
    sys.exit(main())
