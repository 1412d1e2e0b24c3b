"""CLI subcommands; each module exposes ``register(subparsers)`` and ``run(args)``."""
from . import gradcheck, interpolate, optimize, render

COMMANDS = (optimize, render, interpolate, gradcheck)

__all__ = ["COMMANDS", "gradcheck", "interpolate", "optimize", "render"]
