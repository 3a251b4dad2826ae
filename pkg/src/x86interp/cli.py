"""Command-line runner for flat binary images."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .loader import EXIT_CONFIG, ConfigError, RunSpec, load_and_run, parse_int, read_config


def _image_arg(text: str) -> tuple[int, Path]:
    addr, sep, path = text.partition(":")
    if not sep or not path:
        raise argparse.ArgumentTypeError("expected ADDR:PATH")
    try:
        return parse_int(addr), Path(path)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_arg(text: str) -> int:
    try:
        return parse_int(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="x86run",
        description="Run a flat x86 binary image and print the final register state.",
        epilog="Exit status: 0 halted, 1 faulted, 2 configuration error, 3 step budget exhausted.",
    )
    p.add_argument("config", nargs="?", help="INI run configuration (see x86interp.loader)")
    p.add_argument("--mode", choices=("m64", "m32"), help="processor mode")
    p.add_argument("--image", action="append", type=_image_arg, default=[], metavar="ADDR:PATH",
                   help="load a raw image at a linear address (repeatable)")
    p.add_argument("--entry", type=_int_arg, help="initial instruction pointer")
    p.add_argument("--stack", type=_int_arg, help="initial stack pointer")
    p.add_argument("--max-steps", type=_int_arg, help="step budget")
    p.add_argument("--trace", action="store_true", default=None, help="print one line per step")
    p.add_argument("--align-check", action="store_true", default=None,
                   help="fault misaligned data accesses with #AC")
    return p


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    spec = read_config(args.config) if args.config else RunSpec()
    if args.mode is not None:
        spec.mode = args.mode
    spec.images.extend(args.image)
    if args.entry is not None:
        spec.entry = args.entry
    if args.stack is not None:
        spec.stack = args.stack
    if args.max_steps is not None:
        spec.max_steps = args.max_steps
    if args.trace:
        spec.trace = True
    if args.align_check:
        spec.alignment_checking = True
    return spec


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        return load_and_run(spec, sys.stdout)
    except ConfigError as exc:
        print(f"x86run: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
