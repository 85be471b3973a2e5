"""`universeg-bridge` console entry point."""

from __future__ import annotations

import argparse
import sys

from .model import ModelUnavailable, load_runner
from .protocol import FrameError
from .server import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="universeg-bridge",
        description="Serve UniverSeg over the segmentation bridge protocol on stdin/stdout.",
    )
    parser.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    parser.add_argument(
        "--max-support",
        type=int,
        default=0,
        help="largest support list accepted per request; 0 = unlimited",
    )
    args = parser.parse_args(argv)

    try:
        runner = load_runner(args.device)
    except ModelUnavailable as exc:
        print(f"universeg-bridge: {exc}", file=sys.stderr)
        return 1
    try:
        serve(sys.stdin.buffer, sys.stdout.buffer, runner, max_support=args.max_support)
    except (BrokenPipeError, FrameError) as exc:
        print(f"universeg-bridge: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
