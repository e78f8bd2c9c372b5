"""Entry point: run the scorer over stdio or as a local HTTP service."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .backends import load_backend
from .server import serve_http, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorer-service",
        description="Score (source, hypothesis[, reference]) batches over the wire protocol.",
    )
    parser.add_argument("--mode", choices=["qe", "ref"], default="ref")
    parser.add_argument(
        "--backend", default="standin",
        help="'standin' or a module:attr path to a backend (default: standin)",
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true", help="serve on standard streams")
    group.add_argument("--port", type=int, help="serve HTTP on this port")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backend = load_backend(args.backend, args.mode)
    except (ValueError, ImportError, AttributeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.stdio:
        return serve_stdio(backend, sys.stdin, sys.stdout)
    print(f"serving {backend.name} (mode={backend.mode}) on port {args.port}", file=sys.stderr)
    return serve_http(backend, args.port)


if __name__ == "__main__":
    sys.exit(main())
