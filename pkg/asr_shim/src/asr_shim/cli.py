"""``asr-shim``: serve one checkpoint behind /transcribe."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .model import FIXTURE_MODELS, resolve_checkpoint
from .service import create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asr-shim",
        description="Minimal transcription service over a CTC speech model.",
    )
    parser.add_argument(
        "--model",
        choices=sorted(FIXTURE_MODELS),
        default="",
        help="bundled fixture checkpoint family",
    )
    parser.add_argument(
        "--model-path",
        default="",
        help="explicit checkpoint directory (overrides --model)",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8040)
    parser.add_argument(
        "--max-seconds",
        type=float,
        default=120.0,
        help="reject audio longer than this (413)",
    )
    parser.add_argument(
        "--lazy",
        action="store_true",
        help="serve immediately and load the model in the background",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        checkpoint = resolve_checkpoint(args.model, args.model_path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    app = create_app(
        checkpoint,
        max_seconds=args.max_seconds,
        load="background" if args.lazy else "eager",
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
