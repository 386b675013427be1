"""Command-line driver for the batch pipeline."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import resolve_config
from .errors import PipelineError
from .pipeline import COMMANDS, run_command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commonact",
        description="Language-driven multi-label video activity recognition pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} stage")
        p.add_argument("--config", metavar="PATH", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="master seed for every stochastic component")
        p.add_argument("--cache-dir", metavar="PATH", dest="cache_dir",
                       help="generation cache directory")
        p.add_argument("--out", metavar="PATH", help="run output directory")
        p.add_argument("--provider.context", dest="provider_context",
                       metavar="NAME", help="groundtruth | file | mock")
        p.add_argument("--provider.generation", dest="provider_generation",
                       metavar="NAME", help="http | mock")
        p.add_argument("--provider.embedding", dest="provider_embedding",
                       metavar="NAME", help="file | http | mock")
        p.add_argument("--backend.generation.url", dest="backend_generation_url",
                       metavar="URL", help="text generation service base URL")
        p.add_argument("--backend.embedding.url", dest="backend_embedding_url",
                       metavar="URL", help="embedding service base URL")
    return parser


_FLAG_TO_KEY = {
    "seed": "seed",
    "cache_dir": "cache_dir",
    "out": "out",
    "provider_context": "provider.context",
    "provider_generation": "provider.generation",
    "provider_embedding": "provider.embedding",
    "backend_generation_url": "backend.generation.url",
    "backend_embedding_url": "backend.embedding.url",
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, attr)
                 for attr, key in _FLAG_TO_KEY.items()
                 if getattr(args, attr) is not None}
    try:
        cfg = resolve_config(config_path=args.config, cli_overrides=overrides)
        return run_command(args.command, cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
