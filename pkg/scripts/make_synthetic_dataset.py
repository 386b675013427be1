#!/usr/bin/env python3
"""Generate a synthetic dataset plus a ready-to-run pipeline config.

Usage:
    python scripts/make_synthetic_dataset.py --root work/synth --videos 200
    commonact run --config work/synth/pipeline.cfg
"""

from __future__ import annotations

import argparse
from pathlib import Path

from commonact.synthetic import make_synthetic_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path, required=True,
                        help="directory for vocab files, train/test JSONL, and config")
    parser.add_argument("--videos", type=int, default=200)
    parser.add_argument("--activities", type=int, default=6)
    parser.add_argument("--objects", type=int, default=5)
    parser.add_argument("--interactions", type=int, default=4)
    parser.add_argument("--frames", type=int, default=8)
    parser.add_argument("--train-fraction", type=float, default=0.7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    paths = make_synthetic_dataset(
        args.root, n_videos=args.videos, n_activities=args.activities,
        n_objects=args.objects, n_interactions=args.interactions,
        frames_per_video=args.frames, train_fraction=args.train_fraction,
        seed=args.seed)

    config = paths.root / "pipeline.cfg"
    config.write_text(f"""\
vocab.activities = {paths.activities}
vocab.objects = {paths.objects}
vocab.interactions = {paths.interactions}
dataset.train = {paths.train_jsonl}
dataset.test = {paths.test_jsonl}
provider.context = groundtruth
provider.generation = mock
provider.embedding = mock
seed = {args.seed}
stride = 4
dim = 256
train.epochs = 40
out = {paths.root / 'out'}
cache_dir = {paths.root / 'cache'}
""", encoding="utf-8")
    print(f"dataset under {paths.root}")
    print(f"run with: commonact run --config {config}")


if __name__ == "__main__":
    main()
