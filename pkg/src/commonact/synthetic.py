"""Synthetic dataset generator for end-to-end tests and demos.

Builds a small closed vocabulary and a set of videos whose per-frame
annotations follow a fixed activity -> object/interaction association.
With the ground-truth context provider and the mock generation/embedding
backends, the label words flow into the generated descriptions and from
there into the text embeddings, so the classifier has real signal to
learn while everything stays deterministic and offline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ACTIVITY_WORDS = (
    "walking", "cooking", "reading", "sweeping", "drinking", "typing",
    "folding", "washing", "pouring", "stretching", "sitting", "laughing",
    "painting", "knitting", "vacuuming", "whistling",
)
_OBJECT_WORDS = (
    "broom", "book", "cup", "pan", "laptop", "towel", "box", "plate",
    "blanket", "pillow", "bottle", "chair", "bag", "phone", "shoe", "mirror",
)
_INTERACTION_WORDS = (
    "holding", "touching", "watching", "carrying", "lifting", "wiping",
    "moving", "tapping",
)


def _names(pool: tuple[str, ...], prefix: str, n: int) -> list[str]:
    if n <= len(pool):
        return list(pool[:n])
    return list(pool) + [f"{prefix}{i}" for i in range(len(pool), n)]


@dataclass(frozen=True)
class SyntheticPaths:
    root: Path
    activities: Path
    objects: Path
    interactions: Path
    train_jsonl: Path
    test_jsonl: Path


def make_synthetic_dataset(root: Path | str, *, n_videos: int = 200,
                           n_activities: int = 6, n_objects: int = 5,
                           n_interactions: int = 4, frames_per_video: int = 8,
                           fps: float = 1.0, train_fraction: float = 0.7,
                           seed: int = 0) -> SyntheticPaths:
    """Write vocabulary files plus normalized train/test JSONL under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    activities = _names(_ACTIVITY_WORDS, "activity", n_activities)
    objects = _names(_OBJECT_WORDS, "object", n_objects)
    interactions = _names(_INTERACTION_WORDS, "interaction", n_interactions)

    paths = SyntheticPaths(
        root=root,
        activities=root / "activities.txt",
        objects=root / "objects.txt",
        interactions=root / "interactions.txt",
        train_jsonl=root / "train.jsonl",
        test_jsonl=root / "test.jsonl",
    )
    paths.activities.write_text("\n".join(activities) + "\n", encoding="utf-8")
    paths.objects.write_text("\n".join(objects) + "\n", encoding="utf-8")
    paths.interactions.write_text("\n".join(interactions) + "\n", encoding="utf-8")

    rng = np.random.default_rng(seed)
    n_train = int(round(train_fraction * n_videos))
    with paths.train_jsonl.open("w", encoding="utf-8") as train_fh, \
            paths.test_jsonl.open("w", encoding="utf-8") as test_fh:
        for v in range(n_videos):
            video_id = f"vid{v:04d}"
            n_labels = int(rng.integers(1, 3))
            acts = sorted(rng.choice(n_activities, size=n_labels, replace=False).tolist())
            base_objs = sorted({a % n_objects for a in acts})
            ints = sorted({a % n_interactions for a in acts})
            fh = train_fh if v < n_train else test_fh
            for i in range(frames_per_video):
                objs = base_objs
                if i % 2 == 1:
                    # Odd frames see one distractor object so descriptions
                    # vary within a video.
                    objs = sorted(set(base_objs) | {(acts[0] + 1) % n_objects})
                record = {
                    "video_id": video_id,
                    "frame_index": i,
                    "timestamp_s": i / fps,
                    "activities": [activities[a] for a in acts],
                    "objects": [objects[o] for o in objs],
                    "interactions": [interactions[r] for r in ints],
                    "image_ref": f"{video_id}/frame{i:03d}",
                }
                fh.write(json.dumps(record) + "\n")
    return paths
