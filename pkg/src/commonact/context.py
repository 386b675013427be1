"""Per-frame context triples: candidate interactions, objects, and verbs.

The heavy video backbones that predict these at full scale live behind a
provider contract. Three providers are shipped: ground-truth annotations,
precomputed predictions loaded from a file, and a deterministic mock.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, TypeVar

from .errors import InvalidScore, MissingPrediction, ParseError
from .vocab import VideoRecord, Vocabulary

# Per-class real scores produced by a whole-video activity recognizer.
VerbScores = Sequence[float]

T = TypeVar("T")


@dataclass(frozen=True)
class ContextTriple:
    """Candidate interaction / object / verb ids for one frame."""

    interactions: tuple[int, ...]
    objects: tuple[int, ...]
    verbs: tuple[int, ...]


@dataclass(frozen=True)
class ContextConfig:
    """How many candidate verbs to keep and how long a clip is."""

    k_verbs: int = 5
    clip_len: int = 5


def top_k_verbs(scores: VerbScores, k: int) -> list[int]:
    """Ids of the k highest-scoring verbs, descending; ties by ascending id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for i, s in enumerate(scores):
        if not math.isfinite(s):
            raise InvalidScore(f"non-finite score {s!r} at id {i}")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def segment_clips(frames: Sequence[T], clip_len: int) -> list[list[T]]:
    """Consecutive non-overlapping windows; a shorter final window is kept."""
    if clip_len < 1:
        raise ValueError(f"clip_len must be >= 1, got {clip_len}")
    return [list(frames[i:i + clip_len]) for i in range(0, len(frames), clip_len)]


class ContextProvider(Protocol):
    def context_for_frame(self, video: VideoRecord, frame_index: int,
                          cfg: ContextConfig) -> ContextTriple: ...


def context_for_frame(provider: ContextProvider, video: VideoRecord,
                      frame_index: int, cfg: ContextConfig) -> ContextTriple:
    """Query a provider for one frame's context triple."""
    return provider.context_for_frame(video, frame_index, cfg)


def validate_triple(triple: ContextTriple, vocab: Vocabulary, k_verbs: int) -> None:
    """Assert the triple invariants; raises ValueError on violation."""
    for name, ids, limit in (
        ("interactions", triple.interactions, len(vocab.interactions)),
        ("objects", triple.objects, len(vocab.objects)),
        ("verbs", triple.verbs, len(vocab.activities)),
    ):
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate ids in {name}: {ids}")
        if any(not 0 <= i < limit for i in ids):
            raise ValueError(f"{name} ids out of range: {ids}")
    if len(triple.verbs) > k_verbs:
        raise ValueError(f"more than {k_verbs} verbs: {triple.verbs}")


class GroundTruthContextProvider:
    """Context straight from the frame annotations.

    Objects and interactions are the frame's ground-truth sets (ascending id).
    Verbs are the video's annotated activities ranked by the number of frames
    they appear on, ties broken by ascending id, truncated to K.
    """

    def __init__(self, vocab: Vocabulary):
        self._vocab = vocab

    def context_for_frame(self, video: VideoRecord, frame_index: int,
                          cfg: ContextConfig) -> ContextTriple:
        frame = video.frame_at(frame_index)
        counts: dict[int, int] = {a: 0 for a in video.gt_video_activities}
        for f in video.frames:
            for a in f.gt_activities:
                counts[a] = counts.get(a, 0) + 1
        ranked = sorted(counts, key=lambda a: (-counts[a], a))
        return ContextTriple(
            interactions=tuple(sorted(frame.gt_interactions)),
            objects=tuple(sorted(frame.gt_objects)),
            verbs=tuple(ranked[:cfg.k_verbs]),
        )


class FileContextProvider:
    """Precomputed context triples loaded from a normalized JSONL file.

    One record per line: ``{"video_id": str, "frame_index": int, "verbs":
    [str], "objects": [str], "interactions": [str]}``. Names are resolved
    against the vocabulary at load; the index is immutable afterwards.
    """

    def __init__(self, path: Path | str, vocab: Vocabulary):
        self._index: dict[tuple[str, int], ContextTriple] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line_num, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", line=line_num) from None
                try:
                    key = (record["video_id"], record["frame_index"])
                    triple = ContextTriple(
                        interactions=tuple(vocab.interactions.id(n)
                                           for n in record["interactions"]),
                        objects=tuple(vocab.objects.id(n) for n in record["objects"]),
                        verbs=tuple(vocab.activities.id(n) for n in record["verbs"]),
                    )
                except (KeyError, TypeError):
                    raise ParseError("record missing required fields",
                                     line=line_num) from None
                self._index[key] = triple

    def context_for_frame(self, video: VideoRecord, frame_index: int,
                          cfg: ContextConfig) -> ContextTriple:
        try:
            triple = self._index[(video.video_id, frame_index)]
        except KeyError:
            raise MissingPrediction(video.video_id, frame_index) from None
        if len(triple.verbs) > cfg.k_verbs:
            triple = ContextTriple(triple.interactions, triple.objects,
                                   triple.verbs[:cfg.k_verbs])
        return triple


class MockContextProvider:
    """Deterministic pseudo-random triples seeded by (video_id, frame_index)."""

    def __init__(self, vocab: Vocabulary, seed: int = 0):
        self._vocab = vocab
        self._seed = seed

    def context_for_frame(self, video: VideoRecord, frame_index: int,
                          cfg: ContextConfig) -> ContextTriple:
        video.frame_at(frame_index)  # frame must exist
        digest = hashlib.sha256(
            f"ctx|{self._seed}|{video.video_id}|{frame_index}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "little"))
        n_act = len(self._vocab.activities)
        n_obj = len(self._vocab.objects)
        n_int = len(self._vocab.interactions)
        verbs = sorted(rng.sample(range(n_act), min(cfg.k_verbs, n_act)))
        objects = sorted(rng.sample(range(n_obj), min(rng.randint(1, 3), n_obj)))
        interactions = sorted(rng.sample(range(n_int), min(rng.randint(1, 3), n_int)))
        return ContextTriple(tuple(interactions), tuple(objects), tuple(verbs))
