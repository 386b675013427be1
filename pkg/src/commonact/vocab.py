"""Label vocabularies and video annotation ingest.

All importers normalize into the same in-memory representation: a
``VideoRecord`` holding ordered, per-frame ``FrameRecord`` annotations with
integer label ids resolved against a closed ``Vocabulary``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicateLabel, EmptyVocabulary, ParseError, UnknownLabel


class LabelSet:
    """Ordered closed set of label names with stable integer ids (0..n-1)."""

    def __init__(self, names: Iterable[str], *, kind: str = "label"):
        self._names = tuple(names)
        self._kind = kind
        if not self._names:
            raise EmptyVocabulary(f"empty {kind} vocabulary")
        self._ids: dict[str, int] = {}
        for i, name in enumerate(self._names):
            if name in self._ids:
                raise DuplicateLabel(f"duplicate {kind} {name!r}")
            self._ids[name] = i

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownLabel(f"unknown {self._kind} {name!r}") from None

    def name(self, label_id: int) -> str:
        if not 0 <= label_id < len(self._names):
            raise UnknownLabel(f"{self._kind} id {label_id} out of range")
        return self._names[label_id]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __iter__(self):
        return iter(self._names)


@dataclass(frozen=True)
class Vocabulary:
    """The three closed label sets: activities, objects, interactions."""

    activities: LabelSet
    objects: LabelSet
    interactions: LabelSet


@dataclass(frozen=True)
class FrameRecord:
    """One annotated frame of a video."""

    video_id: str
    frame_index: int
    timestamp_s: float
    gt_activities: frozenset[int] = frozenset()
    gt_objects: frozenset[int] = frozenset()
    gt_interactions: frozenset[int] = frozenset()
    image_ref: str = ""


@dataclass(frozen=True)
class VideoRecord:
    """A video as an ordered list of annotated frames.

    Invariants: frames strictly ordered by frame_index, at least one frame,
    fps > 0. ``gt_video_activities`` is the union of the per-frame sets.
    """

    video_id: str
    fps: float
    frames: tuple[FrameRecord, ...]
    gt_video_activities: frozenset[int] = frozenset()
    _by_index: dict[int, FrameRecord] = field(
        init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.frames:
            raise ParseError(f"video {self.video_id!r} has no frames")
        if self.fps <= 0:
            raise ParseError(f"video {self.video_id!r} has fps {self.fps}")
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ParseError(f"video {self.video_id!r} frames not strictly ordered")
        object.__setattr__(self, "_by_index", {f.frame_index: f for f in self.frames})

    def frame_at(self, frame_index: int) -> FrameRecord:
        try:
            return self._by_index[frame_index]
        except KeyError:
            raise ParseError(
                f"video {self.video_id!r} has no frame {frame_index}") from None

    def with_frames(self, frames: Sequence[FrameRecord]) -> "VideoRecord":
        """Copy with a frame subset; video-level labels are recomputed."""
        union: set[int] = set()
        for f in frames:
            union |= f.gt_activities
        return VideoRecord(self.video_id, self.fps, tuple(frames), frozenset(union))


def load_vocabulary(activities_path: Path | str, objects_path: Path | str,
                    interactions_path: Path | str) -> Vocabulary:
    """Load the three vocabularies from text files, one label per line.

    Ids are assigned by line order; blank lines are ignored.
    """
    return Vocabulary(
        activities=LabelSet(_read_labels(activities_path), kind="activity"),
        objects=LabelSet(_read_labels(objects_path), kind="object"),
        interactions=LabelSet(_read_labels(interactions_path), kind="interaction"),
    )


def _read_labels(path: Path | str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


_CLASS_CODE = re.compile(r"^c(\d+)$")


def import_charades_csv(path: Path | str, vocab: Vocabulary,
                        fps: float = 1.0) -> list[VideoRecord]:
    """Import a Charades-style CSV of per-video action intervals.

    Required columns: ``id`` and ``actions`` where actions is a ``;``-joined
    list of ``cNNN start_s end_s`` triples. An optional ``length`` column
    gives the video duration in seconds; otherwise the last interval end is
    used. Frames are synthesized at ``fps``, and a frame carries an activity
    iff its timestamp lies inside the (closed) action interval.
    """
    videos: list[VideoRecord] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames \
                or "actions" not in reader.fieldnames:
            raise ParseError(f"{path}: CSV must have 'id' and 'actions' columns")
        for row_num, row in enumerate(reader, start=1):
            videos.append(_video_from_csv_row(row, row_num, vocab, fps))
    return videos


def _video_from_csv_row(row: dict, row_num: int, vocab: Vocabulary,
                        fps: float) -> VideoRecord:
    video_id = (row.get("id") or "").strip()
    if not video_id:
        raise ParseError("missing video id", row=row_num, column="id")

    intervals: list[tuple[int, float, float]] = []
    actions = (row.get("actions") or "").strip()
    if actions:
        for part in actions.split(";"):
            tokens = part.split()
            if len(tokens) != 3:
                raise ParseError(f"malformed action triple {part!r}",
                                 row=row_num, column="actions")
            m = _CLASS_CODE.match(tokens[0])
            if m is None:
                raise ParseError(f"malformed class code {tokens[0]!r}",
                                 row=row_num, column="actions")
            class_id = int(m.group(1))
            if class_id >= len(vocab.activities):
                raise UnknownLabel(f"unknown class code {tokens[0]!r}")
            try:
                start, end = float(tokens[1]), float(tokens[2])
            except ValueError:
                raise ParseError(f"malformed interval bounds in {part!r}",
                                 row=row_num, column="actions") from None
            intervals.append((class_id, start, end))

    length_text = (row.get("length") or "").strip()
    if length_text:
        try:
            length = float(length_text)
        except ValueError:
            raise ParseError(f"malformed length {length_text!r}",
                             row=row_num, column="length") from None
        n_frames = max(1, math.ceil(length * fps))
    elif intervals:
        # No duration given: cover up to and including the last interval end.
        n_frames = int(math.floor(max(e for _, _, e in intervals) * fps)) + 1
    else:
        n_frames = 1

    frames = []
    for i in range(n_frames):
        t = i / fps
        active = frozenset(c for c, s, e in intervals if s <= t <= e)
        frames.append(FrameRecord(
            video_id=video_id,
            frame_index=i,
            timestamp_s=t,
            gt_activities=active,
            image_ref=f"{video_id}/{i}",
        ))
    union = frozenset(c for f in frames for c in f.gt_activities)
    return VideoRecord(video_id, fps, tuple(frames), union)


_JSONL_FIELDS = {
    "video_id": str,
    "frame_index": int,
    "timestamp_s": (int, float),
    "activities": list,
    "objects": list,
    "interactions": list,
    "image_ref": str,
}


def import_normalized_jsonl(path: Path | str, vocab: Vocabulary) -> list[VideoRecord]:
    """Import the normalized per-frame record format (one JSON object per line).

    Schema per line: ``{"video_id": str, "frame_index": int, "timestamp_s":
    float, "activities": [str], "objects": [str], "interactions": [str],
    "image_ref": str}``. Label names must resolve against the vocabulary.
    """
    per_video: dict[str, list[FrameRecord]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=line_num) from None
            frame = _frame_from_record(record, line_num, vocab)
            per_video.setdefault(frame.video_id, []).append(frame)

    videos = []
    for video_id, frames in per_video.items():
        frames.sort(key=lambda f: f.frame_index)
        indices = [f.frame_index for f in frames]
        if len(set(indices)) != len(indices):
            raise ParseError(f"duplicate frame_index in video {video_id!r}")
        union = frozenset(c for f in frames for c in f.gt_activities)
        videos.append(VideoRecord(video_id, _infer_fps(frames), tuple(frames), union))
    return videos


def _frame_from_record(record: object, line_num: int, vocab: Vocabulary) -> FrameRecord:
    if not isinstance(record, dict):
        raise ParseError("record is not a JSON object", line=line_num)
    for key, expected in _JSONL_FIELDS.items():
        if key not in record:
            raise ParseError(f"missing field {key!r}", line=line_num)
        if not isinstance(record[key], expected) or isinstance(record[key], bool):
            raise ParseError(f"field {key!r} has wrong type", line=line_num)
    if record["frame_index"] < 0 or record["timestamp_s"] < 0:
        raise ParseError("negative frame_index or timestamp_s", line=line_num)
    return FrameRecord(
        video_id=record["video_id"],
        frame_index=record["frame_index"],
        timestamp_s=float(record["timestamp_s"]),
        gt_activities=frozenset(vocab.activities.id(n) for n in record["activities"]),
        gt_objects=frozenset(vocab.objects.id(n) for n in record["objects"]),
        gt_interactions=frozenset(vocab.interactions.id(n) for n in record["interactions"]),
        image_ref=record["image_ref"],
    )


def _infer_fps(frames: Sequence[FrameRecord]) -> float:
    # fps is metadata only; estimate from timestamps when possible.
    if len(frames) >= 2 and frames[-1].timestamp_s > frames[0].timestamp_s:
        return (len(frames) - 1) / (frames[-1].timestamp_s - frames[0].timestamp_s)
    return 1.0


def sample_frames(video: VideoRecord, stride: int) -> list[FrameRecord]:
    """Every ``stride``-th frame of the video, starting at the first."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return list(video.frames[::stride])


def sample_video(video: VideoRecord, stride: int) -> VideoRecord:
    """Like :func:`sample_frames` but repackaged as a VideoRecord."""
    return video.with_frames(sample_frames(video, stride))
