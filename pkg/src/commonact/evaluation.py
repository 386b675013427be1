"""Video-level aggregation, average precision, ablations, few-shot sweeps.

Scores are aggregated from frames to videos (elementwise max by default:
an activity counts as present if it is detected anywhere). Per-class AP is
non-interpolated precision at positive ranks; classes with no positive
test video are excluded from the mean rather than scored zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTriple, FusionMask, fuse
from .errors import (
    DimensionError,
    EmptyVideo,
    InvalidFraction,
    NoPositiveClass,
    PipelineError,
)
from .mlp import MlpParams, ScoreVector, TrainConfig, forward, train

# Published full-scale results for this architecture on Action Genome /
# Charades (SlowFast + OPT-30B + CLIP stack). Not reproducible with the
# desk-scale mock backends; kept for orientation in experiment reports.
FULL_SCALE_REFERENCE_MAP = {
    "image": (22.14, 21.92),
    "subsequent": (23.57, 23.61),
    "current": (46.77, 42.14),
    "image+current": (47.93, 43.45),
    "image+current+subsequent": (48.19, 43.94),
}
FULL_SCALE_FEWSHOT_10PCT_CHARADES = 29.80


@dataclass(frozen=True)
class VideoScores:
    video_id: str
    scores: ScoreVector


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP (None where undefined) and their mean."""

    per_class_ap: tuple[float | None, ...]
    map: float
    n_videos: int

    def to_csv(self, class_names: Sequence[str]) -> str:
        lines = ["class_id,class_name,ap"]
        for i, ap in enumerate(self.per_class_ap):
            value = "" if ap is None else repr(ap)
            lines.append(f"{i},{class_names[i]},{value}")
        lines.append(f"mAP,{self.map!r}")
        return "\n".join(lines) + "\n"

    def to_text(self, class_names: Sequence[str]) -> str:
        defined = [ap for ap in self.per_class_ap if ap is not None]
        lines = [
            f"videos evaluated: {self.n_videos}",
            f"classes with positives: {len(defined)} / {len(self.per_class_ap)}",
            f"mAP: {self.map:.4f}",
            "",
        ]
        for i, ap in enumerate(self.per_class_ap):
            shown = "   n/a" if ap is None else f"{ap:.4f}"
            lines.append(f"  {shown}  {class_names[i]}")
        return "\n".join(lines) + "\n"


def aggregate_video(frame_scores: Sequence[ScoreVector], mode: str = "max") -> ScoreVector:
    """Reduce per-frame score vectors to one video score vector."""
    if len(frame_scores) == 0:
        raise EmptyVideo("cannot aggregate zero frames")
    stacked = np.vstack([np.asarray(s, dtype=np.float64) for s in frame_scores])
    if mode == "max":
        return stacked.max(axis=0)
    if mode == "mean":
        return stacked.mean(axis=0)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Non-interpolated AP; None when the class has no positives.

    Videos are ranked by score descending, ties broken by ascending input
    index; AP is the mean of precision-at-rank over the positive ranks.
    """
    if len(scores) != len(labels):
        raise DimensionError(f"{len(scores)} scores vs {len(labels)} labels")
    if len(scores) == 0:
        raise DimensionError("empty inputs")
    n_pos = sum(1 for y in labels if y)
    if n_pos == 0:
        return None
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
            total += hits / rank
    return total / n_pos


def mean_ap(per_class_ap: Sequence[float | None]) -> float:
    """Arithmetic mean over the defined per-class AP values."""
    defined = [ap for ap in per_class_ap if ap is not None]
    if not defined:
        raise NoPositiveClass("every class has zero positives")
    return float(sum(defined) / len(defined))


def evaluate_videos(video_scores: Sequence[VideoScores],
                    video_labels: dict[str, np.ndarray]) -> EvalReport:
    """Per-class AP and mAP over a set of scored videos.

    ``video_labels`` maps video_id to a multi-hot vector of length N.
    """
    if not video_scores:
        raise EmptyVideo("no videos to evaluate")
    score_matrix = np.vstack([np.asarray(v.scores, dtype=np.float64)
                              for v in video_scores])
    label_matrix = np.vstack([video_labels[v.video_id] for v in video_scores])
    if score_matrix.shape != label_matrix.shape:
        raise DimensionError(f"scores {score_matrix.shape} vs labels {label_matrix.shape}")
    per_class = tuple(
        average_precision(score_matrix[:, c].tolist(), label_matrix[:, c].tolist())
        for c in range(score_matrix.shape[1])
    )
    return EvalReport(per_class_ap=per_class, map=mean_ap(per_class),
                      n_videos=len(video_scores))


# --- embedded datasets: the unit ablations and sweeps operate on ---

@dataclass(frozen=True)
class EmbeddedFrame:
    video_id: str
    frame_index: int
    triple: EmbeddingTriple
    labels: np.ndarray  # multi-hot, length N


@dataclass(frozen=True)
class EmbeddedVideo:
    video_id: str
    frames: tuple[EmbeddedFrame, ...]
    video_labels: np.ndarray  # multi-hot, length N


@dataclass(frozen=True)
class EmbeddedDataset:
    n_classes: int
    train: tuple[EmbeddedVideo, ...]
    test: tuple[EmbeddedVideo, ...]


def _canonical_videos(videos: Sequence[EmbeddedVideo]) -> list[EmbeddedVideo]:
    return sorted(videos, key=lambda v: v.video_id)


def build_matrix(videos: Sequence[EmbeddedVideo],
                 mask: FusionMask) -> tuple[np.ndarray, np.ndarray]:
    """Stack fused frame vectors and labels in canonical order.

    Canonical order (video_id, then frame_index) makes training invariant
    to how the video list was assembled, which keeps subset runs exactly
    comparable to full runs.
    """
    xs, ys = [], []
    for video in _canonical_videos(videos):
        for frame in sorted(video.frames, key=lambda f: f.frame_index):
            xs.append(fuse(frame.triple, mask))
            ys.append(frame.labels)
    if not xs:
        raise EmptyVideo("no frames in dataset")
    return np.vstack(xs), np.vstack(ys).astype(np.float64)


def score_videos(params: MlpParams, videos: Sequence[EmbeddedVideo],
                 mask: FusionMask, aggregation: str = "max") -> list[VideoScores]:
    scored = []
    for video in _canonical_videos(videos):
        frames = sorted(video.frames, key=lambda f: f.frame_index)
        per_frame = forward(params, np.vstack([fuse(f.triple, mask) for f in frames]))
        scored.append(VideoScores(video.video_id,
                                  aggregate_video(list(per_frame), aggregation)))
    return scored


def train_and_evaluate(dataset: EmbeddedDataset, mask: FusionMask,
                       cfg: TrainConfig, aggregation: str = "max",
                       train_videos: Sequence[EmbeddedVideo] | None = None,
                       ) -> tuple[MlpParams, EvalReport, list[float]]:
    """Train a fresh head on mask-fused inputs and evaluate on the test split."""
    source = dataset.train if train_videos is None else train_videos
    x, y = build_matrix(source, mask)
    params, trace = train((x, y), cfg)
    labels = {v.video_id: v.video_labels for v in dataset.test}
    report = evaluate_videos(score_videos(params, dataset.test, mask, aggregation), labels)
    return params, report, trace


@dataclass(frozen=True)
class AblationRow:
    mask: FusionMask
    map: float | None
    error: str | None = None


def run_ablation(dataset: EmbeddedDataset, masks: Sequence[FusionMask],
                 cfg: TrainConfig, aggregation: str = "max") -> list[AblationRow]:
    """One (mask, mAP) row per fusion mask; failures do not stop later rows."""
    rows = []
    for mask in masks:
        try:
            _, report, _ = train_and_evaluate(dataset, mask, cfg, aggregation)
            rows.append(AblationRow(mask=mask, map=report.map))
        except PipelineError as exc:
            rows.append(AblationRow(mask=mask, map=None, error=str(exc)))
    return rows


@dataclass(frozen=True)
class FewshotRow:
    fraction: float
    video_ids: tuple[str, ...]
    map: float


def fewshot_subset(dataset: EmbeddedDataset, fraction: float,
                   seed: int) -> list[EmbeddedVideo]:
    """Seed-deterministic training subset of ceil(fraction * n) videos.

    Subsets are nested: a smaller fraction always selects a prefix of the
    same shuffled order.
    """
    if not 0.0 < fraction <= 1.0:
        raise InvalidFraction(f"fraction {fraction} outside (0, 1]")
    videos = _canonical_videos(dataset.train)
    n_take = math.ceil(fraction * len(videos))
    if n_take == 0:
        raise InvalidFraction(f"fraction {fraction} selects zero videos")
    order = np.random.default_rng(seed).permutation(len(videos))
    return [videos[i] for i in order[:n_take]]


def fewshot_sweep(dataset: EmbeddedDataset, fractions: Sequence[float],
                  cfg: TrainConfig, aggregation: str = "max") -> list[FewshotRow]:
    """Train on growing subsets of the training videos, evaluate on full test."""
    rows = []
    for fraction in fractions:
        subset = fewshot_subset(dataset, fraction, cfg.seed)
        _, report, _ = train_and_evaluate(dataset, FusionMask(True, True, True),
                                          cfg, aggregation, train_videos=subset)
        rows.append(FewshotRow(fraction=fraction,
                               video_ids=tuple(v.video_id for v in subset),
                               map=report.map))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    lines = ["mask,map,error"]
    for row in rows:
        value = "" if row.map is None else repr(row.map)
        lines.append(f"{row.mask.name},{value},{row.error or ''}")
    return "\n".join(lines) + "\n"


def fewshot_csv(rows: Sequence[FewshotRow]) -> str:
    lines = ["fraction,n_train_videos,map"]
    for row in rows:
        lines.append(f"{row.fraction!r},{len(row.video_ids)},{row.map!r}")
    return "\n".join(lines) + "\n"
