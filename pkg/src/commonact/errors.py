"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# --- vocabulary / annotation ingest ---

class DuplicateLabel(PipelineError):
    """A vocabulary file contains the same label twice."""


class EmptyVocabulary(PipelineError):
    """A vocabulary file contains no labels."""


class UnknownLabel(PipelineError):
    """A label name or class code is not in the closed vocabulary."""


class ParseError(PipelineError):
    """Malformed input data; carries a location when known."""

    def __init__(self, message: str, *, line: int | None = None,
                 row: int | None = None, column: str | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)
        self.line = line
        self.row = row
        self.column = column


# --- context providers ---

class InvalidScore(PipelineError):
    """A verb score vector contains a non-finite value."""


class MissingPrediction(PipelineError):
    """A file-backed context provider has no entry for a frame."""

    def __init__(self, video_id: str, frame_index: int):
        super().__init__(f"no context prediction for {video_id!r} frame {frame_index}")
        self.video_id = video_id
        self.frame_index = frame_index


# --- prompt rendering / completion parsing ---

class EmptyContext(PipelineError):
    """Prompt rendering was given no usable content."""


class EmptyGeneration(PipelineError):
    """A model completion was empty after trimming."""


# --- generation / embedding backends ---

class BackendUnavailable(PipelineError):
    """The backend could not be reached (transport failure)."""


class BackendError(PipelineError):
    """The backend answered with a non-2xx status."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"backend returned status {status}" + (f": {message}" if message else ""))
        self.status = status


class BackendTimeout(PipelineError):
    """The backend did not answer within the configured timeout."""


class MissingEmbedding(PipelineError):
    """A file-backed embedding store has no vector for a key."""


class DimensionError(PipelineError):
    """A vector or matrix has an unexpected width."""


class EmptyText(PipelineError):
    """Text embedding was requested for an empty string."""


# --- classifier ---

class InvalidConfig(PipelineError):
    """A configuration value violates its constraints."""


class TrainingDiverged(PipelineError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class CheckpointError(PipelineError):
    """A checkpoint file is unreadable, truncated, or version-mismatched."""


# --- evaluation ---

class EmptyVideo(PipelineError):
    """Score aggregation was given zero frames."""


class NoPositiveClass(PipelineError):
    """mAP is undefined: no class has a positive example."""


class InvalidFraction(PipelineError):
    """A training fraction is outside (0, 1] or selects zero videos."""


# --- orchestration ---

class PrerequisiteMissing(PipelineError):
    """A stage artifact required by this command has not been produced yet."""

    def __init__(self, producer: str, detail: str = ""):
        msg = f"missing prerequisite artifact; run the {producer!r} command first"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.producer = producer
