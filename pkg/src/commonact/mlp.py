"""Multi-label MLP head: forward, analytic gradients, training, checkpoints.

A three-layer perceptron (hidden widths 512-512 by default, configurable
for small test instances) maps fused embeddings to per-class sigmoid
scores. Parameters are float32, matching the checkpoint format, so a
save/load round trip is bitwise exact; all arithmetic runs in float64 so
gradients agree with finite differences to high precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DimensionError, InvalidConfig, TrainingDiverged

# Per-class scores in (0, 1).
ScoreVector = np.ndarray

PROB_CLAMP = 1e-7

_MAGIC = b"MLPC"
_VERSION = 1


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def din(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w3.shape[0]

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    weight_decay: float = 0.0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise InvalidConfig(f"weight_decay must be >= 0, got {self.weight_decay}")


def init_params(din: int, n: int, seed: int,
                hidden: tuple[int, int] = (512, 512)) -> MlpParams:
    """Zero-mean weights scaled by 1/sqrt(fan_in); zero biases."""
    if din < 1 or n < 1:
        raise InvalidConfig(f"din and n must be >= 1, got {din}, {n}")
    h1, h2 = hidden
    rng = np.random.default_rng(seed)

    def layer(fan_out: int, fan_in: int) -> np.ndarray:
        return (rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)).astype(np.float32)

    return MlpParams(
        w1=layer(h1, din), b1=np.zeros(h1, dtype=np.float32),
        w2=layer(h2, h1), b2=np.zeros(h2, dtype=np.float32),
        w3=layer(n, h2), b3=np.zeros(n, dtype=np.float32),
    )


def _forward_full(params: MlpParams, x: np.ndarray):
    """Batched forward pass in float64; returns activations for backprop."""
    w1, b1, w2, b2, w3, b3 = (t.astype(np.float64) for t in params.tensors())
    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ w3.T + b3
    p = 1.0 / (1.0 + np.exp(-z3))
    return z1, a1, z2, a2, p


def forward(params: MlpParams, x: np.ndarray) -> ScoreVector:
    """Per-class scores sigmoid(W3 relu(W2 relu(W1 x + b1) + b2) + b3)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.din:
        raise DimensionError(f"expected input width {params.din}, got shape {x.shape}")
    p = _forward_full(params, x)[-1]
    return p[0] if squeeze else p


def loss(scores: ScoreVector, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over classes, probabilities clamped."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise DimensionError(f"scores {scores.shape} vs labels {labels.shape}")
    p = np.clip(scores, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)


def _backward_full(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> MlpGrads:
    """Gradients of the batch-mean loss w.r.t. every weight and bias."""
    w2 = params.w2.astype(np.float64)
    w3 = params.w3.astype(np.float64)
    z1, a1, z2, a2, p = _forward_full(params, x)
    n_total = labels.size
    # d(loss)/d(z3); zero where the probability clamp is active.
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    dz3 = np.where(inside, p - labels, 0.0) / n_total
    dw3 = dz3.T @ a2
    db3 = dz3.sum(axis=0)
    dz2 = (dz3 @ w3) * (z2 > 0.0)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2) * (z1 > 0.0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return MlpGrads(dw1, db1, dw2, db2, dw3, db3)


def backward(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> MlpGrads:
    """Analytic gradient of :func:`loss` composed with :func:`forward`."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        labels = labels[None, :]
    if x.shape[1] != params.din:
        raise DimensionError(f"expected input width {params.din}, got shape {x.shape}")
    if labels.shape != (x.shape[0], params.n_classes):
        raise DimensionError(f"labels shape {labels.shape} does not match "
                             f"({x.shape[0]}, {params.n_classes})")
    return _backward_full(params, x, labels)


def train(data: tuple[np.ndarray, np.ndarray], cfg: TrainConfig,
          hidden: tuple[int, int] = (512, 512),
          params: MlpParams | None = None) -> tuple[MlpParams, list[float]]:
    """Mini-batch training with a per-parameter adaptive step.

    The step divides by a running RMS of each parameter's gradient.
    Shuffling is derived from cfg.seed, so the result is a pure function of
    (data, cfg, hidden). Returns the final parameters and the loss trace,
    where entry 0 is the pre-training loss and entry i the loss after
    epoch i, both over the full dataset.
    """
    cfg.validate()
    x = np.asarray(data[0], dtype=np.float64)
    y = np.asarray(data[1], dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"bad dataset shapes {x.shape}, {y.shape}")
    if x.shape[0] == 0:
        raise InvalidConfig("empty training dataset")

    if params is None:
        params = init_params(x.shape[1], y.shape[1], cfg.seed, hidden)
    elif params.din != x.shape[1] or params.n_classes != y.shape[1]:
        raise DimensionError("initial params do not match dataset widths")
    else:
        params = MlpParams(*(t.copy() for t in params.tensors()))

    theta = [t.astype(np.float64) for t in params.tensors()]
    rms = [np.zeros_like(t) for t in theta]
    rng = np.random.default_rng(cfg.seed)

    def full_loss() -> float:
        return loss(_forward_full(params, x)[-1], y)

    trace = [full_loss()]
    n = x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = _backward_full(params, x[batch], y[batch])
            for i, (t, g) in enumerate(zip(theta, grads.tensors())):
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * t
                rms[i] = 0.9 * rms[i] + 0.1 * g * g
                theta[i] = t - cfg.learning_rate * g / (np.sqrt(rms[i]) + 1e-8)
            for t32, t64 in zip(params.tensors(), theta):
                t32[...] = t64.astype(np.float32)
        epoch_loss = full_loss()
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(epoch)
        trace.append(epoch_loss)
    return params, trace


def save_checkpoint(params: MlpParams, path: Path | str) -> None:
    """Binary layout: magic, version, widths, then f32 LE tensors row-major."""
    h1 = params.w1.shape[0]
    h2 = params.w2.shape[0]
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5I", _VERSION, params.din, h1, h2, params.n_classes))
        for tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: Path | str) -> MlpParams:
    blob = Path(path).read_bytes()
    if len(blob) < 24:
        raise CheckpointError(f"{path}: truncated header")
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, din, h1, h2, n = struct.unpack("<5I", blob[4:24])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    shapes = [(h1, din), (h1,), (h2, h1), (h2,), (n, h2), (n,)]
    expected = 24 + 4 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, got {len(blob)}")
    pos = 24
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        tensors.append(np.frombuffer(blob, dtype="<f4", count=count,
                                     offset=pos).reshape(shape).copy())
        pos += 4 * count
    return MlpParams(*tensors)
