"""Frame/text embedding backends and late concatenation fusion.

Per frame the pipeline needs three fixed-width vectors: the frame image
embedding, the current-description embedding, and the subsequent-action
embedding. Real deployments serve these from an encoding service or from
precomputed files; tests use the deterministic mock.
"""

from __future__ import annotations

import hashlib
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
import requests

from .errors import (
    BackendError,
    BackendTimeout,
    BackendUnavailable,
    DimensionError,
    EmptyText,
    MissingEmbedding,
    ParseError,
)

DEFAULT_DIM = 512


@dataclass(frozen=True)
class EmbeddingTriple:
    """(image, current description, subsequent action) vectors, equal width."""

    u: np.ndarray
    e: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class FusionMask:
    """Which modalities feed the classifier; at least one must be enabled."""

    use_image: bool = True
    use_current: bool = True
    use_subsequent: bool = True

    def __post_init__(self):
        if not (self.use_image or self.use_current or self.use_subsequent):
            raise ValueError("fusion mask must enable at least one modality")

    @property
    def count(self) -> int:
        return int(self.use_image) + int(self.use_current) + int(self.use_subsequent)

    @property
    def name(self) -> str:
        parts = []
        if self.use_image:
            parts.append("image")
        if self.use_current:
            parts.append("current")
        if self.use_subsequent:
            parts.append("subsequent")
        return "+".join(parts)


# The five standard ablation rows, weakest modality set first.
ABLATION_MASKS = (
    FusionMask(True, False, False),
    FusionMask(False, False, True),
    FusionMask(False, True, False),
    FusionMask(True, True, False),
    FusionMask(True, True, True),
)


class EmbeddingBackend(Protocol):
    dim: int

    def embed_image(self, image_ref: str) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def _check_width(vec: np.ndarray, dim: int) -> np.ndarray:
    if vec.shape != (dim,):
        raise DimensionError(f"expected width {dim}, got shape {vec.shape}")
    return vec


def embed_image(backend: EmbeddingBackend, image_ref: str) -> np.ndarray:
    """Embed one frame image reference; always width ``backend.dim``."""
    return _check_width(backend.embed_image(image_ref), backend.dim)


def embed_text(backend: EmbeddingBackend, text: str) -> np.ndarray:
    """Embed one text; empty input is an error, width is ``backend.dim``."""
    if not text.strip():
        raise EmptyText("cannot embed empty text")
    return _check_width(backend.embed_text(text), backend.dim)


def fuse(triple: EmbeddingTriple, mask: FusionMask) -> np.ndarray:
    """Concatenate the enabled vectors in fixed (image, current, subsequent) order."""
    blocks = []
    if mask.use_image:
        blocks.append(triple.u)
    if mask.use_current:
        blocks.append(triple.e)
    if mask.use_subsequent:
        blocks.append(triple.q)
    return np.concatenate(blocks)


def _hash_unit_vector(material: str, dim: int) -> np.ndarray:
    seed_int = int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "little")
    rng = np.random.default_rng(seed_int)
    vec = rng.standard_normal(dim)
    return (vec / np.linalg.norm(vec)).astype(np.float32)


class MockEmbeddingBackend:
    """Deterministic hash-seeded embeddings with useful geometry.

    Image vectors are pure content hashes of the reference string. Text
    vectors are the normalized sum of per-token hash vectors, so texts
    sharing words (label names in particular) have correlated embeddings
    and stay linearly decodable by the classifier.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self._seed = seed
        self.calls = 0

    def embed_image(self, image_ref: str) -> np.ndarray:
        self.calls += 1
        return _hash_unit_vector(f"img|{self._seed}|{image_ref}", self.dim)

    def embed_text(self, text: str) -> np.ndarray:
        self.calls += 1
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            return _hash_unit_vector(f"txt|{self._seed}|{text}", self.dim)
        total = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            total += _hash_unit_vector(f"tok|{self._seed}|{token}", self.dim)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            return _hash_unit_vector(f"txt|{self._seed}|{text}", self.dim)
        return (total / norm).astype(np.float32)


class FileEmbeddingStore:
    """Precomputed vectors from a binary record file, keyed by string.

    Record layout: ``key_len(u32 LE) | key(utf8) | dim(u32 LE) |
    dim * f32(LE)``, records back to back. Image lookups use the image
    reference as key; text lookups use the exact text.
    """

    def __init__(self, path: Path | str, dim: int = DEFAULT_DIM):
        self.dim = dim
        self._index = read_embedding_file(path)

    def _lookup(self, key: str) -> np.ndarray:
        try:
            vec = self._index[key]
        except KeyError:
            raise MissingEmbedding(f"no stored embedding for key {key!r}") from None
        if vec.shape != (self.dim,):
            raise DimensionError(
                f"stored embedding for {key!r} has width {vec.shape[0]}, expected {self.dim}")
        return vec

    def embed_image(self, image_ref: str) -> np.ndarray:
        return self._lookup(image_ref)

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        return self._lookup(text)


class HttpEmbeddingBackend:
    """Client for the ``/v1/embed`` wire contract."""

    def __init__(self, base_url: str, dim: int = DEFAULT_DIM, *,
                 timeout_s: float = 60.0):
        self.dim = dim
        self._url = base_url.rstrip("/") + "/v1/embed"
        self._timeout_s = timeout_s
        self._lock = threading.Lock()
        self.calls = 0

    def _post(self, kind: str, payload: str) -> np.ndarray:
        with self._lock:
            self.calls += 1
        try:
            resp = requests.post(self._url, json={"kind": kind, "payload": payload},
                                 timeout=self._timeout_s)
        except requests.Timeout:
            raise BackendTimeout(f"no answer within {self._timeout_s}s") from None
        except requests.ConnectionError as exc:
            raise BackendUnavailable(str(exc)) from None
        if resp.status_code // 100 != 2:
            raise BackendError(resp.status_code)
        try:
            vec = np.asarray(resp.json()["vector"], dtype=np.float32)
        except (ValueError, KeyError):
            raise BackendError(resp.status_code, "response body missing 'vector'")
        return _check_width(vec, self.dim)

    def embed_image(self, image_ref: str) -> np.ndarray:
        return self._post("image", image_ref)

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        return self._post("text", text)


def write_embedding_file(path: Path | str,
                         items: Iterable[tuple[str, np.ndarray]]) -> None:
    """Write (key, vector) pairs in the binary record layout."""
    with Path(path).open("wb") as fh:
        for key, vec in items:
            key_bytes = key.encode("utf-8")
            data = np.asarray(vec, dtype="<f4")
            if data.ndim != 1:
                raise DimensionError(f"vector for {key!r} is not one-dimensional")
            fh.write(struct.pack("<I", len(key_bytes)))
            fh.write(key_bytes)
            fh.write(struct.pack("<I", data.shape[0]))
            fh.write(data.tobytes())


def read_embedding_file(path: Path | str) -> dict[str, np.ndarray]:
    """Read all records of a binary embedding file into a dict."""
    blob = Path(path).read_bytes()
    index: dict[str, np.ndarray] = {}
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(f"truncated embedding file {path}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (key_len,) = struct.unpack("<I", take(4))
        key = take(key_len).decode("utf-8")
        (dim,) = struct.unpack("<I", take(4))
        vec = np.frombuffer(take(4 * dim), dtype="<f4").copy()
        index[key] = vec
    return index
