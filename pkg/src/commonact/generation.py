"""Text-generation backends, response caching, and the two-stage inference.

The wire contract is ``POST {base_url}/v1/generate`` with body
``{"prompt", "max_tokens", "temperature", "stop", "seed"}`` returning
``{"text": ...}``. A deterministic mock backend stands in for the real
model in tests and synthetic experiments: it derives a plausible sentence
from a stable hash of the prompt and echoes the prompt's label names so
the downstream text embeddings carry the same signal real descriptions
would.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .context import ContextTriple
from .errors import BackendError, BackendTimeout, BackendUnavailable
from .prompts import (
    STOP_MARKERS,
    DescriptionPair,
    PromptKind,
    PromptText,
    parse_generation,
    render_description_prompt,
    render_subsequent_prompt,
    template_version,
)
from .vocab import Vocabulary

log = logging.getLogger(__name__)

# Generation length limits for the two stages.
DEFAULT_MAX_TOKENS = {
    PromptKind.CURRENT_DESCRIPTION: 260,
    PromptKind.SUBSEQUENT_ACTION: 200,
}


@dataclass(frozen=True)
class GenerationRequest:
    prompt: PromptText
    max_tokens: int
    temperature: float = 0.0
    stop: tuple[str, ...] = STOP_MARKERS
    seed: int | None = None


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    backend_id: str
    cached: bool = False


def make_request(prompt: PromptText, *, max_tokens: int | None = None,
                 temperature: float = 0.0,
                 seed: int | None = None) -> GenerationRequest:
    """Build a request with the stage's default token limit unless overridden."""
    if max_tokens is None:
        max_tokens = DEFAULT_MAX_TOKENS[prompt.kind]
    if max_tokens <= 0:
        raise ValueError(f"max_tokens must be > 0, got {max_tokens}")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    return GenerationRequest(prompt=prompt, max_tokens=max_tokens,
                             temperature=temperature, seed=seed)


class GenerationBackend(Protocol):
    backend_id: str

    def complete(self, req: GenerationRequest) -> str: ...


class HttpGenerationBackend:
    """Client for the ``/v1/generate`` wire contract with retry and backoff."""

    def __init__(self, base_url: str, *, timeout_s: float = 60.0,
                 max_attempts: int = 3, backoff_s: float = 0.5):
        self.backend_id = f"http:{base_url}"
        self._url = base_url.rstrip("/") + "/v1/generate"
        self._timeout_s = timeout_s
        self._max_attempts = max_attempts
        self._backoff_s = backoff_s
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: GenerationRequest) -> str:
        body = {
            "prompt": req.prompt.text,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "stop": list(req.stop),
            "seed": req.seed,
        }
        error: Exception | None = None
        for attempt in range(self._max_attempts):
            if attempt:
                time.sleep(self._backoff_s * 2 ** (attempt - 1))
            with self._lock:
                self.calls += 1
            try:
                resp = requests.post(self._url, json=body, timeout=self._timeout_s)
            except requests.Timeout:
                error = BackendTimeout(f"no answer within {self._timeout_s}s")
                continue
            except requests.ConnectionError as exc:
                error = BackendUnavailable(str(exc))
                continue
            if resp.status_code // 100 != 2:
                error = BackendError(resp.status_code)
                continue
            try:
                return resp.json()["text"]
            except (ValueError, KeyError):
                raise BackendError(resp.status_code, "response body missing 'text'")
        assert error is not None
        raise error


_CURRENT_PATTERNS = (
    "A person is seen {acts}. They are {ints} the {objs} nearby.",
    "A person is {acts} while {ints} the {objs}.",
    "Someone is {acts}, {ints} the {objs} in the room.",
)
_NEXT_PATTERNS = (
    "continue {words} for a while.",
    "keep {words} before moving on.",
    "finish {words} and tidy up.",
)
# Few-shot completions tend to run on into the next example block; the mock
# reproduces that so completion parsing is exercised realistically.
_CURRENT_ECHO = ("\n\nSubject: person\nActivities: watching television\n"
                 "Objects: none\nInteractions: none\n"
                 "Video Caption: A person watches television.")
_NEXT_ECHO = ("\n\nDescription: The person is holding a towel.\n"
              "The person then proceeds to hang the towel.")


def _last_field(prompt: str, prefix: str) -> str | None:
    for line in reversed(prompt.split("\n")):
        if line.startswith(prefix):
            return line[len(prefix):]
    return None


class MockGenerationBackend:
    """Deterministic stand-in for the language model.

    The completion is a function of (prompt text, request seed, backend
    seed) only. For description prompts it weaves the prompt's activity,
    object, and interaction names into a sentence; for next-action prompts
    it reuses the content words of the given description.
    """

    backend_id = "mock"

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: GenerationRequest) -> str:
        with self._lock:
            self.calls += 1
        prompt = req.prompt.text
        digest = hashlib.sha256(
            f"gen|{self._seed}|{req.seed}|{prompt}".encode()).digest()
        pick = int.from_bytes(digest[:4], "little")

        if prompt.endswith("Video Caption: "):
            acts = _last_field(prompt, "Activities: ")
            objs = _last_field(prompt, "Objects: ")
            ints = _last_field(prompt, "Interactions: ")
            if acts is not None:
                pattern = _CURRENT_PATTERNS[pick % len(_CURRENT_PATTERNS)]
                return pattern.format(acts=acts, objs=objs or "none",
                                      ints=ints or "none") + _CURRENT_ECHO

        if prompt.endswith("The person then proceeds to "):
            desc = _last_field(prompt, "Description: ")
            if desc is not None:
                words = [w for w in re.findall(r"[A-Za-z0-9]+", desc) if len(w) >= 3]
                pattern = _NEXT_PATTERNS[pick % len(_NEXT_PATTERNS)]
                return pattern.format(words=" ".join(words[:12]) or "that") + _NEXT_ECHO

        return f"A person is doing something in the room ({digest[:4].hex()})."


def generate(backend: GenerationBackend, req: GenerationRequest) -> GenerationResponse:
    """One uncached completion from the backend."""
    return GenerationResponse(text=backend.complete(req),
                              backend_id=backend.backend_id, cached=False)


class GenerationCache:
    """Content-addressed on-disk cache of raw completions.

    Keys hash the template version, prompt text, and sampling parameters.
    Entries live at ``{root}/{key[:2]}/{key}.txt``. Writes go through a
    temp file plus rename, so concurrent writers of the same key are safe
    and exactly one entry survives.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(req: GenerationRequest, template_ver: str) -> str:
        material = "\x1f".join([
            template_ver,
            req.prompt.text,
            str(req.max_tokens),
            repr(float(req.temperature)),
            str(req.seed),
        ])
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.txt"

    def load(self, key: str) -> str | None:
        path = self.path_for(key)
        try:
            return path.read_bytes().decode("utf-8")
        except FileNotFoundError:
            return None
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("ignoring corrupt cache entry %s: %s", path, exc)
            return None

    def store(self, key: str, text: str) -> None:
        # Best effort: a cache that cannot persist must not fail the caller.
        path = self.path_for(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        except OSError as exc:
            log.warning("cannot write cache entry %s: %s", path, exc)
            return
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except OSError as exc:
            log.warning("cannot write cache entry %s: %s", path, exc)
            if os.path.exists(tmp):
                os.unlink(tmp)


def cached_generate(cache: GenerationCache, backend: GenerationBackend,
                    req: GenerationRequest,
                    template_ver: str | None = None) -> GenerationResponse:
    """Serve from the cache when possible, otherwise generate and persist."""
    if template_ver is None:
        template_ver = template_version()
    key = cache.key_for(req, template_ver)
    hit = cache.load(key)
    if hit is not None:
        return GenerationResponse(text=hit, backend_id=backend.backend_id, cached=True)
    resp = generate(backend, req)
    cache.store(key, resp.text)
    return resp


@dataclass
class DescriptionPipeline:
    """The cascaded current-description then next-action inference."""

    vocab: Vocabulary
    backend: GenerationBackend
    cache: GenerationCache | None = None
    seed: int | None = None
    temperature: float = 0.0
    template_ver: str = field(default_factory=template_version)

    def _run(self, prompt: PromptText) -> str:
        req = make_request(prompt, temperature=self.temperature, seed=self.seed)
        if self.cache is not None:
            resp = cached_generate(self.cache, self.backend, req, self.template_ver)
        else:
            resp = generate(self.backend, req)
        return parse_generation(resp.text, prompt.kind)

    def describe_frame(self, triple: ContextTriple) -> str:
        """Generate the current-action description for one frame's context."""
        return self._run(render_description_prompt(triple, self.vocab))

    def infer_subsequent(self, current: str) -> str:
        """Generate the next-action clause from a current description."""
        return self._run(render_subsequent_prompt(current))

    def describe(self, triple: ContextTriple) -> DescriptionPair:
        current = self.describe_frame(triple)
        return DescriptionPair(current=current, subsequent=self.infer_subsequent(current))
