"""Prompt rendering and completion parsing for the two description stages.

The two templates are versioned text assets shipped with the package. Each
rendered prompt carries two in-context examples and ends exactly at its fill
point, so the model completion starts the target sentence directly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .context import ContextTriple
from .errors import EmptyContext, EmptyGeneration
from .vocab import Vocabulary

# Markers that end a completion; few-shot prompting makes models echo the
# next example block, which these cut off.
STOP_MARKERS = ("\n\n", "\nSubject:", "\nDescription:")

EMPTY_FIELD = "none"

_FILL_POINTS = {
    "current_description": "Video Caption: ",
    "subsequent_action": "The person then proceeds to ",
}


class PromptKind(Enum):
    CURRENT_DESCRIPTION = "current_description"
    SUBSEQUENT_ACTION = "subsequent_action"


@dataclass(frozen=True)
class PromptText:
    text: str
    kind: PromptKind


@dataclass(frozen=True)
class DescriptionPair:
    """Generated sentences for the current and the subsequent action."""

    current: str
    subsequent: str


def _load_template(kind: PromptKind) -> str:
    text = resources.files("commonact.templates").joinpath(
        f"{kind.value}.txt").read_text(encoding="utf-8")
    # Tolerate a single trailing newline added by text tooling.
    if text.endswith("\n"):
        text = text[:-1]
    fill = _FILL_POINTS[kind.value]
    if not text.endswith(fill):
        raise RuntimeError(f"template {kind.value} does not end at {fill!r}")
    return text


def template_version() -> str:
    """Content hash of the template assets; part of every cache key."""
    digest = hashlib.sha256()
    for kind in PromptKind:
        digest.update(_load_template(kind).encode("utf-8"))
    return digest.hexdigest()[:12]


def _join(names: list[str]) -> str:
    return ", ".join(names) if names else EMPTY_FIELD


def render_description_prompt(triple: ContextTriple, vocab: Vocabulary) -> PromptText:
    """Fill the current-action template with the triple's label names."""
    if not triple.verbs:
        raise EmptyContext("context triple has no verbs")
    text = _load_template(PromptKind.CURRENT_DESCRIPTION).format(
        activities=_join([vocab.activities.name(i) for i in triple.verbs]),
        objects=_join([vocab.objects.name(i) for i in triple.objects]),
        interactions=_join([vocab.interactions.name(i) for i in triple.interactions]),
    )
    return PromptText(text, PromptKind.CURRENT_DESCRIPTION)


def render_subsequent_prompt(current_description: str) -> PromptText:
    """Fill the next-action template with a generated description."""
    cleaned = " ".join(current_description.split())
    if not cleaned:
        raise EmptyContext("current description is empty")
    text = _load_template(PromptKind.SUBSEQUENT_ACTION).format(description=cleaned)
    return PromptText(text, PromptKind.SUBSEQUENT_ACTION)


def parse_generation(raw: str, kind: PromptKind) -> str:
    """Trim a raw completion down to a single sentence.

    Cuts at the first stop marker, collapses newlines to spaces, and strips
    surrounding whitespace. For SUBSEQUENT_ACTION the result is the clause
    completing "The person then proceeds to".
    """
    cut = len(raw)
    for marker in STOP_MARKERS:
        pos = raw.find(marker)
        if pos != -1:
            cut = min(cut, pos)
    text = " ".join(raw[:cut].replace("\n", " ").split())
    if not text:
        raise EmptyGeneration(f"empty completion for {kind.value}")
    return text
