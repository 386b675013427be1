"""Pipeline configuration: flat key=value files, APP_ env vars, CLI flags.

Precedence, lowest to highest: built-in defaults, config file, environment
(``APP_`` prefix, dots become underscores), command-line flags. The
resolved configuration is a plain string dict first, so it can be hashed,
recorded in run manifests, and replayed exactly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .context import ContextConfig
from .errors import InvalidConfig
from .mlp import TrainConfig

CONTEXT_PROVIDERS = ("groundtruth", "file", "mock")
GENERATION_PROVIDERS = ("http", "mock")
EMBEDDING_PROVIDERS = ("file", "http", "mock")


def _parse_bool_free_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InvalidConfig(f"expected integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InvalidConfig(f"expected number, got {text!r}") from None


def _parse_fractions(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise InvalidConfig("fractions list is empty")
    return values


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise InvalidConfig(f"expected one of {options}, got {text!r}")
        return text
    return parse


@dataclass(frozen=True)
class _Key:
    name: str
    parse: Callable[[str], object]
    default: str | None = None
    required: bool = False


_KEYS = (
    _Key("vocab.activities", str, required=True),
    _Key("vocab.objects", str, required=True),
    _Key("vocab.interactions", str, required=True),
    _Key("dataset.train", str, required=True),
    _Key("dataset.test", str, required=True),
    _Key("dataset.format", _choice(("auto", "jsonl", "csv")), default="auto"),
    _Key("dataset.csv_fps", _parse_float, default="1.0"),
    _Key("provider.context", _choice(CONTEXT_PROVIDERS), default="groundtruth"),
    _Key("provider.generation", _choice(GENERATION_PROVIDERS), default="mock"),
    _Key("provider.embedding", _choice(EMBEDDING_PROVIDERS), default="mock"),
    _Key("backend.generation.url", str, default=""),
    _Key("backend.embedding.url", str, default=""),
    _Key("context.file", str, default=""),
    _Key("embedding.file", str, default=""),
    _Key("cache_dir", str, default=""),
    _Key("out", str, required=True),
    _Key("seed", _parse_bool_free_int, default="0"),
    _Key("stride", _parse_bool_free_int, default="4"),
    _Key("k_verbs", _parse_bool_free_int, default="5"),
    _Key("clip_len", _parse_bool_free_int, default="5"),
    _Key("dim", _parse_bool_free_int, default="512"),
    _Key("aggregate", _choice(("max", "mean")), default="max"),
    _Key("concurrency", _parse_bool_free_int, default="4"),
    _Key("timeout_s", _parse_float, default="60.0"),
    _Key("fractions", _parse_fractions, default="0.1,0.25,0.5,1.0"),
    _Key("train.learning_rate", _parse_float, default="0.001"),
    _Key("train.epochs", _parse_bool_free_int, default="30"),
    _Key("train.batch_size", _parse_bool_free_int, default="64"),
    _Key("train.weight_decay", _parse_float, default="0.0"),
)
_KEY_BY_NAME = {k.name: k for k in _KEYS}


def env_var_for(key: str) -> str:
    return "APP_" + key.upper().replace(".", "_")


def load_config_file(path: Path | str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments ignored."""
    values: dict[str, str] = {}
    for line_num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InvalidConfig(f"{path}:{line_num}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _KEY_BY_NAME:
            raise InvalidConfig(f"{path}:{line_num}: unknown key {key!r}")
        values[key] = value.strip()
    return values


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view over the resolved flat configuration."""

    flat: dict[str, str]

    def __getitem__(self, key: str) -> object:
        return _KEY_BY_NAME[key].parse(self.flat[key])

    # -- typed accessors used throughout the pipeline --
    @property
    def vocab_activities(self) -> Path: return Path(self.flat["vocab.activities"])
    @property
    def vocab_objects(self) -> Path: return Path(self.flat["vocab.objects"])
    @property
    def vocab_interactions(self) -> Path: return Path(self.flat["vocab.interactions"])
    @property
    def dataset_train(self) -> Path: return Path(self.flat["dataset.train"])
    @property
    def dataset_test(self) -> Path: return Path(self.flat["dataset.test"])
    @property
    def dataset_format(self) -> str: return self.flat["dataset.format"]
    @property
    def csv_fps(self) -> float: return float(self.flat["dataset.csv_fps"])
    @property
    def provider_context(self) -> str: return self.flat["provider.context"]
    @property
    def provider_generation(self) -> str: return self.flat["provider.generation"]
    @property
    def provider_embedding(self) -> str: return self.flat["provider.embedding"]
    @property
    def generation_url(self) -> str: return self.flat["backend.generation.url"]
    @property
    def embedding_url(self) -> str: return self.flat["backend.embedding.url"]
    @property
    def context_file(self) -> Path | None:
        return Path(self.flat["context.file"]) if self.flat["context.file"] else None
    @property
    def embedding_file(self) -> Path | None:
        return Path(self.flat["embedding.file"]) if self.flat["embedding.file"] else None
    @property
    def out_dir(self) -> Path: return Path(self.flat["out"])
    @property
    def cache_dir(self) -> Path:
        return Path(self.flat["cache_dir"]) if self.flat["cache_dir"] \
            else self.out_dir / "cache"
    @property
    def seed(self) -> int: return int(self.flat["seed"])
    @property
    def stride(self) -> int: return int(self.flat["stride"])
    @property
    def dim(self) -> int: return int(self.flat["dim"])
    @property
    def aggregate(self) -> str: return self.flat["aggregate"]
    @property
    def concurrency(self) -> int: return int(self.flat["concurrency"])
    @property
    def timeout_s(self) -> float: return float(self.flat["timeout_s"])
    @property
    def fractions(self) -> tuple[float, ...]:
        return _parse_fractions(self.flat["fractions"])

    def context_config(self) -> ContextConfig:
        return ContextConfig(k_verbs=int(self.flat["k_verbs"]),
                             clip_len=int(self.flat["clip_len"]))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=float(self.flat["train.learning_rate"]),
            epochs=int(self.flat["train.epochs"]),
            batch_size=int(self.flat["train.batch_size"]),
            seed=self.seed,
            weight_decay=float(self.flat["train.weight_decay"]),
        )

    def config_hash(self) -> str:
        material = "\n".join(f"{k}={v}" for k, v in sorted(self.flat.items()))
        return hashlib.sha256(material.encode("utf-8")).hexdigest()


def resolve_config(config_path: Path | str | None = None,
                   cli_overrides: Mapping[str, str] | None = None,
                   env: Mapping[str, str] | None = None) -> PipelineConfig:
    """Layer defaults, config file, environment, and CLI flags into one config."""
    env = os.environ if env is None else env
    flat: dict[str, str] = {k.name: k.default for k in _KEYS if k.default is not None}
    if config_path is not None:
        flat.update(load_config_file(config_path))
    for key in _KEYS:
        env_value = env.get(env_var_for(key.name))
        if env_value is not None:
            flat[key.name] = env_value
    for name, value in (cli_overrides or {}).items():
        if name not in _KEY_BY_NAME:
            raise InvalidConfig(f"unknown config key {name!r}")
        if value is not None:
            flat[name] = str(value)

    missing = [k.name for k in _KEYS if k.required and not flat.get(k.name)]
    if missing:
        raise InvalidConfig(f"missing required config keys: {', '.join(missing)}")
    for key in _KEYS:
        if key.name in flat:
            key.parse(flat[key.name])  # type check now, fail fast
    return PipelineConfig(flat=flat)


def validate_runtime_paths(cfg: PipelineConfig) -> None:
    """Fail before any stage runs if referenced inputs cannot exist."""
    for label, path in (
        ("vocab.activities", cfg.vocab_activities),
        ("vocab.objects", cfg.vocab_objects),
        ("vocab.interactions", cfg.vocab_interactions),
        ("dataset.train", cfg.dataset_train),
        ("dataset.test", cfg.dataset_test),
    ):
        if not path.is_file():
            raise InvalidConfig(f"{label}: file not found: {path}")
    if cfg.provider_context == "file":
        if cfg.context_file is None or not cfg.context_file.is_file():
            raise InvalidConfig("provider.context=file requires an existing context.file")
    if cfg.provider_embedding == "file":
        if cfg.embedding_file is None or not cfg.embedding_file.is_file():
            raise InvalidConfig("provider.embedding=file requires an existing embedding.file")
    if cfg.provider_generation == "http" and not cfg.generation_url:
        raise InvalidConfig("provider.generation=http requires backend.generation.url")
    if cfg.provider_embedding == "http" and not cfg.embedding_url:
        raise InvalidConfig("provider.embedding=http requires backend.embedding.url")
