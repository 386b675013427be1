"""Stage orchestration: ingest, describe, train, eval, ablate, fewshot.

Every command writes its artifacts into the configured output directory
and records a manifest (resolved config, content hashes of inputs and
artifacts, backend call counts). Artifacts are never overwritten, so the
same output directory can accumulate the stages of one run but two runs
need two directories.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PipelineConfig, validate_runtime_paths
from .context import (
    FileContextProvider,
    GroundTruthContextProvider,
    MockContextProvider,
    context_for_frame,
)
from .embeddings import (
    ABLATION_MASKS,
    EmbeddingTriple,
    FileEmbeddingStore,
    FusionMask,
    HttpEmbeddingBackend,
    MockEmbeddingBackend,
    embed_image,
    embed_text,
    write_embedding_file,
)
from .errors import InvalidConfig, PipelineError, PrerequisiteMissing
from .evaluation import (
    EmbeddedDataset,
    EmbeddedFrame,
    EmbeddedVideo,
    ablation_csv,
    build_matrix,
    evaluate_videos,
    fewshot_csv,
    fewshot_sweep,
    run_ablation,
    score_videos,
)
from .generation import (
    DescriptionPipeline,
    GenerationCache,
    HttpGenerationBackend,
    MockGenerationBackend,
)
from .mlp import load_checkpoint, save_checkpoint, train
from .prompts import template_version
from .vocab import VideoRecord, Vocabulary, import_charades_csv, \
    import_normalized_jsonl, load_vocabulary, sample_video

log = logging.getLogger(__name__)

DESCRIPTIONS_FILE = "descriptions.jsonl"
CHECKPOINT_FILE = "checkpoint.mlp"
LOSS_TRACE_FILE = "loss_trace.csv"
EVAL_CSV_FILE = "eval_report.csv"
EVAL_TXT_FILE = "eval_report.txt"
TRAIN_EMBEDDINGS_FILE = "embeddings.train.bin"
TEST_EMBEDDINGS_FILE = "embeddings.test.bin"
ABLATION_FILE = "ablation.csv"
FEWSHOT_FILE = "fewshot.csv"

FULL_MASK = FusionMask(True, True, True)

COMMANDS = ("run", "describe", "train", "eval", "ablate", "fewshot")


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _refuse_overwrite(path: Path) -> Path:
    if path.exists():
        raise PipelineError(f"refusing to overwrite existing artifact {path}")
    return path


def _multihot(ids, n: int) -> np.ndarray:
    vec = np.zeros(n, dtype=np.float64)
    if ids:
        vec[sorted(ids)] = 1.0
    return vec


def _import_dataset(path: Path, fmt: str, vocab: Vocabulary,
                    csv_fps: float) -> list[VideoRecord]:
    if fmt == "auto":
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt == "csv":
        return import_charades_csv(path, vocab, fps=csv_fps)
    return import_normalized_jsonl(path, vocab)


class Runtime:
    """Loaded inputs plus constructed providers for one command invocation."""

    def __init__(self, cfg: PipelineConfig):
        validate_runtime_paths(cfg)
        self.cfg = cfg
        self.vocab = load_vocabulary(cfg.vocab_activities, cfg.vocab_objects,
                                     cfg.vocab_interactions)
        self.train_videos = _import_dataset(cfg.dataset_train, cfg.dataset_format,
                                            self.vocab, cfg.csv_fps)
        self.test_videos = _import_dataset(cfg.dataset_test, cfg.dataset_format,
                                           self.vocab, cfg.csv_fps)
        overlap = {v.video_id for v in self.train_videos} & \
            {v.video_id for v in self.test_videos}
        if overlap:
            raise InvalidConfig(f"video ids in both splits: {sorted(overlap)[:5]}")
        self.sampled_train = [sample_video(v, cfg.stride) for v in self.train_videos]
        self.sampled_test = [sample_video(v, cfg.stride) for v in self.test_videos]

        self.context_provider = self._make_context_provider()
        self.generation_backend = self._make_generation_backend()
        self.cache = GenerationCache(cfg.cache_dir)
        self.describer = DescriptionPipeline(
            vocab=self.vocab, backend=self.generation_backend,
            cache=self.cache, seed=cfg.seed)
        self.embedding_backend = self._make_embedding_backend()

    def _make_context_provider(self):
        name = self.cfg.provider_context
        if name == "groundtruth":
            return GroundTruthContextProvider(self.vocab)
        if name == "file":
            return FileContextProvider(self.cfg.context_file, self.vocab)
        return MockContextProvider(self.vocab, seed=self.cfg.seed)

    def _make_generation_backend(self):
        if self.cfg.provider_generation == "http":
            return HttpGenerationBackend(self.cfg.generation_url,
                                         timeout_s=self.cfg.timeout_s)
        return MockGenerationBackend(seed=self.cfg.seed)

    def _make_embedding_backend(self):
        name = self.cfg.provider_embedding
        if name == "file":
            return FileEmbeddingStore(self.cfg.embedding_file, dim=self.cfg.dim)
        if name == "http":
            return HttpEmbeddingBackend(self.cfg.embedding_url, dim=self.cfg.dim,
                                        timeout_s=self.cfg.timeout_s)
        return MockEmbeddingBackend(dim=self.cfg.dim, seed=self.cfg.seed)

    def backend_calls(self) -> dict[str, int]:
        return {
            "generation": getattr(self.generation_backend, "calls", 0),
            "embedding": getattr(self.embedding_backend, "calls", 0),
        }


def stage_describe(rt: Runtime) -> dict[str, Path]:
    """Context -> current description -> subsequent action, for every frame."""
    out_path = _refuse_overwrite(rt.cfg.out_dir / DESCRIPTIONS_FILE)
    ctx_cfg = rt.cfg.context_config()
    tasks = [(video, frame.frame_index)
             for video in rt.sampled_train + rt.sampled_test
             for frame in video.frames]

    def work(task) -> tuple[str, int, str, str]:
        video, frame_index = task
        triple = context_for_frame(rt.context_provider, video, frame_index, ctx_cfg)
        pair = rt.describer.describe(triple)
        return video.video_id, frame_index, pair.current, pair.subsequent

    workers = max(1, rt.cfg.concurrency)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, tasks))
    else:
        rows = [work(task) for task in tasks]
    rows.sort(key=lambda r: (r[0], r[1]))

    with out_path.open("w", encoding="utf-8") as fh:
        for video_id, frame_index, s_d, s_c in rows:
            fh.write(json.dumps({"video_id": video_id, "frame_index": frame_index,
                                 "s_d": s_d, "s_c": s_c}) + "\n")
    log.info("described %d frames -> %s", len(rows), out_path)
    return {DESCRIPTIONS_FILE: out_path}


def load_descriptions(out_dir: Path) -> dict[tuple[str, int], tuple[str, str]]:
    path = out_dir / DESCRIPTIONS_FILE
    if not path.is_file():
        raise PrerequisiteMissing("describe", detail=f"no {path}")
    table: dict[tuple[str, int], tuple[str, str]] = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                table[(record["video_id"], record["frame_index"])] = \
                    (record["s_d"], record["s_c"])
    return table


def _embed_split(rt: Runtime, sampled: Sequence[VideoRecord],
                 originals: Sequence[VideoRecord],
                 descriptions: dict[tuple[str, int], tuple[str, str]],
                 ) -> tuple[list[EmbeddedVideo], dict[str, np.ndarray]]:
    n = len(rt.vocab.activities)
    original_labels = {v.video_id: _multihot(v.gt_video_activities, n)
                       for v in originals}
    embedded = []
    store: dict[str, np.ndarray] = {}
    for video in sorted(sampled, key=lambda v: v.video_id):
        frames = []
        for frame in video.frames:
            key = (video.video_id, frame.frame_index)
            if key not in descriptions:
                raise PrerequisiteMissing(
                    "describe", detail=f"no description for {key}")
            s_d, s_c = descriptions[key]
            u = embed_image(rt.embedding_backend, frame.image_ref)
            e = embed_text(rt.embedding_backend, s_d)
            q = embed_text(rt.embedding_backend, s_c)
            store.setdefault(frame.image_ref, u)
            store.setdefault(s_d, e)
            store.setdefault(s_c, q)
            frames.append(EmbeddedFrame(
                video_id=video.video_id, frame_index=frame.frame_index,
                triple=EmbeddingTriple(u=u, e=e, q=q),
                labels=_multihot(frame.gt_activities, n)))
        embedded.append(EmbeddedVideo(
            video_id=video.video_id, frames=tuple(frames),
            video_labels=original_labels[video.video_id]))
    return embedded, store


def _persist_store(path: Path, store: dict[str, np.ndarray]) -> None:
    write_embedding_file(path, sorted(store.items()))


def stage_train(rt: Runtime) -> dict[str, Path]:
    """Embed the training split, fit the classifier, save the checkpoint."""
    descriptions = load_descriptions(rt.cfg.out_dir)
    checkpoint_path = _refuse_overwrite(rt.cfg.out_dir / CHECKPOINT_FILE)
    trace_path = _refuse_overwrite(rt.cfg.out_dir / LOSS_TRACE_FILE)
    emb_path = _refuse_overwrite(rt.cfg.out_dir / TRAIN_EMBEDDINGS_FILE)

    embedded, store = _embed_split(rt, rt.sampled_train, rt.train_videos, descriptions)
    _persist_store(emb_path, store)
    x, y = build_matrix(embedded, FULL_MASK)
    params, trace = train((x, y), rt.cfg.train_config())
    save_checkpoint(params, checkpoint_path)
    trace_path.write_text(
        "epoch,loss\n" + "".join(f"{i},{value!r}\n" for i, value in enumerate(trace)),
        encoding="utf-8")
    log.info("trained on %d frames, final loss %.6f", x.shape[0], trace[-1])
    return {CHECKPOINT_FILE: checkpoint_path, LOSS_TRACE_FILE: trace_path,
            TRAIN_EMBEDDINGS_FILE: emb_path}


def stage_eval(rt: Runtime) -> dict[str, Path]:
    """Score the test split with the trained head and report per-class AP."""
    checkpoint_path = rt.cfg.out_dir / CHECKPOINT_FILE
    if not checkpoint_path.is_file():
        raise PrerequisiteMissing("train", detail=f"no {checkpoint_path}")
    descriptions = load_descriptions(rt.cfg.out_dir)
    csv_path = _refuse_overwrite(rt.cfg.out_dir / EVAL_CSV_FILE)
    txt_path = _refuse_overwrite(rt.cfg.out_dir / EVAL_TXT_FILE)
    emb_path = _refuse_overwrite(rt.cfg.out_dir / TEST_EMBEDDINGS_FILE)

    params = load_checkpoint(checkpoint_path)
    embedded, store = _embed_split(rt, rt.sampled_test, rt.test_videos, descriptions)
    _persist_store(emb_path, store)
    labels = {v.video_id: v.video_labels for v in embedded}
    scored = score_videos(params, embedded, FULL_MASK, rt.cfg.aggregate)
    report = evaluate_videos(scored, labels)
    names = rt.vocab.activities.names
    csv_path.write_text(report.to_csv(names), encoding="utf-8")
    txt_path.write_text(report.to_text(names), encoding="utf-8")
    log.info("evaluated %d videos, mAP %.4f", report.n_videos, report.map)
    return {EVAL_CSV_FILE: csv_path, EVAL_TXT_FILE: txt_path,
            TEST_EMBEDDINGS_FILE: emb_path}


def _embedded_dataset(rt: Runtime) -> EmbeddedDataset:
    descriptions = load_descriptions(rt.cfg.out_dir)
    train_videos, _ = _embed_split(rt, rt.sampled_train, rt.train_videos, descriptions)
    test_videos, _ = _embed_split(rt, rt.sampled_test, rt.test_videos, descriptions)
    return EmbeddedDataset(n_classes=len(rt.vocab.activities),
                           train=tuple(train_videos), test=tuple(test_videos))


def stage_ablate(rt: Runtime) -> dict[str, Path]:
    """Train and evaluate once per fusion mask."""
    out_path = _refuse_overwrite(rt.cfg.out_dir / ABLATION_FILE)
    dataset = _embedded_dataset(rt)
    rows = run_ablation(dataset, ABLATION_MASKS, rt.cfg.train_config(),
                        rt.cfg.aggregate)
    out_path.write_text(ablation_csv(rows), encoding="utf-8")
    for row in rows:
        log.info("ablation %-26s mAP %s", row.mask.name,
                 "failed: " + row.error if row.error else f"{row.map:.4f}")
    return {ABLATION_FILE: out_path}


def stage_fewshot(rt: Runtime) -> dict[str, Path]:
    """Train on nested training subsets and evaluate each on the full test split."""
    out_path = _refuse_overwrite(rt.cfg.out_dir / FEWSHOT_FILE)
    dataset = _embedded_dataset(rt)
    rows = fewshot_sweep(dataset, rt.cfg.fractions, rt.cfg.train_config(),
                         rt.cfg.aggregate)
    out_path.write_text(fewshot_csv(rows), encoding="utf-8")
    for row in rows:
        log.info("fewshot %.2f (%d videos) mAP %.4f",
                 row.fraction, len(row.video_ids), row.map)
    return {FEWSHOT_FILE: out_path}


_STAGES = {
    "describe": (stage_describe,),
    "train": (stage_train,),
    "eval": (stage_eval,),
    "ablate": (stage_ablate,),
    "fewshot": (stage_fewshot,),
    "run": (stage_describe, stage_train, stage_eval),
}


def _input_paths(cfg: PipelineConfig) -> list[Path]:
    paths = [cfg.vocab_activities, cfg.vocab_objects, cfg.vocab_interactions,
             cfg.dataset_train, cfg.dataset_test]
    if cfg.context_file:
        paths.append(cfg.context_file)
    if cfg.embedding_file:
        paths.append(cfg.embedding_file)
    return paths


def write_manifest(cfg: PipelineConfig, command: str, status: str,
                   failed_stage: str | None, artifacts: dict[str, Path],
                   backend_calls: dict[str, int]) -> Path:
    manifest = {
        "command": command,
        "status": status,
        "failed_stage": failed_stage,
        "seed": cfg.seed,
        "config": dict(sorted(cfg.flat.items())),
        "config_hash": cfg.config_hash(),
        "template_version": template_version(),
        "inputs": {str(p): _sha256_file(p) for p in _input_paths(cfg) if p.is_file()},
        "artifacts": {name: _sha256_file(path)
                      for name, path in sorted(artifacts.items()) if path.is_file()},
        "backend_calls": backend_calls,
    }
    # Manifests are append-only like every other artifact: a rerun into the
    # same directory records itself under a numbered name.
    path = cfg.out_dir / f"manifest.{command}.json"
    suffix = 0
    while path.exists():
        suffix += 1
        path = cfg.out_dir / f"manifest.{command}.{suffix}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def run_command(command: str, cfg: PipelineConfig) -> int:
    """Execute one CLI command; returns a process exit code."""
    if command not in _STAGES:
        raise InvalidConfig(f"unknown command {command!r}")
    rt = Runtime(cfg)  # validates inputs before any stage runs
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    try:
        for stage in _STAGES[command]:
            stage_name = stage.__name__.removeprefix("stage_")
            try:
                artifacts.update(stage(rt))
            except PipelineError:
                write_manifest(cfg, command, "failed", stage_name, artifacts,
                               rt.backend_calls())
                raise
    except PipelineError as exc:
        log.error("%s failed: %s", command, exc)
        return 1
    write_manifest(cfg, command, "ok", None, artifacts, rt.backend_calls())
    return 0
