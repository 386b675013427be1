"""Language-driven multi-label video activity recognition.

The pipeline summarizes each frame into a context triple (interactions,
objects, candidate verbs), renders the triple into a few-shot prompt, asks
a language model for the current scene description and the likely next
action, embeds frame and descriptions into a shared space, and feeds the
concatenated vectors to a small multi-label classifier evaluated by mAP.
"""

from .context import (
    ContextConfig,
    ContextTriple,
    FileContextProvider,
    GroundTruthContextProvider,
    MockContextProvider,
    context_for_frame,
    segment_clips,
    top_k_verbs,
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
    fuse,
)
from .evaluation import (
    EvalReport,
    VideoScores,
    aggregate_video,
    average_precision,
    evaluate_videos,
    fewshot_sweep,
    mean_ap,
    run_ablation,
)
from .generation import (
    DescriptionPipeline,
    GenerationCache,
    GenerationRequest,
    GenerationResponse,
    HttpGenerationBackend,
    MockGenerationBackend,
    cached_generate,
    generate,
    make_request,
)
from .mlp import (
    MlpParams,
    TrainConfig,
    backward,
    forward,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from .prompts import (
    DescriptionPair,
    PromptKind,
    PromptText,
    parse_generation,
    render_description_prompt,
    render_subsequent_prompt,
    template_version,
)
from .vocab import (
    FrameRecord,
    VideoRecord,
    Vocabulary,
    import_charades_csv,
    import_normalized_jsonl,
    load_vocabulary,
    sample_frames,
)

__version__ = "0.1.0"
