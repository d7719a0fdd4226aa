"""Zero-shot text-driven video editing in diffusion latent space.

The pipeline edits a real video from a text prompt with every network
frozen: per-frame latents are deterministically inverted to noise under
depth-feature guidance, then denoised back with cross-frame attention and a
per-timestep latent refinement that balances the depth-guided and
unconstrained denoising branches. Ships with a small deterministic toy
backend so everything is testable offline; pretrained weight suites attach
through the backend adapter registry.
"""

from .attention import (
    AttentionMode,
    AttentionWeights,
    cross_attention,
    scaled_dot_attention,
    self_attention_frame,
)
from .backbone import (
    Backend,
    ConvAttnBlock,
    CountingBackend,
    ToyBackend,
    available_backends,
    get_backend,
    register_backend,
)
from .dataset import (
    DatasetRecord,
    PROMPT_CATEGORIES,
    PROMPT_TEMPLATES,
    StubCaptionClient,
    StubPromptClient,
    build_manifest,
    generate_caption,
    generate_prompts,
    read_manifest,
    review_record,
    write_manifest,
)
from .depth import (
    DepthEncoder,
    DepthFeatures,
    SyntheticGradientDepth,
    get_depth_backend,
    minmax_normalize,
    pool_maps,
)
from .errors import (
    BackendError,
    BackendUnavailableError,
    ClientError,
    ConfigError,
    DegenerateLatentError,
    LatentEditError,
    ManifestError,
    PipelineStageError,
    ShapeError,
)
from .metrics import (
    MetricsReport,
    StubScorer,
    ToyEmbedder,
    build_report,
    prompt_consistency,
    temporal_consistency,
)
from .optimizer import (
    OptimizerConfig,
    StepTrace,
    cosine_loss,
    cosine_loss_gradient,
    optimize_step,
)
from .pipeline import (
    EditConfig,
    EditResult,
    TABLE1_ROWS,
    edit,
    invert,
    invert_only,
    run_ablation_grid,
    sample_frames,
    uniform_frame_indices,
)
from .schedule import (
    LatentState,
    NoiseSchedule,
    build_schedule,
    ddim_denoise_step,
    ddim_invert_step,
    dump_schedule,
    forward_diffuse,
    load_schedule,
)
from .synthetic import synthetic_clip, write_clip_frames

__version__ = "0.1.0"
