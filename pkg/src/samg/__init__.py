"""One-shot correspondence-driven segmentation.

Build a reusable point-feature bundle from a single annotated reference image,
then segment task-relevant objects in arbitrary novel frames via fused
similarity maps, prompt-driven mask decoding with three-pass refinement, and a
two-scalar one-shot adaptation.
"""

from .adapt import AdaptationConfig, adapt_weights, adaptation_loss, loss_gradient
from .backends import (
    BackendError,
    EncoderBackend,
    FeatureGrid,
    MaskCandidates,
    PromptSet,
    SyntheticBackend,
    make_backend,
)
from .bench import (
    SceneSpec,
    ObjectSpec,
    default_scene,
    generate_scene,
    run_suite,
    training_bundle,
)
from .core import (
    AdaptedWeights,
    BBox,
    DEFAULT_WEIGHTS,
    GridCell,
    apply_mask,
    iou,
    mask_to_bbox,
)
from .identify import (
    BundleError,
    PointFeature,
    PointFeatureBundle,
    build_bundle,
    fetch_type1,
    fetch_type2,
    load_bundle,
    save_bundle,
)
from .segment import (
    SegmentationResult,
    SimilarityMap,
    refine_negative,
    segment_frame,
    segment_object,
    segment_stack,
    select_prompts,
    similarity_map,
    weighted_logits,
)

__version__ = "0.1.0"
