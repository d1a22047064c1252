"""Segmentation-driven preprocessing and mask generation for
sign-language clips: deterministic tube/hand-arm mask plans, keypoint
heatmaps, and reference numerics for the training objectives.
"""

from .config import PipelineConfig
from .errors import (
    DimensionMismatch,
    EmptyBox,
    EmptyClip,
    EmptyHandSet,
    EmptyMask,
    EmptyRegions,
    IndivisibleDims,
    MissingBundle,
    MissingFrame,
    MissingFrames,
    MissingJoint,
    NoBoxes,
    NonPositiveProbability,
    SchemaViolation,
    ShapeMismatch,
    SignmaskError,
)
from .geometry import (
    ArmPoseFeatures,
    Handedness,
    arm_pose_features,
    classify_handedness,
    compute_trim,
    frame_is_removable,
    is_arm_hanging,
    overlap_ratio,
    plan_trim,
)
from .heatmap import HeatmapClip, read_heatmaps, render_clip, render_heatmap, write_heatmaps
from .ingest import (
    ClipBundle,
    ClipMeta,
    CropTransform,
    KeypointFrame,
    SegmentFrame,
    apply_trim,
    crop_to_signer,
    parse_clip,
    parse_keypoints,
    parse_meta,
    parse_segments,
)
from .maskgen import (
    STREAMS,
    MaskPlan,
    Strategy,
    align_ratio,
    derive_clip_seed,
    generate,
    generate_plans,
    random_mask,
    running_cell_decoder_subset,
    st_mask_one_handed,
    st_mask_two_handed,
    stream_seed,
    temporal_mask,
    tube_mask,
)
from .patchgrid import RegionTokens, TokenGrid, build_grid, region_tokens

__version__ = "0.1.0"
