"""In-process bindings for the signmask pipeline.

Two operations for training frameworks that want mask plans and keypoint
heatmaps without shelling out to the CLI: py_generate reads clip bundle
files and returns plans whose serialization is byte-identical to the
CLI's .smsk artifacts, and py_render_heatmap renders one frame to the
exact fixed-point grid stored in .shmp dumps. Every decision lives in
the core package; this module only marshals arguments and results, so
the determinism guarantees carry over unchanged.

Errors are the core's own exception types, re-exported 1:1.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from signmask import __version__ as _core_version
from signmask.config import PipelineConfig
from signmask.errors import (
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
from signmask.heatmap import quantize, render_heatmap
from signmask.ingest import KEYPOINT_COUNT, KeypointFrame, parse_clip, parse_meta
from signmask.maskgen import STREAMS, MaskPlan, generate

__version__ = _core_version

__all__ = [
    "BoundMaskPlan",
    "py_generate",
    "py_render_heatmap",
    "__version__",
    "DimensionMismatch",
    "EmptyBox",
    "EmptyClip",
    "EmptyHandSet",
    "EmptyMask",
    "EmptyRegions",
    "IndivisibleDims",
    "MissingBundle",
    "MissingFrame",
    "MissingFrames",
    "MissingJoint",
    "NoBoxes",
    "NonPositiveProbability",
    "SchemaViolation",
    "ShapeMismatch",
    "SignmaskError",
]

BUNDLE_KEYS = ("keypoints", "segments", "meta")


@dataclass(frozen=True, eq=False)
class BoundMaskPlan:
    """A mask plan exposed as index arrays plus a metadata mapping.

    masked, decoder_targets, and visible are read-only ascending uint32
    arrays over the flat token index space. meta carries the remaining
    plan fields (clip_id, stream, dims, strategy, ratio, seed,
    direction, window, side, align_steps). to_bytes delegates to the
    underlying plan, so the serialization is byte-identical to the
    canonical .smsk format.
    """

    masked: np.ndarray
    decoder_targets: np.ndarray
    visible: np.ndarray
    meta: Mapping
    _plan: MaskPlan = field(repr=False)

    @classmethod
    def _wrap(cls, plan: MaskPlan, clip_id: str, stream: str) -> "BoundMaskPlan":
        return cls(
            masked=_index_array(plan.masked),
            decoder_targets=_index_array(plan.decoder_targets),
            visible=_index_array(plan.visible),
            meta=MappingProxyType({
                "clip_id": clip_id,
                "stream": stream,
                "dims": plan.dims,
                "strategy": plan.strategy.name,
                "ratio": plan.ratio,
                "seed": plan.seed,
                "direction": plan.direction,
                "window": plan.window,
                "side": plan.side,
                "align_steps": plan.align_steps,
            }),
            _plan=plan,
        )

    def to_bytes(self) -> bytes:
        return self._plan.to_bytes()

    def validate(self, regions=None):
        self._plan.validate(regions)


def _index_array(tokens: frozenset) -> np.ndarray:
    arr = np.fromiter(sorted(tokens), dtype=np.uint32, count=len(tokens))
    arr.setflags(write=False)
    return arr


def _as_config(config) -> PipelineConfig:
    if isinstance(config, PipelineConfig):
        return config
    if isinstance(config, Mapping):
        return PipelineConfig.from_mapping(config)
    raise SchemaViolation(
        f"config must be a mapping or PipelineConfig, got {type(config).__name__}")


def _read_bundle(record: Mapping, cfg: PipelineConfig):
    for key in BUNDLE_KEYS:
        if key not in record:
            raise SchemaViolation(f"clip bundle record missing {key!r}")
        if not Path(record[key]).exists():
            raise MissingBundle(f"missing {key} file: {record[key]}")
    meta = parse_meta(Path(record["meta"]).read_text())
    return parse_clip(
        Path(record["keypoints"]).read_text(),
        Path(record["segments"]).read_bytes(),
        meta,
        label_map=cfg.label_map,
    )


def py_generate(bundles, config, seed: int | None = None) -> list[BoundMaskPlan]:
    """Generate mask plans for one or more clip bundles.

    Args:
        bundles: One mapping, or a sequence of mappings, with
            "keypoints", "segments", and "meta" file paths (the same
            keys a manifest record uses; extra keys are ignored).
        config: `PipelineConfig` or a plain mapping of config keys.
        seed: Corpus seed override; the config's seed applies when None.

    Returns:
        One BoundMaskPlan per stream per clip, clips in input order and
        streams in canonical order, byte-identical after to_bytes to the
        .smsk files the CLI writes for the same inputs.

    Raises:
        SignmaskError subclasses exactly as the core raises them.
    """
    if isinstance(bundles, Mapping):
        bundles = [bundles]
    elif isinstance(bundles, (str, bytes)) or not isinstance(bundles, Sequence):
        raise SchemaViolation("bundles must be a mapping or a sequence of mappings")
    cfg = _as_config(config)
    out: list[BoundMaskPlan] = []
    for record in bundles:
        bundle = _read_bundle(record, cfg)
        plans = generate(bundle, cfg, corpus_seed=seed)
        for stream in STREAMS:
            out.append(BoundMaskPlan._wrap(plans[stream], bundle.meta.clip_id, stream))
    return out


def py_render_heatmap(frame_data, config) -> np.ndarray:
    """Render one frame's keypoints to the stored fixed-point grid.

    Args:
        frame_data: `KeypointFrame`, or array-like of (x, y, confidence)
            rows. An empty array stands for a frame with no detections.
        config: `PipelineConfig` or a plain mapping of config keys;
            must keep the single-channel heatmap layout.

    Returns:
        A (crop_size, crop_size) uint16 array, bit-identical to the
        matching frame payload of a .shmp dump.
    """
    cfg = _as_config(config)
    if cfg.heatmap_channels != "single":
        raise SchemaViolation("py_render_heatmap supports single-channel heatmaps only")
    if isinstance(frame_data, KeypointFrame):
        frame = frame_data
    else:
        points = np.asarray(frame_data, dtype=np.float64)
        if points.size == 0:
            points = np.zeros((KEYPOINT_COUNT, 3))
        frame = KeypointFrame(frame_index=0, points=points)
    frame.validate()
    return quantize(render_heatmap(frame, cfg))
