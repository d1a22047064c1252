"""Pipeline configuration: defaults, validation, and the key=value file format.

One frozen dataclass owns every tunable in the pipeline. A config can come
from three places, in CLI precedence order: an explicit file, the
``SIGNMASK_CONFIG`` environment variable, or the built-in defaults. Unknown
keys are rejected rather than ignored so typos cannot silently change a run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import SchemaViolation

_COMPOSITE_MODES = ("max", "sum")
_CHANNEL_MODES = ("single", "group")


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables with their defaults.

    Attributes:
        mask_ratio: Target fraction of tokens masked in every plan.
        overlap_threshold: Two-handed branch switch; strictly above it the
            directional branch runs, at or below it the side-reserve branch.
        shoulder_angle_tol_deg: Band half-width around 90 degrees for the
            shoulder-line/upper-arm angle of a hanging arm.
        elbow_angle_tol_deg: Band half-width around 180 degrees for the
            shoulder-elbow-wrist angle of a hanging arm.
        arm_length_tol: Relative tolerance for upper-arm vs forearm length.
        movement_threshold: Wrist path length, as a fraction of the crop
            diagonal, above which a hand counts as moving.
        presence_threshold: Confidence at or above which a keypoint exists
            for presence and movement logic.
        temporal_mask_fraction: Fraction of tube-frames covered by the
            mid-sequence temporal window.
        heatmap_sigma: Gaussian std-dev in pixels for keypoint heatmaps.
        seed: Corpus-level RNG seed (64-bit).
        crop_size: Output side length of the signer crop, in pixels.
        region_coverage_threshold: Fraction of a token footprint a region
            must cover before the token joins the region (0 = any pixel).
        heatmap_composite: "max" or "sum" (sum is clamped to 1.0).
        heatmap_channels: "single" (one shared map) or "group"
            (body / left hand / right hand).
        nohands_fallback: Fall back to tube masking when a clip has no
            hand tokens instead of raising.
        mixup_alpha: Beta(alpha, alpha) parameter for drawn mixup lambdas.
        label_map: Remapping of upstream segmentation codes onto the
            canonical vocabulary, applied before validation.
    """

    mask_ratio: float = 0.9
    overlap_threshold: float = 0.25
    shoulder_angle_tol_deg: float = 15.0
    elbow_angle_tol_deg: float = 20.0
    arm_length_tol: float = 0.25
    movement_threshold: float = 0.2
    presence_threshold: float = 0.3
    temporal_mask_fraction: float = 0.25
    heatmap_sigma: float = 4.0
    seed: int = 0
    crop_size: int = 224
    region_coverage_threshold: float = 0.0
    heatmap_composite: str = "max"
    heatmap_channels: str = "single"
    nohands_fallback: bool = True
    mixup_alpha: float = 0.8
    label_map: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        for name in ("mask_ratio", "overlap_threshold", "movement_threshold",
                     "temporal_mask_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise SchemaViolation(f"{name} must lie in (0, 1), got {value}")
        for name in ("shoulder_angle_tol_deg", "elbow_angle_tol_deg",
                     "arm_length_tol", "mixup_alpha"):
            if getattr(self, name) < 0:
                raise SchemaViolation(f"{name} must be nonnegative")
        if not 0.0 <= self.presence_threshold <= 1.0:
            raise SchemaViolation("presence_threshold must lie in [0, 1]")
        if not 0.0 <= self.region_coverage_threshold < 1.0:
            raise SchemaViolation("region_coverage_threshold must lie in [0, 1)")
        if self.heatmap_sigma <= 0:
            raise SchemaViolation("heatmap_sigma must be positive")
        if self.crop_size <= 0 or self.crop_size % 16 != 0:
            raise SchemaViolation("crop_size must be a positive multiple of 16")
        if not 0 <= self.seed < 2**64:
            raise SchemaViolation("seed must fit in an unsigned 64-bit integer")
        if self.heatmap_composite not in _COMPOSITE_MODES:
            raise SchemaViolation(f"heatmap_composite must be one of {_COMPOSITE_MODES}")
        if self.heatmap_channels not in _CHANNEL_MODES:
            raise SchemaViolation(f"heatmap_channels must be one of {_CHANNEL_MODES}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "PipelineConfig":
        """Build a config from a plain mapping, coercing string values.

        Raises:
            SchemaViolation: On unknown keys or uncoercible/invalid values.
        """
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, raw in values.items():
            field = fields.get(key)
            if field is None:
                raise SchemaViolation(f"unknown config key: {key!r}")
            kwargs[key] = _coerce(key, raw, field.type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Parse a key=value config file (blank lines and # comments allowed)."""
        values: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise SchemaViolation(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
        return cls.from_mapping(values)

    def to_mapping(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _coerce(key: str, raw: Any, annotation: str) -> Any:
    if key == "label_map":
        return _parse_label_map(raw)
    try:
        if "bool" in annotation:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "1", "yes"):
                return True
            if text in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if "int" in annotation:
            return int(raw)
        if "float" in annotation:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"config key {key!r}: cannot parse value {raw!r}") from exc


def _parse_label_map(raw: Any) -> tuple[tuple[int, int], ...]:
    """Parse 'src:dst,src:dst' pairs (or pass through an existing pair sequence)."""
    if isinstance(raw, (tuple, list)):
        return tuple((int(a), int(b)) for a, b in raw)
    text = str(raw).strip()
    if not text:
        return ()
    pairs = []
    for item in text.split(","):
        src, sep, dst = item.partition(":")
        if not sep:
            raise SchemaViolation(f"label_map entry {item!r} is not src:dst")
        try:
            pairs.append((int(src), int(dst)))
        except ValueError as exc:
            raise SchemaViolation(f"label_map entry {item!r} is not numeric") from exc
    return tuple(pairs)
