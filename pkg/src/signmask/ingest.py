"""Detector-output parsing, validation, and signer cropping.

The engine never touches video: upstream detectors hand us per-frame
keypoints (JSONL), body-part segmentation (a small binary container), and
optional bounding boxes, and everything downstream works on those. This
module owns the on-disk schemas, the in-memory clip bundle, and the shared
square-crop transform that keeps token coordinates temporally stable.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBox,
    MissingFrame,
    NoBoxes,
    SchemaViolation,
)

SGMT_MAGIC = b"SGMT"
SGMT_VERSION = 1

# Segmentation class codes.
LABEL_BACKGROUND = 0
LABEL_LEFT_HAND = 1
LABEL_RIGHT_HAND = 2
LABEL_LEFT_ARM = 3
LABEL_RIGHT_ARM = 4
LABEL_OTHER_BODY = 5
MAX_LABEL = 5

# Keypoint layout: 13 body joints, then 21 left-hand and 21 right-hand
# landmarks. Body ordering follows the usual COCO convention.
KEYPOINT_COUNT = 55
BODY_KEYPOINT_COUNT = 13
NOSE = 0
LEFT_EYE, RIGHT_EYE, LEFT_EAR, RIGHT_EAR = 1, 2, 3, 4
LEFT_SHOULDER, RIGHT_SHOULDER = 5, 6
LEFT_ELBOW, RIGHT_ELBOW = 7, 8
LEFT_WRIST, RIGHT_WRIST = 9, 10
LEFT_HIP, RIGHT_HIP = 11, 12
LEFT_HAND = slice(13, 34)
RIGHT_HAND = slice(34, 55)


@dataclass(frozen=True)
class ClipMeta:
    """Clip identity and raw dimensions.

    trim_range is the half-open kept-frame interval in original frame
    indices, present once a clip has been trimmed.
    """

    clip_id: str
    frame_count: int
    height: int
    width: int
    trim_range: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.clip_id:
            raise SchemaViolation("clip_id must be nonempty")
        if self.frame_count < 1:
            raise SchemaViolation(f"frame_count must be >= 1, got {self.frame_count}")
        if self.height < 1 or self.width < 1:
            raise SchemaViolation(
                f"dims must be positive, got {self.height}x{self.width}")
        if self.trim_range is not None:
            lo, hi = self.trim_range
            if not (0 <= lo < hi <= self.frame_count):
                raise SchemaViolation(
                    f"trim_range {self.trim_range} outside [0, {self.frame_count})")


@dataclass
class KeypointFrame:
    """One frame's 55 detections as a (55, 3) array of (x, y, confidence)."""

    frame_index: int
    points: np.ndarray

    def validate(self):
        if self.points.shape != (KEYPOINT_COUNT, 3):
            raise SchemaViolation(
                f"frame {self.frame_index}: expected {KEYPOINT_COUNT} keypoints, "
                f"got shape {self.points.shape}",
                frame_index=self.frame_index)
        if not np.all(np.isfinite(self.points)):
            raise SchemaViolation(
                f"frame {self.frame_index}: non-finite keypoint entry",
                frame_index=self.frame_index)
        conf = self.points[:, 2]
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise SchemaViolation(
                f"frame {self.frame_index}: confidence outside [0, 1]",
                frame_index=self.frame_index)


@dataclass
class SegmentFrame:
    """One frame's H x W body-part label grid (uint8 class codes)."""

    frame_index: int
    labels: np.ndarray


@dataclass
class ClipBundle:
    """A fully parsed clip: metadata plus per-frame keypoints and segments."""

    meta: ClipMeta
    keypoints: list[KeypointFrame] = field(default_factory=list)
    segments: list[SegmentFrame] = field(default_factory=list)

    def keypoint_array(self) -> np.ndarray:
        """Stacked (T, 55, 3) view of the keypoint frames."""
        return np.stack([f.points for f in self.keypoints])

    def segment_array(self) -> np.ndarray:
        """Stacked (T, H, W) view of the segment frames."""
        return np.stack([f.labels for f in self.segments])


def parse_keypoints(text: str) -> list[KeypointFrame]:
    """Parse a keypoint JSONL document into validated frames.

    One record per line: {"frame": i, "points": [[x, y, c], x55]} with
    indices contiguous from 0.

    Raises:
        MissingFrame: frame indices skip or repeat.
        SchemaViolation: malformed JSON, wrong point count, bad confidence.
    """
    frames = []
    expected = 0
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"keypoint line {lineno}: invalid JSON: {exc}")
        if not isinstance(rec, dict) or "frame" not in rec or "points" not in rec:
            raise SchemaViolation(f"keypoint line {lineno}: missing frame/points")
        idx = rec["frame"]
        if idx != expected:
            raise MissingFrame(
                f"expected frame {expected}, got {idx}", frame_index=expected)
        pts = np.asarray(rec["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] != KEYPOINT_COUNT:
            raise SchemaViolation(
                f"frame {idx}: expected {KEYPOINT_COUNT} keypoints, "
                f"got {pts.shape[0] if pts.ndim == 2 else 'malformed'}",
                frame_index=idx)
        frame = KeypointFrame(frame_index=idx, points=pts)
        frame.validate()
        frames.append(frame)
        expected += 1
    return frames


def serialize_keypoints(frames: list[KeypointFrame]) -> str:
    lines = []
    for f in frames:
        lines.append(json.dumps(
            {"frame": f.frame_index, "points": f.points.tolist()},
            separators=(",", ":")))
    return "\n".join(lines) + "\n" if lines else ""


def parse_segments(data: bytes, meta: ClipMeta,
                   label_map: tuple = ()) -> list[SegmentFrame]:
    """Parse an SGMT segmentation container against clip dimensions.

    Layout: magic "SGMT", u16 version, then frame_count x H x W label
    bytes row-major, frames concatenated. Grid dims come from meta, so a
    mismatched grid shows up as a payload-length mismatch.

    Raises:
        SchemaViolation: bad magic/version, or a label code outside the
            vocabulary after label_map is applied.
        DimensionMismatch: payload length disagrees with meta dims.
    """
    if len(data) < 6 or data[:4] != SGMT_MAGIC:
        raise SchemaViolation("segment document: bad magic")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != SGMT_VERSION:
        raise SchemaViolation(f"segment document: unsupported version {version}")
    payload = np.frombuffer(data, dtype=np.uint8, offset=6)
    expected = meta.frame_count * meta.height * meta.width
    if payload.size != expected:
        raise DimensionMismatch(
            f"segment payload holds {payload.size} cells, meta implies "
            f"{meta.frame_count}x{meta.height}x{meta.width} = {expected}")
    grid = payload.reshape(meta.frame_count, meta.height, meta.width).copy()
    if label_map:
        remapped = grid.copy()
        for src, dst in label_map:
            remapped[grid == src] = dst
        grid = remapped
    frames = []
    for i in range(meta.frame_count):
        labels = grid[i]
        if labels.max(initial=0) > MAX_LABEL:
            bad = int(labels.max())
            raise SchemaViolation(
                f"frame {i}: unknown label code {bad}", frame_index=i)
        frames.append(SegmentFrame(frame_index=i, labels=labels))
    return frames


def serialize_segments(frames: list[SegmentFrame]) -> bytes:
    parts = [SGMT_MAGIC, struct.pack("<H", SGMT_VERSION)]
    for f in frames:
        parts.append(np.ascontiguousarray(f.labels, dtype=np.uint8).tobytes())
    return b"".join(parts)


def parse_meta(text: str) -> ClipMeta:
    """Parse the clip-meta JSON sidecar."""
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"meta document: invalid JSON: {exc}")
    try:
        trim = rec.get("trim_range")
        return ClipMeta(
            clip_id=rec["clip_id"],
            frame_count=int(rec["frame_count"]),
            height=int(rec["height"]),
            width=int(rec["width"]),
            trim_range=tuple(trim) if trim is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"meta document: {exc}")


def serialize_meta(meta: ClipMeta) -> str:
    rec = {
        "clip_id": meta.clip_id,
        "frame_count": meta.frame_count,
        "height": meta.height,
        "width": meta.width,
    }
    if meta.trim_range is not None:
        rec["trim_range"] = list(meta.trim_range)
    return json.dumps(rec, separators=(",", ":")) + "\n"


def parse_boxes(text: str, meta: ClipMeta) -> list[tuple | None]:
    """Parse a bounding-box JSONL document into a per-frame list.

    Records are {"frame": i, "box": [x0, y0, x1, y1]} or a null box for
    frames without a detection; unlisted frames default to no detection.
    """
    boxes: list[tuple | None] = [None] * meta.frame_count
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"box line {lineno}: invalid JSON: {exc}")
        idx = rec.get("frame")
        if not isinstance(idx, int) or not 0 <= idx < meta.frame_count:
            raise SchemaViolation(f"box line {lineno}: frame index {idx} out of range")
        box = rec.get("box")
        if box is None:
            continue
        if len(box) != 4:
            raise SchemaViolation(f"box line {lineno}: box must have 4 coordinates")
        boxes[idx] = tuple(float(v) for v in box)
    return boxes


def parse_clip(keypoint_text: str, segment_data: bytes, meta: ClipMeta,
               label_map: tuple = ()) -> ClipBundle:
    """Assemble and cross-validate a full clip bundle.

    Raises:
        MissingFrame: either document covers fewer frames than meta says.
        SchemaViolation / DimensionMismatch: propagated from the parsers.
    """
    keypoints = parse_keypoints(keypoint_text)
    if len(keypoints) != meta.frame_count:
        raise MissingFrame(
            f"keypoint document has {len(keypoints)} frames, meta says "
            f"{meta.frame_count}", frame_index=len(keypoints))
    segments = parse_segments(segment_data, meta, label_map=label_map)
    return ClipBundle(meta=meta, keypoints=keypoints, segments=segments)


@dataclass(frozen=True)
class CropTransform:
    """Shared square-crop map: translate by offset, scale, then center.

    Maps original pixel coords p to p' = (p + offset) * scale + margin.
    One transform serves every frame of a clip so that a spatial token
    footprint refers to the same scene region in all frames.
    """

    scale: float
    offset_x: float
    offset_y: float
    margin_x: float
    margin_y: float
    size: int
    src_height: int
    src_width: int

    def apply_xy(self, x: float, y: float) -> tuple[float, float]:
        return ((x + self.offset_x) * self.scale + self.margin_x,
                (y + self.offset_y) * self.scale + self.margin_y)

    def apply_keypoints(self, frames: list[KeypointFrame]) -> list[KeypointFrame]:
        out = []
        for f in frames:
            pts = f.points.copy()
            pts[:, 0] = (pts[:, 0] + self.offset_x) * self.scale + self.margin_x
            pts[:, 1] = (pts[:, 1] + self.offset_y) * self.scale + self.margin_y
            out.append(KeypointFrame(frame_index=f.frame_index, points=pts))
        return out

    def apply_segments(self, frames: list[SegmentFrame]) -> list[SegmentFrame]:
        """Resample label grids to size x size by nearest neighbor.

        Output pixel centers are pulled back through the inverse map;
        samples outside the source frame become background.
        """
        s = self.size
        centers = np.arange(s, dtype=np.float64) + 0.5
        src_x = (centers - self.margin_x) / self.scale - self.offset_x
        src_y = (centers - self.margin_y) / self.scale - self.offset_y
        xi = np.floor(src_x).astype(np.int64)
        yi = np.floor(src_y).astype(np.int64)
        x_ok = (xi >= 0) & (xi < self.src_width)
        y_ok = (yi >= 0) & (yi < self.src_height)
        xc = np.clip(xi, 0, self.src_width - 1)
        yc = np.clip(yi, 0, self.src_height - 1)
        valid = y_ok[:, None] & x_ok[None, :]
        out = []
        for f in frames:
            grid = f.labels[np.ix_(yc, xc)]
            grid = np.where(valid, grid, np.uint8(LABEL_BACKGROUND))
            out.append(SegmentFrame(frame_index=f.frame_index,
                                    labels=grid.astype(np.uint8)))
        return out


def crop_to_signer(boxes: list[tuple | None], meta: ClipMeta,
                   size: int = 224) -> CropTransform:
    """Build the clip-wide square-crop transform from per-frame boxes.

    The union of all detections drives a single uniform scale so the long
    side of the union spans the output; the short side is centered.

    Raises:
        NoBoxes: no frame has a detection.
        EmptyBox: a detection has zero area after clamping to the frame.
    """
    ux0 = uy0 = math.inf
    ux1 = uy1 = -math.inf
    found = False
    for i, box in enumerate(boxes):
        if box is None:
            continue
        x0, y0, x1, y1 = box
        x0, x1 = max(0.0, x0), min(float(meta.width), x1)
        y0, y1 = max(0.0, y0), min(float(meta.height), y1)
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            raise EmptyBox(f"frame {i}: box has no area after clamping")
        found = True
        ux0, uy0 = min(ux0, x0), min(uy0, y0)
        ux1, uy1 = max(ux1, x1), max(uy1, y1)
    if not found:
        raise NoBoxes("no frame has a detection")
    w, h = ux1 - ux0, uy1 - uy0
    scale = size / max(w, h)
    return CropTransform(
        scale=scale,
        offset_x=-ux0,
        offset_y=-uy0,
        margin_x=(size - w * scale) / 2.0,
        margin_y=(size - h * scale) / 2.0,
        size=size,
        src_height=meta.height,
        src_width=meta.width,
    )


def identity_crop(meta: ClipMeta, size: int = 224) -> CropTransform:
    """Identity transform for clips that arrive pre-cropped."""
    if meta.height != size or meta.width != size:
        raise DimensionMismatch(
            f"clip without boxes must already be {size}x{size}, "
            f"got {meta.height}x{meta.width}")
    return CropTransform(scale=1.0, offset_x=0.0, offset_y=0.0,
                         margin_x=0.0, margin_y=0.0, size=size,
                         src_height=meta.height, src_width=meta.width)


def apply_trim(bundle: ClipBundle, lo: int, hi: int) -> ClipBundle:
    """Keep frames [lo, hi), reindexing from 0.

    The kept interval is not recorded on the resulting meta (its frame
    indices have been rebased); callers wanting the bookkeeping keep the
    TrimPlan.
    """
    if not 0 <= lo < hi <= bundle.meta.frame_count:
        raise SchemaViolation(f"trim [{lo}, {hi}) outside clip")
    meta = replace(bundle.meta, frame_count=hi - lo, trim_range=None)
    kps = [KeypointFrame(frame_index=i, points=f.points.copy())
           for i, f in enumerate(bundle.keypoints[lo:hi])]
    segs = [SegmentFrame(frame_index=i, labels=f.labels)
            for i, f in enumerate(bundle.segments[lo:hi])]
    return ClipBundle(meta=meta, keypoints=kps, segments=segs)
