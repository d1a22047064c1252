"""Keypoint heatmap rendering and the SHMP dump format.

Each detected keypoint splats an isotropic Gaussian whose peak amplitude is
the detection confidence; frames composite per-pixel by maximum (or by
clamped sum when configured), so values stay in [0, 1] without
renormalization. Pixel (x, y) hosts the exact Gaussian value at integer
coordinates; there is no truncation radius.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import DimensionMismatch, EmptyClip, SchemaViolation
from .ingest import BODY_KEYPOINT_COUNT, KeypointFrame, LEFT_HAND, RIGHT_HAND

SHMP_MAGIC = b"SHMP"
SHMP_VERSION = 1


@dataclass
class HeatmapClip:
    """Per-frame scalar maps plus the rendering parameters used."""

    frames: list[np.ndarray]
    sigma: float
    composite: str
    size: int

    def validate(self):
        for i, frame in enumerate(self.frames):
            if frame.shape != (self.size, self.size):
                raise DimensionMismatch(
                    f"heatmap frame {i} is {frame.shape}, "
                    f"expected {self.size}x{self.size}")
            if frame.min(initial=0.0) < 0.0 or frame.max(initial=0.0) > 1.0:
                raise SchemaViolation(f"heatmap frame {i} leaves [0, 1]")


def _splat(out: np.ndarray, x: float, y: float, conf: float, sigma: float,
           composite: str):
    size = out.shape[0]
    coords = np.arange(size, dtype=np.float64)
    gx = np.exp(-((coords - x) ** 2) / (2.0 * sigma * sigma))
    gy = np.exp(-((coords - y) ** 2) / (2.0 * sigma * sigma))
    bump = conf * np.outer(gy, gx)
    if composite == "sum":
        out += bump
    else:
        np.maximum(out, bump, out=out)


def render_heatmap(frame: KeypointFrame, cfg: PipelineConfig) -> np.ndarray:
    """Render one frame's keypoints into a crop_size square map.

    Keypoints with zero confidence contribute nothing; out-of-crop
    keypoints contribute whatever tail falls inside. With
    heatmap_channels="group" the result is a (3, S, S) stack split into
    body / left hand / right hand.
    """
    size = cfg.crop_size
    if cfg.heatmap_channels == "group":
        groups = (slice(0, BODY_KEYPOINT_COUNT), LEFT_HAND, RIGHT_HAND)
        out = np.zeros((3, size, size), dtype=np.float64)
        for ch, sl in enumerate(groups):
            _render_points(out[ch], frame.points[sl], cfg)
        return out
    out = np.zeros((size, size), dtype=np.float64)
    _render_points(out, frame.points, cfg)
    return out


def _render_points(out: np.ndarray, points: np.ndarray, cfg: PipelineConfig):
    for x, y, conf in points:
        if conf > 0.0:
            _splat(out, x, y, conf, cfg.heatmap_sigma, cfg.heatmap_composite)
    if cfg.heatmap_composite == "sum":
        np.clip(out, 0.0, 1.0, out=out)


def render_clip(frames: list[KeypointFrame],
                cfg: PipelineConfig) -> HeatmapClip:
    """Render every frame; raises EmptyClip on an empty list."""
    if not frames:
        raise EmptyClip("no frames to render")
    if cfg.heatmap_channels != "single":
        raise SchemaViolation(
            "render_clip supports single-channel heatmaps only")
    clip = HeatmapClip(
        frames=[render_heatmap(f, cfg) for f in frames],
        sigma=cfg.heatmap_sigma,
        composite=cfg.heatmap_composite,
        size=cfg.crop_size,
    )
    clip.validate()
    return clip


def quantize(frame: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to u16 fixed point, rounding half up."""
    return np.floor(frame * 65535.0 + 0.5).astype(np.uint16)


def write_heatmaps(clip: HeatmapClip) -> bytes:
    """Serialize to SHMP: magic, version u16, T u16, then u16 grids."""
    if len(clip.frames) > 0xFFFF:
        raise SchemaViolation("too many frames for SHMP")
    parts = [SHMP_MAGIC, struct.pack("<HH", SHMP_VERSION, len(clip.frames))]
    for frame in clip.frames:
        q = quantize(frame)
        parts.append(q.astype("<u2").tobytes())
    return b"".join(parts)


def read_heatmaps(data: bytes) -> HeatmapClip:
    """Parse an SHMP dump; the square size is inferred from the payload."""
    if len(data) < 8 or data[:4] != SHMP_MAGIC:
        raise SchemaViolation("heatmap dump: bad magic")
    version, t = struct.unpack_from("<HH", data, 4)
    if version != SHMP_VERSION:
        raise SchemaViolation(f"heatmap dump: unsupported version {version}")
    payload = np.frombuffer(data, dtype="<u2", offset=8)
    if t == 0:
        raise EmptyClip("heatmap dump holds no frames")
    if payload.size % t:
        raise DimensionMismatch("heatmap payload does not divide into frames")
    per = payload.size // t
    size = math.isqrt(per)
    if size * size != per:
        raise DimensionMismatch("heatmap frames are not square")
    frames = [payload[i * per:(i + 1) * per].reshape(size, size)
              .astype(np.float64) / 65535.0
              for i in range(t)]
    return HeatmapClip(frames=frames, sigma=0.0, composite="max", size=size)
