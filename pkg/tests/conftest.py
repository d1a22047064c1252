"""Shared synthetic-fixture builders.

Skeletons are constructed parametrically: given the shoulder-angle /
elbow-angle / segment-length targets for each arm, the builder places the
elbow and wrist so the geometry module must recover exactly those values.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from signmask.config import PipelineConfig
from signmask.ingest import (
    KEYPOINT_COUNT,
    LEFT_ELBOW,
    LEFT_EYE,
    LEFT_HAND,
    LEFT_HIP,
    LEFT_SHOULDER,
    LEFT_WRIST,
    NOSE,
    RIGHT_ELBOW,
    RIGHT_HAND,
    RIGHT_HIP,
    RIGHT_SHOULDER,
    RIGHT_WRIST,
    ClipMeta,
    KeypointFrame,
    SegmentFrame,
    serialize_keypoints,
    serialize_meta,
    serialize_segments,
)
from signmask.patchgrid import RegionTokens


@pytest.fixture
def cfg():
    return PipelineConfig()


def make_meta(clip_id="clip", frames=4, height=64, width=64) -> ClipMeta:
    return ClipMeta(clip_id=clip_id, frame_count=frames,
                    height=height, width=width)


def _rotate(vx, vy, deg):
    rad = math.radians(deg)
    c, s = math.cos(rad), math.sin(rad)
    return c * vx - s * vy, s * vx + c * vy


def _place_arm(points, side, shoulder, a1, a2, d1, d2, conf):
    """Place elbow/wrist so the arm realizes the given angles and lengths."""
    sx, sy = shoulder
    theta = math.radians(180.0 - a1)
    ex, ey = math.cos(theta), math.sin(theta)
    if side == "left":
        ex = -ex
    elbow = (sx + d1 * ex, sy + d1 * ey)
    # Wrist ray: rotate the elbow->shoulder ray by the elbow angle.
    back = (-ex, -ey)
    turn = a2 if side == "right" else -a2
    wx, wy = _rotate(back[0], back[1], turn)
    wrist = (elbow[0] + d2 * wx, elbow[1] + d2 * wy)
    e_idx = LEFT_ELBOW if side == "left" else RIGHT_ELBOW
    w_idx = LEFT_WRIST if side == "left" else RIGHT_WRIST
    points[e_idx] = (elbow[0], elbow[1], conf)
    points[w_idx] = (wrist[0], wrist[1], conf)
    return wrist


def make_keypoints(frame_index=0, left=(90.0, 180.0, 40.0, 40.0),
                   right=(90.0, 180.0, 40.0, 40.0),
                   shoulders=((80.0, 60.0), (140.0, 60.0)),
                   left_hand_conf=0.9, right_hand_conf=0.9,
                   joint_conf=0.9, left_wrist_at=None,
                   right_wrist_at=None) -> KeypointFrame:
    """Build one frame with arms posed by (a1, a2, d1, d2) per side.

    Hand landmarks sit on the wrist at the given confidence; pass a
    *_wrist_at override to drag a wrist (and its hand) somewhere specific.
    """
    pts = np.zeros((KEYPOINT_COUNT, 3), dtype=np.float64)
    ls, rs = shoulders
    pts[NOSE] = (110.0, 30.0, joint_conf)
    for i in range(LEFT_EYE, LEFT_SHOULDER):
        pts[i] = (110.0, 28.0, joint_conf)
    pts[LEFT_SHOULDER] = (ls[0], ls[1], joint_conf)
    pts[RIGHT_SHOULDER] = (rs[0], rs[1], joint_conf)
    pts[LEFT_HIP] = (85.0, 140.0, joint_conf)
    pts[RIGHT_HIP] = (135.0, 140.0, joint_conf)
    lw = _place_arm(pts, "left", ls, *left, conf=joint_conf)
    rw = _place_arm(pts, "right", rs, *right, conf=joint_conf)
    if left_wrist_at is not None:
        pts[LEFT_WRIST] = (left_wrist_at[0], left_wrist_at[1], joint_conf)
        lw = left_wrist_at
    if right_wrist_at is not None:
        pts[RIGHT_WRIST] = (right_wrist_at[0], right_wrist_at[1], joint_conf)
        rw = right_wrist_at
    pts[LEFT_HAND] = (lw[0], lw[1], left_hand_conf)
    pts[RIGHT_HAND] = (rw[0], rw[1], right_hand_conf)
    return KeypointFrame(frame_index=frame_index, points=pts)


def hanging_frame(frame_index=0, **kw) -> KeypointFrame:
    return make_keypoints(frame_index=frame_index,
                          left=(90.0, 180.0, 40.0, 40.0),
                          right=(90.0, 180.0, 40.0, 40.0), **kw)


def raised_frame(frame_index=0, **kw) -> KeypointFrame:
    # Bent elbows, clearly outside every tolerance band.
    return make_keypoints(frame_index=frame_index,
                          left=(140.0, 100.0, 40.0, 40.0),
                          right=(140.0, 100.0, 40.0, 40.0), **kw)


def make_segments(meta: ClipMeta, rects=()) -> list[SegmentFrame]:
    """Blank frames plus (frames, label, x0, y0, x1, y1) rectangles."""
    grids = [np.zeros((meta.height, meta.width), dtype=np.uint8)
             for _ in range(meta.frame_count)]
    for frames, label, x0, y0, x1, y1 in rects:
        for f in frames:
            grids[f][y0:y1, x0:x1] = label
    return [SegmentFrame(frame_index=i, labels=g)
            for i, g in enumerate(grids)]


def make_regions(left_hand=(), right_hand=(), left_arm=(),
                 right_arm=()) -> RegionTokens:
    return RegionTokens(left_hand=frozenset(left_hand),
                        right_hand=frozenset(right_hand),
                        left_arm=frozenset(left_arm),
                        right_arm=frozenset(right_arm))


def moving_keypoint_frames(n_frames, sides=("left", "right"), step=12.0,
                           size=224):
    """Frames whose listed wrists sweep horizontally across the crop."""
    frames = []
    for i in range(n_frames):
        kw = {}
        x = 30.0 + step * i
        if "left" in sides:
            kw["left_wrist_at"] = (min(x, size - 5.0), 100.0)
        else:
            kw["left_hand_conf"] = 0.0
        if "right" in sides:
            kw["right_wrist_at"] = (min(x + 8.0, size - 3.0), 110.0)
        else:
            kw["right_hand_conf"] = 0.0
        frames.append(make_keypoints(
            frame_index=i, left=(140.0, 100.0, 40.0, 40.0),
            right=(140.0, 100.0, 40.0, 40.0), **kw))
    return frames


def write_clip(dirpath, clip_id, keypoint_frames, segment_frames, meta,
               boxes=None):
    """Write one clip's bundle files; returns its manifest record."""
    (dirpath / f"{clip_id}.keypoints.jsonl").write_text(
        serialize_keypoints(keypoint_frames))
    (dirpath / f"{clip_id}.sgmt").write_bytes(
        serialize_segments(segment_frames))
    (dirpath / f"{clip_id}.meta.json").write_text(serialize_meta(meta))
    rec = {"clip_id": clip_id,
           "keypoints": f"{clip_id}.keypoints.jsonl",
           "segments": f"{clip_id}.sgmt",
           "meta": f"{clip_id}.meta.json"}
    if boxes is not None:
        lines = [json.dumps({"frame": i, "box": list(b) if b else None})
                 for i, b in enumerate(boxes)]
        (dirpath / f"{clip_id}.boxes.jsonl").write_text("\n".join(lines) + "\n")
        rec["boxes"] = f"{clip_id}.boxes.jsonl"
    return rec


def write_corpus(dirpath, n_clips, frames=8, size=64, seed=0):
    """A mixed synthetic corpus, pre-cropped to size x size.

    Clip styles rotate: mostly two-handed, some one-handed, some with no
    hands at all. Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    records = []
    for ci in range(n_clips):
        clip_id = f"clip{ci:04d}"
        meta = make_meta(clip_id=clip_id, frames=frames,
                         height=size, width=size)
        style = ci % 5
        if style == 4:
            kps = [make_keypoints(frame_index=i, left_hand_conf=0.0,
                                  right_hand_conf=0.0)
                   for i in range(frames)]
        elif style == 3:
            side = "left" if ci % 2 else "right"
            kps = moving_keypoint_frames(frames, sides=(side,), size=size,
                                         step=5.0)
        else:
            kps = moving_keypoint_frames(frames, sides=("left", "right"),
                                         size=size, step=5.0)
        rects = []
        base = int(rng.integers(0, size - 24))
        rects.append((range(frames), 1, base, 8, base + 12, 20))
        rects.append((range(frames), 2, size - 20, 24, size - 6, 36))
        rects.append((range(frames), 3, base, 20, base + 8, 40))
        rects.append((range(frames), 4, size - 16, 36, size - 8, 56))
        segs = make_segments(meta, rects)
        records.append(write_clip(dirpath, clip_id, kps, segs, meta))
    manifest = dirpath / "manifest.jsonl"
    manifest.write_text(
        "\n".join(json.dumps(r, separators=(",", ":")) for r in records) + "\n")
    return manifest


def write_config(path, **overrides):
    cfg = {"crop_size": 64, **overrides}
    path.write_text("".join(f"{k}={v}\n" for k, v in cfg.items()))
    return path
