"""Keypoint-space predicates: arm pose, frame trimming, handedness.

All functions are pure over (frames, config). Angles are computed with the
standard three-point rule (angle at the middle joint between the two rays)
and distances are Euclidean, so every predicate is invariant under global
translation/rotation of the skeleton.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import EmptyClip, MissingJoint
from .ingest import (
    KeypointFrame,
    LEFT_ELBOW,
    LEFT_HAND,
    LEFT_SHOULDER,
    LEFT_WRIST,
    RIGHT_ELBOW,
    RIGHT_HAND,
    RIGHT_SHOULDER,
    RIGHT_WRIST,
)

_SIDE_JOINTS = {
    "left": (LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_ELBOW, LEFT_WRIST),
    "right": (RIGHT_SHOULDER, LEFT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST),
}


class Handedness(enum.Enum):
    TWO_HANDED = "two_handed"
    ONE_HANDED_LEFT = "one_handed_left"
    ONE_HANDED_RIGHT = "one_handed_right"
    NO_HANDS = "no_hands"


@dataclass(frozen=True)
class ArmPoseFeatures:
    """Resting-arm geometry for one side.

    shoulder_angle_deg: angle at this side's shoulder between the rays to
        the opposite shoulder and to the elbow.
    elbow_angle_deg: angle at the elbow between the rays to the shoulder
        and to the wrist.
    upper_arm_len / forearm_len: shoulder-elbow and elbow-wrist distances.
    """

    shoulder_angle_deg: float
    elbow_angle_deg: float
    upper_arm_len: float
    forearm_len: float
    side: str


def _angle_deg(vertex: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    u = p - vertex
    v = q - vertex
    nu = math.hypot(u[0], u[1])
    nv = math.hypot(v[0], v[1])
    if nu == 0.0 or nv == 0.0:
        return 0.0
    cos = float(np.dot(u, v)) / (nu * nv)
    return math.degrees(math.acos(max(-1.0, min(1.0, cos))))


def joint_present(frame: KeypointFrame, index: int, threshold: float) -> bool:
    return frame.points[index, 2] >= threshold


def arm_pose_features(frame: KeypointFrame, side: str,
                      cfg: PipelineConfig) -> ArmPoseFeatures:
    """Compute one side's arm angles and segment lengths.

    Raises:
        MissingJoint: a required joint is below the presence threshold.
    """
    if side not in _SIDE_JOINTS:
        raise ValueError(f"side must be left or right, got {side!r}")
    shoulder, opposite, elbow, wrist = _SIDE_JOINTS[side]
    for idx, name in ((shoulder, "shoulder"), (opposite, "opposite shoulder"),
                      (elbow, "elbow"), (wrist, "wrist")):
        if not joint_present(frame, idx, cfg.presence_threshold):
            raise MissingJoint(
                f"frame {frame.frame_index}: {side} arm needs {name}")
    s = frame.points[shoulder, :2]
    o = frame.points[opposite, :2]
    e = frame.points[elbow, :2]
    w = frame.points[wrist, :2]
    return ArmPoseFeatures(
        shoulder_angle_deg=_angle_deg(s, o, e),
        elbow_angle_deg=_angle_deg(e, s, w),
        upper_arm_len=float(math.hypot(*(e - s))),
        forearm_len=float(math.hypot(*(w - e))),
        side=side,
    )


def is_arm_hanging(f: ArmPoseFeatures, cfg: PipelineConfig) -> bool:
    """True when the arm rests at the side.

    Shoulder angle near 90 degrees, elbow nearly straight, and upper arm
    and forearm of similar length (relative difference, floor 1 px).
    """
    if abs(f.shoulder_angle_deg - 90.0) > cfg.shoulder_angle_tol_deg:
        return False
    if abs(f.elbow_angle_deg - 180.0) > cfg.elbow_angle_tol_deg:
        return False
    longer = max(f.upper_arm_len, f.forearm_len, 1.0)
    return abs(f.upper_arm_len - f.forearm_len) / longer <= cfg.arm_length_tol


def hand_absent(frame: KeypointFrame, side: str, threshold: float) -> bool:
    sl = LEFT_HAND if side == "left" else RIGHT_HAND
    return bool(np.all(frame.points[sl, 2] < threshold))


def frame_is_removable(frame: KeypointFrame, cfg: PipelineConfig) -> bool:
    """True when the frame carries no sign content.

    Either both arms hang naturally or both hands are absent. An arm whose
    joints are missing cannot be judged hanging.
    """
    if (hand_absent(frame, "left", cfg.presence_threshold)
            and hand_absent(frame, "right", cfg.presence_threshold)):
        return True
    for side in ("left", "right"):
        try:
            feats = arm_pose_features(frame, side, cfg)
        except MissingJoint:
            return False
        if not is_arm_hanging(feats, cfg):
            return False
    return True


def compute_trim(frames: list[KeypointFrame],
                 cfg: PipelineConfig) -> tuple[int, int]:
    """Maximal removable prefix and suffix; returns the kept interval.

    Only leading and trailing frames are ever dropped; an interior
    removable frame between kept frames stays.
    """
    n = len(frames)
    lo = 0
    while lo < n and frame_is_removable(frames[lo], cfg):
        lo += 1
    hi = n
    while hi > lo and frame_is_removable(frames[hi - 1], cfg):
        hi -= 1
    return lo, hi


@dataclass(frozen=True)
class TrimPlan:
    """Kept interval after trimming plus repair bookkeeping.

    fallback is set when trimming would have left fewer than 2 frames and
    the full clip was kept instead.
    """

    lo: int
    hi: int
    fallback: bool

    @property
    def front_trim(self) -> int:
        return self.lo


def plan_trim(frames: list[KeypointFrame], cfg: PipelineConfig) -> TrimPlan:
    """Trim, then repair the kept interval to an even length >= 2.

    An odd kept count is fixed by un-trimming one frame, preferring the
    back; a clip that is entirely removable is kept whole (fallback flag).

    Raises:
        EmptyClip: fewer than 2 frames remain even after repair.
    """
    n = len(frames)
    lo, hi = compute_trim(frames, cfg)
    fallback = False
    if hi - lo < 2:
        lo, hi, fallback = 0, n, True
    if (hi - lo) % 2 == 1:
        if hi < n:
            hi += 1
        elif lo > 0:
            lo -= 1
        else:
            hi -= 1
    if hi - lo < 2:
        raise EmptyClip(f"clip of {n} frames cannot form a 2-frame tube")
    return TrimPlan(lo=lo, hi=hi, fallback=fallback)


def wrist_path_length(frames: list[KeypointFrame], side: str,
                      threshold: float) -> float:
    """Total wrist travel over the clip, skipping low-confidence hops."""
    wrist = LEFT_WRIST if side == "left" else RIGHT_WRIST
    total = 0.0
    for a, b in zip(frames, frames[1:]):
        if a.points[wrist, 2] < threshold or b.points[wrist, 2] < threshold:
            continue
        dx = b.points[wrist, 0] - a.points[wrist, 0]
        dy = b.points[wrist, 1] - a.points[wrist, 1]
        total += math.hypot(dx, dy)
    return total


def classify_handedness(frames: list[KeypointFrame],
                        cfg: PipelineConfig) -> Handedness:
    """Label a trimmed clip by which hands are active.

    A hand counts as moving when its wrist path exceeds
    movement_threshold x crop diagonal and the hand is present in more
    than half the frames.
    """
    if not frames:
        raise EmptyClip("cannot classify an empty clip")
    diag = cfg.crop_size * math.sqrt(2.0)
    moving = {}
    for side in ("left", "right"):
        present = sum(
            0 if hand_absent(f, side, cfg.presence_threshold) else 1
            for f in frames)
        path = wrist_path_length(frames, side, cfg.presence_threshold)
        moving[side] = (path > cfg.movement_threshold * diag
                        and present * 2 > len(frames))
    if moving["left"] and moving["right"]:
        return Handedness.TWO_HANDED
    if moving["left"]:
        return Handedness.ONE_HANDED_LEFT
    if moving["right"]:
        return Handedness.ONE_HANDED_RIGHT
    return Handedness.NO_HANDS


def overlap_ratio(left_region: frozenset | set,
                  right_region: frozenset | set) -> float:
    """Intersection over the smaller region, with an empty-set floor of 1."""
    inter = len(left_region & right_region)
    return inter / max(1, min(len(left_region), len(right_region)))
