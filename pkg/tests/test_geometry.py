"""Arm pose, trimming, handedness, and overlap predicates."""

import math

import numpy as np
import pytest

from signmask.config import PipelineConfig
from signmask.errors import MissingJoint
from signmask.geometry import (
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
from signmask.ingest import (
    KEYPOINT_COUNT,
    LEFT_SHOULDER,
    RIGHT_ELBOW,
    RIGHT_SHOULDER,
    RIGHT_WRIST,
    KeypointFrame,
)

from conftest import hanging_frame, make_keypoints, moving_keypoint_frames, raised_frame


def _axis_frame(elbow=(100.0, 80.0), wrist=(100.0, 160.0)):
    pts = np.zeros((KEYPOINT_COUNT, 3))
    pts[:, 2] = 0.9
    pts[LEFT_SHOULDER, :2] = (0.0, 0.0)
    pts[RIGHT_SHOULDER, :2] = (100.0, 0.0)
    pts[RIGHT_ELBOW, :2] = elbow
    pts[RIGHT_WRIST, :2] = wrist
    return KeypointFrame(frame_index=0, points=pts)


def test_axis_aligned_right_angle(cfg):
    f = arm_pose_features(_axis_frame(), "right", cfg)
    assert f.shoulder_angle_deg == pytest.approx(90.0, abs=1e-12)
    assert f.elbow_angle_deg == pytest.approx(180.0, abs=1e-12)
    assert f.upper_arm_len == pytest.approx(80.0)
    assert f.forearm_len == pytest.approx(80.0)


def test_displaced_elbow_angle(cfg):
    f = arm_pose_features(_axis_frame(elbow=(150.0, 80.0)), "right", cfg)
    expected = 90.0 + math.degrees(math.atan(50.0 / 80.0))
    assert expected == pytest.approx(122.00538320808349)
    assert f.shoulder_angle_deg == pytest.approx(expected, abs=1e-9)


def test_missing_wrist_raises(cfg):
    frame = _axis_frame()
    frame.points[RIGHT_WRIST, 2] = 0.1
    with pytest.raises(MissingJoint):
        arm_pose_features(frame, "right", cfg)


def test_builder_realizes_requested_geometry(cfg):
    for side in ("left", "right"):
        for a1, a2, d1, d2 in ((90, 180, 40, 40), (122, 150, 50, 30),
                               (65, 95, 33, 41)):
            frame = make_keypoints(**{side: (a1, a2, d1, d2)})
            f = arm_pose_features(frame, side, cfg)
            assert f.shoulder_angle_deg == pytest.approx(a1, abs=1e-9)
            assert f.elbow_angle_deg == pytest.approx(a2, abs=1e-9)
            assert f.upper_arm_len == pytest.approx(d1)
            assert f.forearm_len == pytest.approx(d2)


def test_rotation_translation_invariance(cfg):
    base = make_keypoints(right=(105.0, 168.0, 35.0, 42.0))
    f0 = arm_pose_features(base, "right", cfg)
    ang = math.radians(37.0)
    rot = np.array([[math.cos(ang), -math.sin(ang)],
                    [math.sin(ang), math.cos(ang)]])
    pts = base.points.copy()
    pts[:, :2] = pts[:, :2] @ rot.T + np.array([13.0, -4.5])
    f1 = arm_pose_features(KeypointFrame(0, pts), "right", cfg)
    assert f1.shoulder_angle_deg == pytest.approx(f0.shoulder_angle_deg)
    assert f1.elbow_angle_deg == pytest.approx(f0.elbow_angle_deg)
    assert f1.upper_arm_len == pytest.approx(f0.upper_arm_len)
    assert f1.forearm_len == pytest.approx(f0.forearm_len)


def test_is_arm_hanging_bands(cfg):
    hang = ArmPoseFeatures(90.0, 180.0, 80.0, 80.0, "right")
    assert is_arm_hanging(hang, cfg)
    bent = ArmPoseFeatures(90.0, 120.0, 80.0, 80.0, "right")
    assert not is_arm_hanging(bent, cfg)
    # All three predicates inside their default bands.
    near = ArmPoseFeatures(100.0, 175.0, 80.0, 70.0, "right")
    assert is_arm_hanging(near, cfg)


def test_is_arm_hanging_monotone_in_tolerance():
    f = ArmPoseFeatures(100.0, 172.0, 80.0, 64.0, "left")
    wide = PipelineConfig.from_mapping(
        {"shoulder_angle_tol_deg": 12, "elbow_angle_tol_deg": 10,
         "arm_length_tol": 0.3})
    assert is_arm_hanging(f, wide)
    for key in ("shoulder_angle_tol_deg", "elbow_angle_tol_deg",
                "arm_length_tol"):
        shrunk = PipelineConfig.from_mapping(
            {**wide.to_mapping(), key: 0.01})
        assert not is_arm_hanging(f, shrunk)


def test_frame_is_removable_branches(cfg):
    assert frame_is_removable(hanging_frame(), cfg)
    one_up = make_keypoints(left=(90.0, 180.0, 40.0, 40.0),
                            right=(140.0, 100.0, 40.0, 40.0))
    assert not frame_is_removable(one_up, cfg)
    no_hands = raised_frame(left_hand_conf=0.0, right_hand_conf=0.0)
    assert frame_is_removable(no_hands, cfg)


def test_trim_prefix_suffix_only(cfg):
    frames = ([hanging_frame(i) for i in range(3)]
              + [raised_frame(3), hanging_frame(4), raised_frame(5)]
              + [hanging_frame(6)])
    lo, hi = compute_trim(frames, cfg)
    assert (lo, hi) == (3, 6)  # interior hanging frame 4 survives


def test_plan_trim_evenness_repair(cfg):
    # 3 removable lead-in + 9 kept: odd, so one frame is un-trimmed from
    # the back.
    frames = [hanging_frame(i) for i in range(3)]
    frames += [raised_frame(3 + i) for i in range(9)]
    frames += [hanging_frame(12), hanging_frame(13)]
    plan = plan_trim(frames, cfg)
    assert plan.lo == 3
    assert plan.hi == 13
    assert (plan.hi - plan.lo) % 2 == 0
    assert not plan.fallback


def test_plan_trim_fallback_keeps_whole_clip(cfg):
    frames = [hanging_frame(i) for i in range(6)]
    plan = plan_trim(frames, cfg)
    assert (plan.lo, plan.hi) == (0, 6)
    assert plan.fallback


def test_classify_handedness(cfg):
    two = moving_keypoint_frames(8)
    assert classify_handedness(two, cfg) == Handedness.TWO_HANDED
    left = moving_keypoint_frames(8, sides=("left",))
    assert classify_handedness(left, cfg) == Handedness.ONE_HANDED_LEFT
    right = moving_keypoint_frames(8, sides=("right",))
    assert classify_handedness(right, cfg) == Handedness.ONE_HANDED_RIGHT
    none = [make_keypoints(frame_index=i, left_hand_conf=0.0,
                           right_hand_conf=0.0) for i in range(8)]
    assert classify_handedness(none, cfg) == Handedness.NO_HANDS


def test_static_wrist_is_not_moving(cfg):
    frames = [make_keypoints(frame_index=i,
                             left_wrist_at=(50.0, 100.0),
                             right_wrist_at=(30.0 + 12.0 * i, 110.0))
              for i in range(8)]
    assert classify_handedness(frames, cfg) == Handedness.ONE_HANDED_RIGHT


def test_overlap_ratio_cases():
    a = frozenset(range(40))
    b = frozenset(range(30, 50))
    assert overlap_ratio(a, a) == 1.0
    assert overlap_ratio(a, frozenset(range(100, 120))) == 0.0
    assert overlap_ratio(a, b) == 10 / 20
    assert overlap_ratio(frozenset(), frozenset()) == 0.0
    # |left|=40, |right|=20, overlap 5 -> exactly 0.25.
    c = frozenset(range(40, 55)) | frozenset(range(5))
    assert len(c) == 20 and len(a & c) == 5
    assert overlap_ratio(a, c) == 0.25
    assert overlap_ratio(c, a) == 0.25
