"""Bone lengths, CV, flexion angles, joint limits, wrist dynamics, filtering."""

from __future__ import annotations

import statistics

import numpy as np
import pytest

from stera.errors import NoDataError
from stera.hand_kinematics import (
    MANO_SKELETON,
    DiscardCounts,
    HandSkeleton,
    JointLimits,
    bone_cv,
    bone_lengths,
    filter_frames,
    flexion_angles,
    joint_limit_report,
    kinematics_report,
    wrist_dynamics,
)
from stera.rotations import quat_normalize, quat_to_matrix

from conftest import hand_frame, straight_hand


class TestSkeleton:
    def test_twenty_bones_tree(self):
        assert len(MANO_SKELETON.bones) == 20
        children = sorted(c for _, c in MANO_SKELETON.bones)
        assert children == list(range(1, 21))

    def test_angle_triplets(self):
        triplets = MANO_SKELETON.angle_triplets()
        assert len(triplets) == 15
        # MCP angles are measured against the wrist
        assert all(parent == 0 for _, cls, parent, _, _ in triplets if cls == "mcp")

    def test_bad_skeleton_rejected(self):
        bones = list(MANO_SKELETON.bones)
        bones[3] = (0, 1)  # joint 1 now has two parents, joint 4 none
        with pytest.raises(ValueError):
            HandSkeleton(bones=tuple(bones))


class TestBoneLengths:
    def test_unit_chain(self):
        lengths = bone_lengths(hand_frame(straight_hand(1.0)))
        assert lengths.shape == (20,)
        assert np.allclose(lengths, 1.0)

    def test_invalid_wrist_drops_rooted_bones(self):
        valid = np.ones(21, dtype=bool)
        valid[0] = False
        lengths = bone_lengths(hand_frame(straight_hand(), valid=valid))
        wrist_bones = [i for i, (p, _) in enumerate(MANO_SKELETON.bones) if p == 0]
        assert np.isnan(lengths[wrist_bones]).all()
        assert np.isfinite(np.delete(lengths, wrist_bones)).all()

    def test_invariant_under_rigid_transform(self, rng):
        joints = straight_hand(0.05)
        base = bone_lengths(hand_frame(joints))
        for _ in range(50):
            R = quat_to_matrix(quat_normalize(rng.normal(size=4)))
            t = rng.normal(size=3)
            moved = bone_lengths(hand_frame(joints @ R.T + t))
            assert np.allclose(moved, base, atol=1e-9)


class TestBoneCv:
    def test_constant_lengths_zero_cv(self):
        frames = [hand_frame(straight_hand(0.08), ts_ns=i) for i in range(10)]
        stats = bone_cv(frames)["right"]
        assert np.allclose(stats.per_bone_cv, 0.0)
        assert stats.median_cv == 0.0

    def test_two_sample_cv_by_hand(self):
        # lengths {1.00, 1.02}: 100 * stdev / mean = 1.4002...%
        expected = 100 * statistics.stdev([1.00, 1.02]) / statistics.mean([1.00, 1.02])
        frames = [
            hand_frame(straight_hand(1.00), ts_ns=0),
            hand_frame(straight_hand(1.02), ts_ns=1),
        ]
        stats = bone_cv(frames)["right"]
        assert np.allclose(stats.per_bone_cv, expected, atol=1e-9)
        assert stats.median_cv == pytest.approx(1.4002, abs=1e-3)

    def test_sides_reported_separately(self):
        frames = [
            hand_frame(straight_hand(0.08), ts_ns=0, side="left"),
            hand_frame(straight_hand(0.08), ts_ns=1, side="left"),
            hand_frame(straight_hand(0.05), ts_ns=0, side="right"),
            hand_frame(straight_hand(0.06), ts_ns=1, side="right"),
        ]
        stats = bone_cv(frames)
        assert stats["left"].median_cv == 0.0
        assert stats["right"].median_cv > 1.0

    def test_cv_invariant_under_uniform_scaling(self, rng):
        frames = [
            hand_frame(straight_hand(0.08 + 0.001 * float(rng.normal())), ts_ns=i)
            for i in range(20)
        ]
        base = bone_cv(frames)["right"].per_bone_cv
        scaled = [
            hand_frame(f.joints * 3.7, ts_ns=f.ts_ns, side=f.side) for f in frames
        ]
        assert np.allclose(bone_cv(scaled)["right"].per_bone_cv, base, atol=1e-9)

    def test_single_frame_raises(self):
        with pytest.raises(NoDataError):
            bone_cv([hand_frame(straight_hand())])


def bent_finger_frame(angle_deg: float) -> np.ndarray:
    """Index finger bent by `angle_deg` at the PIP joint, other fingers straight."""
    joints = straight_hand(1.0)
    # index chain: 5 (MCP), 6 (PIP), 7 (DIP), 8 (TIP) along +y
    a = np.radians(angle_deg)
    direction = np.array([np.sin(a), np.cos(a), 0.0])
    joints[7] = joints[6] + direction
    joints[8] = joints[7] + direction
    return joints


class TestFlexionAngles:
    def test_straight_fingers_zero(self):
        angles = flexion_angles(hand_frame(straight_hand()))
        assert np.allclose(angles, 0.0, atol=1e-9)

    def test_right_angle_pip(self):
        angles = flexion_angles(hand_frame(bent_finger_frame(90.0)))
        triplets = MANO_SKELETON.angle_triplets()
        idx = next(
            i for i, (f, c, *_rest) in enumerate(triplets) if f == "index" and c == "pip"
        )
        assert angles[idx] == pytest.approx(90.0, abs=1e-9)

    def test_mcp_45_by_dot_product(self):
        # wrist (0,0,0), MCP (1,0,0), PIP (2,1,0): flexion at MCP = 45 degrees
        joints = straight_hand(1.0)
        joints[5] = [1.0, 0.0, 0.0]
        joints[6] = [2.0, 1.0, 0.0]
        valid = np.zeros(21, dtype=bool)
        valid[[0, 5, 6]] = True
        angles = flexion_angles(hand_frame(joints, valid=valid))
        triplets = MANO_SKELETON.angle_triplets()
        idx = next(
            i for i, (f, c, *_rest) in enumerate(triplets) if f == "index" and c == "mcp"
        )
        assert angles[idx] == pytest.approx(45.0, abs=1e-9)
        assert np.isnan(np.delete(angles, idx)).all()

    def test_invariant_under_rigid_and_scale(self, rng):
        # arccos near 0 degrees is sqrt-conditioned, so allow ~1e-3 deg slack
        joints = bent_finger_frame(30.0)
        base = flexion_angles(hand_frame(joints))
        for _ in range(25):
            R = quat_to_matrix(quat_normalize(rng.normal(size=4)))
            t = rng.normal(size=3)
            s = float(rng.uniform(0.3, 3.0))
            moved = flexion_angles(hand_frame(s * (joints @ R.T) + t))
            assert np.allclose(moved, base, atol=1e-3)


class TestJointLimits:
    def test_default_limits_cover_15(self):
        limits = JointLimits.default()
        assert len(limits.limits) == 15
        for lo, hi in limits.limits.values():
            assert lo < hi

    def test_all_straight_within_limits(self):
        frames = [hand_frame(straight_hand(), ts_ns=i) for i in range(5)]
        report = joint_limit_report(frames)
        assert report.pooled_fraction == 1.0

    def test_one_violation_among_thousand(self):
        frames = [hand_frame(straight_hand(), ts_ns=i) for i in range(999)]
        frames.append(hand_frame(bent_finger_frame(170.0), ts_ns=999))
        report = joint_limit_report(frames)
        triplets = MANO_SKELETON.angle_triplets()
        idx = next(
            i for i, (f, c, *_rest) in enumerate(triplets) if f == "index" and c == "pip"
        )
        assert report.per_angle_fraction[idx] == pytest.approx(0.999)
        assert report.pooled_fraction == pytest.approx(1 - 1 / 15000)

    def test_limits_from_json(self, tmp_path):
        path = tmp_path / "limits.json"
        path.write_text(
            '{"thumb": {"mcp": [-5, 50], "pip": [-5, 50], "dip": [-5, 50]},'
            '"index": {"mcp": [-5, 50], "pip": [-5, 50], "dip": [-5, 50]},'
            '"middle": {"mcp": [-5, 50], "pip": [-5, 50], "dip": [-5, 50]},'
            '"ring": {"mcp": [-5, 50], "pip": [-5, 50], "dip": [-5, 50]},'
            '"pinky": {"mcp": [-5, 50], "pip": [-5, 50], "dip": [-5, 50]}}'
        )
        limits = JointLimits.from_json(path)
        assert limits.limits[("index", "pip")] == (-5.0, 50.0)


def moving_wrist_frames(positions, rate_hz=30.0, side="right"):
    frames = []
    for i, p in enumerate(positions):
        joints = straight_hand(0.05) + np.asarray(p)
        frames.append(hand_frame(joints, ts_ns=int(round(i / rate_hz * 1e9)), side=side))
    return frames


class TestWristDynamics:
    def test_stationary_wrist(self):
        frames = moving_wrist_frames(np.zeros((60, 3)))
        stats = wrist_dynamics(frames)["right"]
        assert stats.median_velocity == pytest.approx(0.0, abs=1e-12)
        assert stats.median_accel == pytest.approx(0.0, abs=1e-12)

    def test_constant_velocity(self):
        t = np.arange(90) / 30.0
        positions = np.stack([0.3 * t, np.zeros_like(t), np.zeros_like(t)], axis=1)
        stats = wrist_dynamics(moving_wrist_frames(positions))["right"]
        assert stats.median_velocity == pytest.approx(0.3, rel=0.01)
        assert stats.median_accel < 0.01

    def test_sinusoid_peak_velocity(self):
        # x(t) = A sin(wt): peak velocity A*w, sampled at 60 Hz
        A, f = 0.1, 0.5
        w = 2 * np.pi * f
        t = np.arange(240) / 60.0
        positions = np.stack(
            [A * np.sin(w * t), np.zeros_like(t), np.zeros_like(t)], axis=1
        )
        frames = moving_wrist_frames(positions, rate_hz=60.0)
        stats = wrist_dynamics(frames)["right"]
        assert stats.p99_velocity == pytest.approx(A * w, rel=0.02)

    def test_time_reversal_preserves_speeds(self):
        rng = np.random.default_rng(8)
        positions = np.cumsum(rng.normal(0, 0.01, size=(50, 3)), axis=0)
        frames = moving_wrist_frames(positions)
        fwd = wrist_dynamics(frames)["right"]
        rev_frames = moving_wrist_frames(positions[::-1])
        rev = wrist_dynamics(rev_frames)["right"]
        # ns-rounded timestamps make the gradient weights reversal-asymmetric
        # at the 1e-9 level, so compare to 1e-6 instead of bit-exact
        assert rev.median_velocity == pytest.approx(fwd.median_velocity, rel=1e-6)

    def test_too_few_samples(self):
        with pytest.raises(NoDataError):
            wrist_dynamics(moving_wrist_frames(np.zeros((2, 3))))


class TestFilterFrames:
    def test_zero_gate_keeps_all(self):
        frames = [hand_frame(straight_hand(), ts_ns=i, confidence=0.1) for i in range(4)]
        kept, counts = filter_frames(frames, conf_min=0.0)
        assert len(kept) == 4
        assert counts.low_confidence_hands == 0

    def test_gate_above_all_confidences(self):
        frames = [hand_frame(straight_hand(), ts_ns=i, confidence=0.5) for i in range(4)]
        kept, counts = filter_frames(frames, conf_min=0.6)
        assert kept == []
        assert counts.low_confidence_hands == 4

    def test_mixed_discard_counting(self):
        frames = [hand_frame(straight_hand(), ts_ns=i, confidence=0.9) for i in range(5)]
        for i in range(3):
            frames.append(
                hand_frame(straight_hand(), ts_ns=10 + i, confidence=0.1)
            )
        all_invalid = hand_frame(
            np.full((21, 3), np.nan), ts_ns=99, valid=np.zeros(21, dtype=bool)
        )
        frames.append(all_invalid)
        kept, counts = filter_frames(frames, conf_min=0.3)
        assert counts.low_confidence_hands == 3
        assert counts.fully_invalid_frames == 1
        assert counts.invalid_joints == 21
        assert len(kept) == 6


class TestKinematicsReport:
    def test_report_over_synthetic_session(self):
        from stera import MotionProfile, anchor_hands, gen_hand_session

        session, _ = gen_hand_session(
            MotionProfile(kind="stationary", duration_s=2, rate_hz=15), seed=21
        )
        frames = anchor_hands(session)
        report = kinematics_report(frames, total_frames=len(session.hands))
        assert set(report.sides) == {"left", "right"}
        for side_report in report.sides.values():
            assert side_report.detection_rate == 1.0
            assert side_report.limit_report.pooled_fraction == 1.0
            assert side_report.bone_cv.median_cv < 1e-4
            assert 0.6 <= side_report.mean_confidence <= 0.95
        assert report.to_dict()["n_frames_total"] == 30

    def test_detection_rate_with_drops(self):
        from stera import MotionProfile, anchor_hands, gen_hand_session

        session, _ = gen_hand_session(
            MotionProfile(kind="stationary", duration_s=4, rate_hz=15),
            seed=22,
            detection_rate=0.7,
        )
        frames = anchor_hands(session)
        report = kinematics_report(frames, total_frames=len(session.hands))
        for side_report in report.sides.values():
            assert 0.4 <= side_report.detection_rate <= 0.95
