"""Transforms, pinhole math, depth sampling, association, anchoring."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stera import geometry
from stera.errors import InvalidDepthError, MissingStreamError, OutOfBoundsError
from stera.geometry import (
    anchor_hands,
    associate,
    project,
    sample_depth,
    transform_point,
    unproject,
)
from stera.rotations import quat_from_axis_angle, quat_normalize
from stera.types import CameraIntrinsics, DepthMap, Pose

from conftest import TEST_INTRINSICS, make_pose


def random_pose(rng) -> Pose:
    return Pose(rng.normal(size=3), quat_normalize(rng.normal(size=4)))


class TestTransformPoint:
    def test_identity(self):
        assert np.allclose(transform_point(Pose.identity(), [1.0, 2.0, 3.0]), [1, 2, 3])

    def test_pure_translation(self):
        pose = make_pose(t=(1, 0, 0))
        assert np.allclose(transform_point(pose, [0.0, 0.0, 0.0]), [1, 0, 0])

    def test_90_degree_yaw(self):
        # hand-expanded rotation matrix for q = (sqrt2/2, 0, 0, sqrt2/2)
        expected_R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        pose = make_pose(q=(np.sqrt(2) / 2, 0, 0, np.sqrt(2) / 2))
        assert np.allclose(pose.rotation_matrix(), expected_R, atol=1e-12)
        assert np.allclose(transform_point(pose, [1.0, 0.0, 0.0]), [0, 1, 0], atol=1e-12)

    def test_isometry_property(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            pose = random_pose(rng)
            a, b = rng.normal(size=3), rng.normal(size=3)
            d1 = np.linalg.norm(transform_point(pose, a) - transform_point(pose, b))
            assert d1 == pytest.approx(np.linalg.norm(a - b), abs=1e-9)

    def test_inverse_consistency(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            pose = random_pose(rng)
            p = rng.normal(size=3)
            back = transform_point(pose.inverse(), transform_point(pose, p))
            assert np.allclose(back, p, atol=1e-9)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a, b = random_pose(rng), random_pose(rng)
            p = rng.normal(size=3)
            assert np.allclose(
                a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-9
            )


class TestPinhole:
    def test_principal_point(self):
        assert np.allclose(unproject(TEST_INTRINSICS, 320, 240, 2.0), [0, 0, 2.0])

    def test_formula_by_hand(self):
        # ((820-320)*1/500, (240-240)*1/500, 1) = (1, 0, 1)
        assert np.allclose(unproject(TEST_INTRINSICS, 820, 240, 1.0), [1, 0, 1])

    def test_zero_depth_invalid(self):
        with pytest.raises(InvalidDepthError):
            unproject(TEST_INTRINSICS, 320, 240, 0.0)

    def test_depth_floor_invalid(self):
        with pytest.raises(InvalidDepthError):
            unproject(TEST_INTRINSICS, 320, 240, 0.01)

    def test_projection_round_trip(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            u, v = rng.uniform(0, 640), rng.uniform(0, 480)
            z = rng.uniform(0.05, 10.0)
            uu, vv = project(TEST_INTRINSICS, unproject(TEST_INTRINSICS, u, v, z))
            assert uu == pytest.approx(u, abs=1e-6)
            assert vv == pytest.approx(v, abs=1e-6)


class TestSampleDepth:
    def test_uniform_map(self):
        depth = DepthMap(np.full((10, 10), 1.5, dtype=np.float32))
        assert sample_depth(depth, 5.2, 4.8) == pytest.approx(1.5)

    def test_all_invalid_window(self):
        depth = DepthMap(np.zeros((10, 10), dtype=np.float32))
        assert sample_depth(depth, 5, 5) is None

    def test_median_of_partial_window(self):
        # window values {0, 1.0, 1.2, 0, 1.1, 0, 0, 0, 0}: median of {1.0, 1.1, 1.2} = 1.1
        data = np.zeros((3, 3), dtype=np.float32)
        data[0, 1], data[0, 2], data[1, 1] = 1.0, 1.2, 1.1
        assert sample_depth(DepthMap(data), 1, 1) == pytest.approx(1.1, abs=1e-7)

    def test_lone_center_pixel_counts(self):
        data = np.zeros((9, 9), dtype=np.float32)
        data[4, 4] = 2.5
        assert sample_depth(DepthMap(data), 4, 4) == pytest.approx(2.5)

    def test_out_of_bounds(self):
        depth = DepthMap(np.ones((4, 4), dtype=np.float32))
        with pytest.raises(OutOfBoundsError):
            sample_depth(depth, 10, 2)

    def test_window_clipped_at_corner(self):
        data = np.zeros((4, 4), dtype=np.float32)
        data[0, 0] = 3.0
        assert sample_depth(DepthMap(data), 0, 0) == pytest.approx(3.0)


MS = 1_000_000


class TestAssociate:
    def test_identical_lists_zero_tolerance(self):
        times = np.array([0, 10 * MS, 20 * MS], dtype=np.uint64)
        assert associate(times, times, 0) == [(0, 0), (1, 1), (2, 2)]

    def test_beyond_tolerance_empty(self):
        a = np.array([0], dtype=np.uint64)
        b = np.array([30 * MS], dtype=np.uint64)
        assert associate(a, b, 20 * MS) == []

    def test_enumerated_example(self):
        a = np.array([0, 100 * MS], dtype=np.uint64)
        b = np.array([5 * MS, 98 * MS], dtype=np.uint64)
        assert associate(a, b, 20 * MS) == [(0, 0), (1, 1)]

    def test_one_to_one(self):
        a = np.array([0, 1, 2], dtype=np.uint64)
        b = np.array([1], dtype=np.uint64)
        pairs = associate(a, b, 5)
        assert len(pairs) == 1
        assert pairs[0][1] == 0

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.integers(0, 500), max_size=20),
        st.lists(st.integers(0, 500), max_size=20),
        st.integers(0, 100),
    )
    def test_count_symmetry(self, a, b, tol):
        ta = np.array(sorted(a), dtype=np.uint64)
        tb = np.array(sorted(b), dtype=np.uint64)
        forward = associate(ta, tb, tol)
        backward = associate(tb, ta, tol)
        assert len(forward) == len(backward)
        for ia, ib in forward:
            assert abs(int(ta[ia]) - int(tb[ib])) <= tol


class TestAnchorHands:
    def test_missing_pose_stream(self, rng):
        from conftest import random_session

        session = random_session(rng)
        session.poses = session.poses.empty()
        with pytest.raises(MissingStreamError):
            anchor_hands(session)

    def test_missing_depth_stream(self, rng):
        from conftest import random_session

        session = random_session(rng)
        session.depths = []
        if not session.hands:
            session.hands = [(int(session.poses.times_ns[0]), [])]
        with pytest.raises(MissingStreamError):
            anchor_hands(session)

    def _single_joint_session(self, depth_value: float):
        from stera.types import HandObservation, SessionLog, Trajectory

        intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=24.0, width=64, height=48)
        data = np.zeros((48, 64), dtype=np.float32)
        if depth_value > 0:
            data[24, 32] = depth_value
        pixels = np.tile([32.0, 24.0], (21, 1))
        obs = HandObservation(
            side="right", confidence=0.8, pixels=pixels, relative_xyz=np.zeros((21, 3))
        )
        return SessionLog(
            session_id="one",
            intrinsics=intr,
            poses=Trajectory(
                np.array([100], dtype=np.uint64),
                np.zeros((1, 3)),
                np.array([[1.0, 0, 0, 0]]),
            ),
            depths=[(100, DepthMap(data))],
            hands=[(100, [obs])],
        )

    def test_identity_pose_principal_point(self):
        frames = anchor_hands(self._single_joint_session(1.0))
        assert len(frames) == 1
        assert frames[0].valid.all()
        assert np.allclose(frames[0].joints, np.tile([0, 0, 1.0], (21, 1)), atol=1e-6)

    def test_all_zero_depth_gives_invalid_frame(self):
        frames = anchor_hands(self._single_joint_session(0.0))
        assert len(frames) == 1
        assert not frames[0].valid.any()
        assert np.isnan(frames[0].joints).all()

    def test_invalid_joints_are_never_finite(self):
        from stera import gen_hand_session, MotionProfile

        session, _ = gen_hand_session(
            MotionProfile(kind="stationary", duration_s=1, rate_hz=10), seed=11
        )
        # wipe one depth map so that frame's joints all go invalid
        ts0, depth0 = session.depths[0]
        session.depths[0] = (ts0, DepthMap(np.zeros_like(depth0.data)))
        for frame in anchor_hands(session):
            assert np.isfinite(frame.joints[frame.valid]).all()
            assert np.isnan(frame.joints[~frame.valid]).all()

    def test_output_sorted_by_timestamp(self, rng):
        from stera import gen_hand_session, MotionProfile

        session, _ = gen_hand_session(
            MotionProfile(kind="reach_cycle", duration_s=1, rate_hz=10), seed=2
        )
        frames = anchor_hands(session)
        keys = [(f.ts_ns, f.side) for f in frames]
        assert keys == sorted(keys)
