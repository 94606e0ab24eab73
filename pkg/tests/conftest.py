"""Shared helpers for building small sessions and hand frames in tests."""

from __future__ import annotations

import numpy as np
import pytest

from stera.rotations import quat_normalize
from stera.types import (
    CameraIntrinsics,
    DepthMap,
    HandObservation,
    ImuStream,
    MarkerSighting,
    Pose,
    SessionLog,
    Trajectory,
    WorldHandFrame,
)

TEST_INTRINSICS = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def make_pose(t=(0.0, 0.0, 0.0), q=(1.0, 0.0, 0.0, 0.0)) -> Pose:
    return Pose(np.array(t, dtype=float), quat_normalize(np.array(q, dtype=float)))


def make_trajectory(times_s, positions, quats=None) -> Trajectory:
    times = np.round(np.asarray(times_s, dtype=float) * 1e9).astype(np.uint64)
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if quats is None:
        quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(positions), 1))
    return Trajectory(times, positions, np.asarray(quats, dtype=float))


def random_session(rng: np.random.Generator, session_id: str = "rand") -> SessionLog:
    """Small random session touching every stream; valid by construction."""
    n = int(rng.integers(2, 6))
    times = np.cumsum(rng.integers(1, 50_000_000, size=n)).astype(np.uint64)
    positions = rng.normal(size=(n, 3))
    quats = np.stack([quat_normalize(rng.normal(size=4)) for _ in range(n)])

    depths = []
    for i in range(int(rng.integers(0, 3))):
        data = np.abs(rng.normal(1.0, 0.3, size=(6, 8))).astype(np.float32)
        data[rng.random(size=(6, 8)) < 0.2] = 0.0
        depths.append((int(times[min(i, n - 1)]) + i, DepthMap(data)))

    hands = []
    for i in range(int(rng.integers(0, 3))):
        observations = []
        for side in ("left", "right"):
            if rng.random() < 0.7:
                observations.append(
                    HandObservation(
                        side=side,
                        confidence=float(rng.uniform(0, 1)),
                        pixels=rng.uniform(0, 100, size=(21, 2)),
                        relative_xyz=rng.normal(size=(21, 3)),
                    )
                )
        hands.append((int(times[min(i, n - 1)]) + 7 * i + 1, observations))

    markers = []
    t_marker = int(times[0])
    for _ in range(int(rng.integers(0, 4))):
        markers.append(
            MarkerSighting(
                ts_ns=t_marker, marker_id=int(rng.integers(0, 3)), p_cam=rng.normal(size=3)
            )
        )
        t_marker += int(rng.integers(0, 30_000_000))

    n_imu = int(rng.integers(0, 4))
    imu = (
        ImuStream(
            np.cumsum(rng.integers(1, 10_000_000, size=n_imu)).astype(np.uint64),
            rng.normal(size=(n_imu, 3)),
            rng.normal(size=(n_imu, 3)),
        )
        if n_imu
        else ImuStream.empty()
    )

    return SessionLog(
        session_id=session_id,
        intrinsics=CameraIntrinsics(
            fx=float(rng.uniform(100, 600)),
            fy=float(rng.uniform(100, 600)),
            cx=50.0,
            cy=40.0,
            width=100,
            height=80,
        ),
        poses=Trajectory(times, positions, quats),
        depths=depths,
        hands=hands,
        imu=imu,
        markers=markers,
    )


def hand_frame(
    joints: np.ndarray,
    ts_ns: int = 0,
    side: str = "right",
    valid: np.ndarray | None = None,
    confidence: float = 0.9,
) -> WorldHandFrame:
    joints = np.asarray(joints, dtype=float)
    if valid is None:
        valid = np.ones(21, dtype=bool)
    return WorldHandFrame(
        ts_ns=ts_ns, side=side, joints=joints, valid=np.asarray(valid, dtype=bool),
        confidence=confidence,
    )


def straight_hand(spacing: float = 1.0) -> np.ndarray:
    """21 joints with every parent->child bone exactly `spacing` long.

    Each finger chain leaves the wrist along its own direction; within a
    finger, joints continue along that direction, so all bones have equal
    length and all flexion angles are zero.
    """
    directions = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 1.0],
        ]
    )
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    joints = np.zeros((21, 3))
    for f in range(5):
        for k in range(4):
            joints[1 + 4 * f + k] = directions[f] * spacing * (k + 1)
    return joints


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
