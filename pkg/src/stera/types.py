"""Core data model shared by every stage: poses, streams, and the session container.

Conventions, pinned once and relied on everywhere:

* timestamps are uint64 nanoseconds since the session epoch;
* quaternions are (w, x, y, z), unit norm;
* poses map camera-frame points into the world frame (camera-to-world);
* depth values are meters, 0.0 marks an invalid return.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import (
    IDENTITY_QUAT,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)

UNIT_QUAT_TOL = 1e-9
HAND_JOINT_COUNT = 21
HAND_SIDES = ("left", "right")


def _as_float_array(value, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


def _check_sorted(times: np.ndarray, name: str, strict: bool = True) -> None:
    if times.size < 2:
        return
    diffs = np.diff(times.astype(np.int64))
    if strict and (diffs <= 0).any():
        raise ValueError(f"{name} timestamps must be strictly increasing")
    if not strict and (diffs < 0).any():
        raise ValueError(f"{name} timestamps must be non-decreasing")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: p_world = R(rotation) @ p_camera + translation."""

    translation: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) unit quaternion, w x y z

    def __post_init__(self):
        t = _as_float_array(self.translation, (3,), "translation")
        q = _as_float_array(self.rotation, (4,), "rotation")
        if not np.isfinite(t).all():
            raise ValueError("translation must be finite")
        if abs(np.linalg.norm(q) - 1.0) >= UNIT_QUAT_TOL:
            raise ValueError("rotation must be a unit quaternion")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), IDENTITY_QUAT.copy())

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.translation
        return T

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (3,) or (N, 3) camera-frame points into the world frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix().T + self.translation

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.rotation)
        R_inv = quat_to_matrix(q_inv)
        return Pose(-(R_inv @ self.translation), q_inv)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first, then `self`."""
        q = quat_normalize(quat_multiply(self.rotation, other.rotation))
        t = self.apply(other.translation)
        return Pose(t, q)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.translation, other.translation) and np.array_equal(
            self.rotation, other.rotation
        )


@dataclass(eq=False)
class Trajectory:
    """Time-stamped camera-to-world pose sequence, strictly increasing in time."""

    times_ns: np.ndarray  # (N,) uint64
    positions: np.ndarray  # (N, 3)
    quaternions: np.ndarray  # (N, 4) unit, w x y z

    def __post_init__(self):
        self.times_ns = np.asarray(self.times_ns, dtype=np.uint64)
        self.positions = np.asarray(self.positions, dtype=float)
        self.quaternions = np.asarray(self.quaternions, dtype=float)
        n = self.times_ns.shape[0]
        if self.positions.shape != (n, 3) or self.quaternions.shape != (n, 4):
            raise ValueError("trajectory arrays must have matching lengths")
        _check_sorted(self.times_ns, "pose")
        if n and not np.isfinite(self.positions).all():
            raise ValueError("positions must be finite")
        if n:
            norms = np.linalg.norm(self.quaternions, axis=1)
            if (np.abs(norms - 1.0) >= UNIT_QUAT_TOL).any():
                raise ValueError("quaternions must be unit norm")

    @staticmethod
    def empty() -> "Trajectory":
        return Trajectory(np.zeros(0, dtype=np.uint64), np.zeros((0, 3)), np.zeros((0, 4)))

    @staticmethod
    def from_poses(stamped: list[tuple[int, Pose]]) -> "Trajectory":
        stamped = sorted(stamped, key=lambda item: item[0])
        times = np.array([ts for ts, _ in stamped], dtype=np.uint64)
        pos = np.array([p.translation for _, p in stamped]).reshape(-1, 3)
        quat = np.array([p.rotation for _, p in stamped]).reshape(-1, 4)
        return Trajectory(times, pos, quat)

    def __len__(self) -> int:
        return int(self.times_ns.shape[0])

    def pose(self, i: int) -> Pose:
        return Pose(self.positions[i], self.quaternions[i])

    def duration_s(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(self.times_ns[-1] - self.times_ns[0]) * 1e-9

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.times_ns, other.times_ns)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.quaternions, other.quaternions)
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(eq=False)
class DepthMap:
    """Row-major depth in meters; 0.0 marks an invalid return."""

    data: np.ndarray  # (H, W) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if not np.isfinite(self.data).all():
            raise ValueError("depth values must be finite")
        if (self.data < 0).any():
            raise ValueError("depth values must be non-negative")

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, DepthMap):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


@dataclass(eq=False)
class HandObservation:
    """Per-frame 21-joint detection: pixel coords plus estimator-local 3D shape."""

    side: str
    confidence: float
    pixels: np.ndarray  # (21, 2) (u, v)
    relative_xyz: np.ndarray  # (21, 3) meters, estimator-local frame

    def __post_init__(self):
        if self.side not in HAND_SIDES:
            raise ValueError(f"side must be one of {HAND_SIDES}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")
        self.pixels = _as_float_array(self.pixels, (HAND_JOINT_COUNT, 2), "pixels")
        self.relative_xyz = _as_float_array(
            self.relative_xyz, (HAND_JOINT_COUNT, 3), "relative_xyz"
        )
        if not np.isfinite(self.pixels).all():
            raise ValueError("pixel coordinates must be finite")

    def __eq__(self, other) -> bool:
        if not isinstance(other, HandObservation):
            return NotImplemented
        return (
            self.side == other.side
            and self.confidence == other.confidence
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.relative_xyz, other.relative_xyz)
        )


@dataclass(eq=False)
class WorldHandFrame:
    """World-anchored hand joints; invalid joints are NaN and flagged, never zeroed."""

    ts_ns: int
    side: str
    joints: np.ndarray  # (21, 3) world meters, NaN where invalid
    valid: np.ndarray  # (21,) bool
    confidence: float

    def __post_init__(self):
        self.joints = _as_float_array(self.joints, (HAND_JOINT_COUNT, 3), "joints")
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != (HAND_JOINT_COUNT,):
            raise ValueError("valid must have shape (21,)")
        if not np.isfinite(self.joints[self.valid]).all():
            raise ValueError("valid joints must be finite")

    def __eq__(self, other) -> bool:
        if not isinstance(other, WorldHandFrame):
            return NotImplemented
        return (
            self.ts_ns == other.ts_ns
            and self.side == other.side
            and np.array_equal(self.joints, other.joints, equal_nan=True)
            and np.array_equal(self.valid, other.valid)
            and self.confidence == other.confidence
        )


@dataclass(eq=False)
class MarkerSighting:
    """A fiducial detection: marker position in the camera frame at one instant."""

    ts_ns: int
    marker_id: int
    p_cam: np.ndarray  # (3,) meters

    def __post_init__(self):
        if self.marker_id < 0:
            raise ValueError("marker id must be non-negative")
        self.p_cam = _as_float_array(self.p_cam, (3,), "p_cam")
        if not np.isfinite(self.p_cam).all():
            raise ValueError("marker position must be finite")

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkerSighting):
            return NotImplemented
        return (
            self.ts_ns == other.ts_ns
            and self.marker_id == other.marker_id
            and np.array_equal(self.p_cam, other.p_cam)
        )


@dataclass(eq=False)
class ImuStream:
    """Pass-through inertial samples; no fusion happens downstream."""

    times_ns: np.ndarray  # (N,)
    accel: np.ndarray  # (N, 3) m/s^2
    gyro: np.ndarray  # (N, 3) rad/s

    def __post_init__(self):
        self.times_ns = np.asarray(self.times_ns, dtype=np.uint64)
        self.accel = np.asarray(self.accel, dtype=float).reshape(-1, 3)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(-1, 3)
        n = self.times_ns.shape[0]
        if self.accel.shape[0] != n or self.gyro.shape[0] != n:
            raise ValueError("imu arrays must have matching lengths")
        _check_sorted(self.times_ns, "imu")

    @staticmethod
    def empty() -> "ImuStream":
        return ImuStream(np.zeros(0, dtype=np.uint64), np.zeros((0, 3)), np.zeros((0, 3)))

    def __len__(self) -> int:
        return int(self.times_ns.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImuStream):
            return NotImplemented
        return (
            np.array_equal(self.times_ns, other.times_ns)
            and np.array_equal(self.accel, other.accel)
            and np.array_equal(self.gyro, other.gyro)
        )


@dataclass(eq=False)
class SessionLog:
    """One capture session: every stream independently time-sorted."""

    session_id: str
    intrinsics: CameraIntrinsics
    poses: Trajectory = field(default_factory=Trajectory.empty)
    depths: list[tuple[int, DepthMap]] = field(default_factory=list)
    hands: list[tuple[int, list[HandObservation]]] = field(default_factory=list)
    imu: ImuStream = field(default_factory=ImuStream.empty)
    markers: list[MarkerSighting] = field(default_factory=list)
    # Bookkeeping only; not part of session identity.
    skipped_messages: int = 0

    def __post_init__(self):
        _check_sorted(np.array([ts for ts, _ in self.depths], dtype=np.uint64), "depth")
        _check_sorted(np.array([ts for ts, _ in self.hands], dtype=np.uint64), "hands")
        _check_sorted(
            np.array([m.ts_ns for m in self.markers], dtype=np.uint64), "markers", strict=False
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SessionLog):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and self.intrinsics == other.intrinsics
            and self.poses == other.poses
            and self.depths == other.depths
            and self.hands == other.hands
            and self.imu == other.imu
            and self.markers == other.markers
        )
