"""Deterministic synthetic-session generator: the test oracle for every metric.

All randomness flows through numpy's PCG64 generator seeded from the profile
or noise model, so identical seeds give bit-identical outputs across runs.

Camera motion profiles mirror the capture-validation sessions: straight-line
walks, closed loops, pure spins, fully stationary holds, and a gentle
head-sway used while reaching.

Hands are animated as planar chains facing the camera: every joint of a hand
shares one camera-frame depth per frame, so sparse depth maps stay exact at
joint pixels even where projections land close together. Flexion angles stay
inside the default biomechanical limits by construction, and bone lengths
reproduce the template exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePlanError, JointBehindCameraError, OutOfBoundsError
from .geometry import DEPTH_FLOOR_M, project, sample_depth
from .labels import AtomicSpan
from .rotations import quat_from_axis_angle, quat_multiply, quat_normalize, quats_from_yaws
from .types import (
    HAND_JOINT_COUNT,
    CameraIntrinsics,
    DepthMap,
    HandObservation,
    ImuStream,
    MarkerSighting,
    Pose,
    SessionLog,
    Trajectory,
)

PROFILE_KINDS = ("stationary", "line", "loop", "spin", "reach_cycle")
HAND_MODES = ("reach_cycle", "static_world", "static_camera")

SYNTH_INTRINSICS = CameraIntrinsics(fx=160.0, fy=160.0, cx=112.0, cy=80.0, width=224, height=160)

# Bone lengths in meters, finger-major (wrist->MCP, MCP->PIP, PIP->DIP, DIP->TIP).
DEFAULT_BONE_LENGTHS = np.array(
    [
        0.046, 0.036, 0.030, 0.026,  # thumb
        0.095, 0.040, 0.026, 0.023,  # index
        0.092, 0.044, 0.029, 0.024,  # middle
        0.088, 0.041, 0.028, 0.024,  # ring
        0.084, 0.032, 0.021, 0.021,  # pinky
    ]
)

# Finger splay from straight-up, degrees; mirrored for the left hand.
_FAN_DEG = np.array([55.0, 18.0, 6.0, -6.0, -18.0])

# Flexion animation: center and amplitude per joint class, degrees.
_FLEX_CENTER_DEG = np.array([18.0, 22.0, 11.0])
_FLEX_AMP_DEG = np.array([12.0, 14.0, 7.0])


@dataclass(frozen=True)
class MotionProfile:
    """Camera motion recipe; `speed_mps` drives line/loop, `yaw_rate_rps` spin."""

    kind: str
    duration_s: float
    rate_hz: float
    speed_mps: float = 0.5
    yaw_rate_rps: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"kind must be one of {PROFILE_KINDS}")
        if not self.duration_s > 0:
            raise ValueError("duration must be positive")
        if not self.rate_hz > 0:
            raise ValueError("sample rate must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Per-axis position noise, small-angle rotation noise, cumulative drift."""

    pos_sigma_m: float = 0.0
    rot_sigma_deg: float = 0.0
    drift_per_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pos_sigma_m < 0 or self.rot_sigma_deg < 0 or self.drift_per_m < 0:
            raise ValueError("noise magnitudes must be non-negative")

    def is_zero(self) -> bool:
        return self.pos_sigma_m == 0 and self.rot_sigma_deg == 0 and self.drift_per_m == 0


def _sample_times_s(profile: MotionProfile) -> np.ndarray:
    """Endpoint-inclusive grid: round(duration*rate) samples spanning [0, duration]."""
    n = max(2, int(round(profile.duration_s * profile.rate_hz)))
    return np.arange(n) * (profile.duration_s / (n - 1))


def gen_trajectory(profile: MotionProfile) -> Trajectory:
    """Closed-form camera trajectory for a motion profile."""
    t = _sample_times_s(profile)
    n = t.shape[0]
    times_ns = np.round(t * 1e9).astype(np.uint64)
    positions = np.zeros((n, 3))
    yaws = np.zeros(n)

    if profile.kind == "line":
        positions[:, 0] = profile.speed_mps * t
    elif profile.kind == "loop":
        radius = profile.speed_mps * profile.duration_s / (2 * math.pi)
        theta = 2 * math.pi * t / profile.duration_s
        positions[:, 0] = radius * np.sin(theta)
        positions[:, 1] = radius * (1 - np.cos(theta))
        yaws = theta
    elif profile.kind == "spin":
        yaws = profile.yaw_rate_rps * t
    elif profile.kind == "reach_cycle":
        positions[:, 0] = 0.03 * np.sin(2 * math.pi * 0.25 * t)
        positions[:, 1] = 0.02 * np.sin(2 * math.pi * 0.17 * t + 1.0)
        positions[:, 2] = 0.01 * np.sin(2 * math.pi * 0.11 * t)
        yaws = 0.05 * np.sin(2 * math.pi * 0.13 * t)
    # stationary: all zeros

    return Trajectory(times_ns, positions, quats_from_yaws(yaws))


def perturb_trajectory(traj: Trajectory, noise: NoiseModel) -> Trajectory:
    """Seeded Gaussian position/rotation noise plus distance-proportional drift.

    A zero noise model returns the input unchanged (same arrays copied).
    """
    if noise.is_zero():
        return Trajectory(
            traj.times_ns.copy(), traj.positions.copy(), traj.quaternions.copy()
        )
    rng = np.random.Generator(np.random.PCG64(noise.seed))
    n = len(traj)
    positions = traj.positions.copy()
    quats = traj.quaternions.copy()

    if noise.pos_sigma_m > 0:
        positions += rng.normal(0.0, noise.pos_sigma_m, size=(n, 3))
    if noise.rot_sigma_deg > 0:
        axes = rng.normal(size=(n, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        angles = rng.normal(0.0, math.radians(noise.rot_sigma_deg), size=n)
        quats = np.stack(
            [
                quat_normalize(
                    quat_multiply(quat_from_axis_angle(axes[i], angles[i]), quats[i])
                )
                for i in range(n)
            ]
        )
    if noise.drift_per_m > 0:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        seg = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        positions += np.outer(cum * noise.drift_per_m, direction)

    return Trajectory(traj.times_ns.copy(), positions, quats)


def gen_session(
    profile: MotionProfile,
    noise: NoiseModel | None = None,
    marker_every_s: float | None = None,
    marker_id: int = 0,
    marker_world: tuple[float, float, float] = (1.0, 0.4, 0.3),
    session_id: str | None = None,
) -> tuple[SessionLog, Trajectory]:
    """Pose/IMU/marker session without hands; returns (session, clean trajectory).

    Poses in the session are the noise-perturbed trajectory when a noise
    model is given. Marker sightings are computed from the *clean* poses, so
    any revisit drift measured downstream reflects exactly the injected pose
    error.
    """
    clean = gen_trajectory(profile)
    poses = perturb_trajectory(clean, noise) if noise is not None else clean

    markers: list[MarkerSighting] = []
    if marker_every_s is not None:
        target = np.round(
            np.arange(0.0, profile.duration_s + 1e-9, marker_every_s) * 1e9
        ).astype(np.int64)
        indices = np.unique(
            np.clip(
                np.searchsorted(clean.times_ns.astype(np.int64), target), 0, len(clean) - 1
            )
        )
        world = np.asarray(marker_world, dtype=float)
        for i in indices:
            p_cam = clean.pose(int(i)).inverse().apply(world)
            markers.append(
                MarkerSighting(
                    ts_ns=int(clean.times_ns[i]), marker_id=marker_id, p_cam=p_cam
                )
            )

    imu = ImuStream(
        poses.times_ns.copy(), np.zeros((len(poses), 3)), np.zeros((len(poses), 3))
    )
    session = SessionLog(
        session_id=session_id or f"synth-{profile.kind}-{profile.seed}",
        intrinsics=SYNTH_INTRINSICS,
        poses=poses,
        imu=imu,
        markers=markers,
    )
    return session, clean


# --- hand sessions --------------------------------------------------------------


@dataclass(frozen=True)
class HandTruth:
    """Generator ground truth for one emitted hand detection."""

    ts_ns: int
    side: str
    joints_world: np.ndarray  # (21, 3)
    recoverable: np.ndarray  # (21,) bool: depth present and exact at the joint pixel


def _planar_hand_offsets(template: np.ndarray, flex_deg: np.ndarray, side: str) -> np.ndarray:
    """(21, 3) wrist-relative joint offsets of a flat hand facing the camera.

    The chain lives in the image plane (z offsets are zero): fingers point up,
    fan mirrored per side, flexion curls outward. Consecutive bone directions
    differ by exactly the requested flexion angles and segment lengths equal
    the template.
    """
    sign = 1.0 if side == "right" else -1.0
    out = np.zeros((HAND_JOINT_COUNT, 3))
    for f in range(5):
        beta = sign * math.radians(_FAN_DEG[f])
        point = np.zeros(3)
        base = 1 + 4 * f
        for seg in range(4):
            if seg > 0:
                beta += sign * math.radians(flex_deg[f, seg - 1])
            direction = np.array([math.sin(beta), -math.cos(beta), 0.0])
            point = point + template[4 * f + seg] * direction
            out[base + seg] = point
    return out


def _hand_animation(rng: np.random.Generator, side: str):
    """Seeded Lissajous wrist path and sinusoidal flexion schedules."""
    sign = 1.0 if side == "right" else -1.0
    center = np.array([sign * 0.10, 0.05, 0.50])
    amp = np.array([0.03, 0.03, 0.04])
    freq = rng.uniform(0.2, 0.5, size=3)
    phase = rng.uniform(0.0, 2 * math.pi, size=3)
    flex_freq = rng.uniform(0.3, 0.8, size=(5, 3))
    flex_phase = rng.uniform(0.0, 2 * math.pi, size=(5, 3))

    def wrist_at(t: float) -> np.ndarray:
        return center + amp * np.sin(2 * math.pi * freq * t + phase)

    def flex_at(t: float) -> np.ndarray:
        return _FLEX_CENTER_DEG + _FLEX_AMP_DEG * np.sin(
            2 * math.pi * flex_freq * t + flex_phase
        )

    return wrist_at, flex_at


def gen_hand_session(
    profile: MotionProfile,
    template: np.ndarray | None = None,
    seed: int = 0,
    hand_mode: str = "reach_cycle",
    sides: tuple[str, ...] = ("left", "right"),
    detection_rate: float = 1.0,
    center_depth_m: float = 0.5,
    intrinsics: CameraIntrinsics = SYNTH_INTRINSICS,
    session_id: str | None = None,
) -> tuple[SessionLog, list[HandTruth]]:
    """Full capture session (poses, depth, hands) with world-joint ground truth.

    Modes: ``reach_cycle`` animates the hands in the camera frame,
    ``static_world`` freezes them in the world frame in front of the first
    camera pose, ``static_camera`` freezes them in the camera frame. Depth
    maps carry the true camera-frame z at each projected joint pixel and are
    zero elsewhere. Raises JointBehindCameraError if any joint would fall at
    or below the depth floor.
    """
    if hand_mode not in HAND_MODES:
        raise ValueError(f"hand_mode must be one of {HAND_MODES}")
    template = DEFAULT_BONE_LENGTHS if template is None else np.asarray(template, dtype=float)
    if template.shape != (20,) or (template <= 0).any():
        raise ValueError("template must hold 20 positive bone lengths")

    camera = gen_trajectory(profile)
    rng = np.random.Generator(np.random.PCG64(seed))
    animations = {side: _hand_animation(rng, side) for side in sides}

    depth_shift = np.array([0.0, 0.0, center_depth_m - 0.5])
    frozen_world: dict[str, np.ndarray] = {}
    frozen_cam: dict[str, np.ndarray] = {}
    if hand_mode in ("static_world", "static_camera"):
        pose0 = camera.pose(0)
        for side in sides:
            wrist_at, flex_at = animations[side]
            joints_cam = (
                wrist_at(0.0)
                + depth_shift
                + _planar_hand_offsets(template, flex_at(0.0), side)
            )
            frozen_cam[side] = joints_cam
            frozen_world[side] = pose0.apply(joints_cam)

    times_s = camera.times_ns.astype(np.int64) * 1e-9
    depths: list[tuple[int, DepthMap]] = []
    hands: list[tuple[int, list[HandObservation]]] = []
    truths: list[HandTruth] = []

    for i in range(len(camera)):
        ts = int(camera.times_ns[i])
        t = float(times_s[i])
        pose = camera.pose(i)
        depth = np.zeros((intrinsics.height, intrinsics.width), dtype=np.float32)
        frame_entries = []

        for side in sides:
            if rng.random() >= detection_rate:
                continue
            if hand_mode == "reach_cycle":
                wrist_at, flex_at = animations[side]
                joints_cam = (
                    wrist_at(t) + depth_shift + _planar_hand_offsets(template, flex_at(t), side)
                )
                joints_world = pose.apply(joints_cam)
            elif hand_mode == "static_camera":
                joints_cam = frozen_cam[side]
                joints_world = pose.apply(joints_cam)
            else:  # static_world
                joints_world = frozen_world[side]
                joints_cam = pose.inverse().apply(joints_world)

            if (joints_cam[:, 2] <= DEPTH_FLOOR_M).any():
                raise JointBehindCameraError(
                    f"{side} hand joint at or behind the depth floor at t={t:.3f}s "
                    f"(profile {profile.kind!r}, mode {hand_mode!r})"
                )

            pixels = np.empty((HAND_JOINT_COUNT, 2))
            for j in range(HAND_JOINT_COUNT):
                pixels[j] = project(intrinsics, joints_cam[j])
                col = int(math.floor(pixels[j, 0] + 0.5))
                row = int(math.floor(pixels[j, 1] + 0.5))
                if 0 <= col < intrinsics.width and 0 <= row < intrinsics.height:
                    z = np.float32(joints_cam[j, 2])
                    if depth[row, col] == 0 or z < depth[row, col]:
                        depth[row, col] = z

            frame_entries.append((side, joints_cam, joints_world, pixels))

        depth_map = DepthMap(depth)
        observations = []
        for side, joints_cam, joints_world, pixels in sorted(frame_entries):
            recoverable = np.zeros(HAND_JOINT_COUNT, dtype=bool)
            for j in range(HAND_JOINT_COUNT):
                try:
                    z = sample_depth(depth_map, pixels[j, 0], pixels[j, 1])
                except OutOfBoundsError:
                    continue
                if z is not None and abs(z - joints_cam[j, 2]) < 1e-6:
                    recoverable[j] = True
            observations.append(
                HandObservation(
                    side=side,
                    confidence=float(rng.uniform(0.6, 0.95)),
                    pixels=pixels,
                    relative_xyz=joints_cam - joints_cam[0],
                )
            )
            truths.append(
                HandTruth(
                    ts_ns=ts,
                    side=side,
                    joints_world=joints_world,
                    recoverable=recoverable,
                )
            )
        depths.append((ts, depth_map))
        hands.append((ts, observations))

    imu = ImuStream(
        camera.times_ns.copy(), np.zeros((len(camera), 3)), np.zeros((len(camera), 3))
    )
    session = SessionLog(
        session_id=session_id or f"synth-hand-{profile.kind}-{seed}",
        intrinsics=intrinsics,
        poses=camera,
        depths=depths,
        hands=hands,
        imu=imu,
    )
    return session, truths


def perturb_hand_frames(frames, sigma_m: float, seed: int = 0):
    """Copy world-hand frames with Gaussian noise added to the valid joints."""
    from .types import WorldHandFrame

    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for f in frames:
        joints = f.joints.copy()
        noise = rng.normal(0.0, sigma_m, size=joints.shape)
        joints[f.valid] += noise[f.valid]
        out.append(
            WorldHandFrame(
                ts_ns=f.ts_ns,
                side=f.side,
                joints=joints,
                valid=f.valid.copy(),
                confidence=f.confidence,
            )
        )
    return out


# --- label corpora ----------------------------------------------------------------

_VERBS = ("pick up", "place", "transfer", "open", "close", "wipe", "fold", "stir", "pour")
_OBJECTS = ("bowl", "plate", "cup", "towel", "knife", "box", "jar", "pan", "cloth", "lid")
_MODIFIERS = ("red", "blue", "large", "small", "metal", "wooden", "plastic", "white")
_TARGETS = ("counter", "shelf", "table", "sink", "drawer", "rack")


def _span_text(rng: np.random.Generator) -> str:
    verb = _VERBS[rng.integers(len(_VERBS))]
    obj = _OBJECTS[rng.integers(len(_OBJECTS))]
    if rng.random() < 0.6:
        obj = f"{_MODIFIERS[rng.integers(len(_MODIFIERS))]} {obj}"
    if rng.random() < 0.5:
        return f"{verb} the {obj} onto the {_TARGETS[rng.integers(len(_TARGETS))]}"
    return f"{verb} the {obj}"


def gen_label_corpus(
    n: int, zero_duration: int = 0, overlaps: int = 0, seed: int = 0
) -> list[AtomicSpan]:
    """Span corpus whose defect profile matches the plan exactly.

    Injects `zero_duration` spans with end == start and `overlaps` consecutive
    pairs where the earlier span ends after the later starts; all injection
    sites are disjoint, so detect_defects reproduces the plan verbatim.
    """
    if n <= 0:
        raise InfeasiblePlanError("corpus must contain at least one span")
    if zero_duration > n:
        raise InfeasiblePlanError(f"cannot zero {zero_duration} of {n} spans")
    if overlaps > max(n - 1, 0):
        raise InfeasiblePlanError(f"only {n - 1} adjacent pairs exist for {overlaps} overlaps")

    rng = np.random.Generator(np.random.PCG64(seed))

    starts = np.empty(n, dtype=np.int64)
    ends = np.empty(n, dtype=np.int64)
    cursor = 0
    for i in range(n):
        duration = int(rng.uniform(3.0, 7.0) * 1e9)
        gap = int(rng.uniform(0.3, 2.0) * 1e9)
        starts[i] = cursor
        ends[i] = cursor + duration
        cursor = ends[i] + gap

    # Disjoint injection sites: an overlap at pair i touches spans i and i+1.
    pair_candidates = list(rng.permutation(max(n - 1, 0)))
    used = np.zeros(n, dtype=bool)
    overlap_sites = []
    for i in pair_candidates:
        if len(overlap_sites) == overlaps:
            break
        if not used[i] and not used[i + 1]:
            overlap_sites.append(int(i))
            used[i] = used[i + 1] = True
    if len(overlap_sites) < overlaps:
        raise InfeasiblePlanError("cannot place the requested overlaps on disjoint spans")

    zero_candidates = [int(i) for i in rng.permutation(n) if not used[i]]
    if len(zero_candidates) < zero_duration:
        raise InfeasiblePlanError("cannot place the requested zero-duration spans")
    zero_sites = zero_candidates[:zero_duration]

    for i in zero_sites:
        ends[i] = starts[i]
    for i in overlap_sites:
        # Pull the later span's start inside the earlier one, keeping order.
        shift = min(int(0.1e9), int((ends[i] - starts[i]) // 2))
        starts[i + 1] = ends[i] - max(shift, 1)

    spans = [
        AtomicSpan(id=i, start_ns=int(starts[i]), end_ns=int(ends[i]), text=_span_text(rng))
        for i in range(n)
    ]
    spans.sort(key=lambda s: (s.start_ns, s.id))
    return spans
