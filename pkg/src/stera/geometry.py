"""SE(3) transforms, pinhole camera math, timestamp association, hand anchoring.

Absolute hand positions come exclusively from depth + camera pose; the
estimator-local 3D coordinates are kept only for kinematic shape.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidDepthError, MissingStreamError, OutOfBoundsError
from .types import (
    HAND_JOINT_COUNT,
    CameraIntrinsics,
    DepthMap,
    Pose,
    SessionLog,
    WorldHandFrame,
)

# Depth returns at or below this are treated as invalid (discard rule).
DEPTH_FLOOR_M = 0.01

# Default pairing tolerance: about half a 30 Hz frame interval.
DEFAULT_ASSOC_TOL_NS = 20_000_000


def transform_point(pose: Pose, point: np.ndarray) -> np.ndarray:
    """Map a camera-frame point (or (N,3) stack) into the world frame."""
    return pose.apply(point)


def project(intr: CameraIntrinsics, p_cam: np.ndarray) -> tuple[float, float]:
    """Forward pinhole map of a camera-frame point to pixel coordinates."""
    p = np.asarray(p_cam, dtype=float)
    z = float(p[2])
    if z <= 0.0:
        raise InvalidDepthError("cannot project a point at or behind the camera")
    return float(intr.fx * p[0] / z + intr.cx), float(intr.fy * p[1] / z + intr.cy)


def unproject(intr: CameraIntrinsics, u: float, v: float, z: float) -> np.ndarray:
    """Back-project pixel (u, v) at depth z meters into the camera frame."""
    if z <= DEPTH_FLOOR_M:
        raise InvalidDepthError(f"depth {z} m at or below the {DEPTH_FLOOR_M} m floor")
    return np.array([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z])


def _nearest_pixel(u: float, v: float) -> tuple[int, int]:
    # floor(x + 0.5) rather than banker's rounding, so .5 always rounds up
    return int(math.floor(u + 0.5)), int(math.floor(v + 0.5))


def sample_depth(depth: DepthMap, u: float, v: float) -> float | None:
    """Median of the valid (> 0) depths in the 3x3 window around (u, v).

    The window is clipped to the image; a lone valid pixel counts. Returns
    None when the window holds no valid return. Raises OutOfBoundsError when
    the rounded center lies outside the image.
    """
    col, row = _nearest_pixel(u, v)
    if not (0 <= col < depth.width and 0 <= row < depth.height):
        raise OutOfBoundsError(f"pixel ({u}, {v}) outside {depth.width}x{depth.height} image")
    window = depth.data[
        max(row - 1, 0) : min(row + 2, depth.height),
        max(col - 1, 0) : min(col + 2, depth.width),
    ]
    valid = window[window > 0]
    if valid.size == 0:
        return None
    return float(np.median(valid))


def associate(
    a_times: np.ndarray, b_times: np.ndarray, tol_ns: int = DEFAULT_ASSOC_TOL_NS
) -> list[tuple[int, int]]:
    """Greedy nearest-neighbor one-to-one matching of two sorted stamp lists.

    Candidate pairs within tolerance are taken in order of increasing time
    difference (ties broken on the symmetric key (earlier, later stamp)), so
    the matching — and in particular its size — does not depend on which list
    comes first. Pairs are returned sorted by time.
    """
    a = np.asarray(a_times, dtype=np.int64)
    b = np.asarray(b_times, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return []

    candidates: list[tuple[int, int, int, int, int]] = []
    start = 0
    for ia, ta in enumerate(a):
        while start < b.size and b[start] < ta - tol_ns:
            start += 1
        ib = start
        while ib < b.size and b[ib] <= ta + tol_ns:
            tb = b[ib]
            dt = int(abs(ta - tb))
            candidates.append((dt, int(min(ta, tb)), int(max(ta, tb)), ia, ib))
            ib += 1
    candidates.sort()

    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _, _, _, ia, ib in candidates:
        if ia in used_a or ib in used_b:
            continue
        used_a.add(ia)
        used_b.add(ib)
        pairs.append((ia, ib))
    pairs.sort(key=lambda p: (int(a[p[0]]), p[0]))
    return pairs


def anchor_hands(
    session: SessionLog, tol_ns: int = DEFAULT_ASSOC_TOL_NS
) -> list[WorldHandFrame]:
    """Anchor every hand detection into the world frame.

    Each hand-frame timestamp is paired with the nearest pose and depth map
    within tolerance; every joint is back-projected through its sampled depth
    and pushed through the camera pose. Joints without a valid depth return,
    at or below the depth floor, outside the image, or on frames with no
    associated pose/depth are flagged invalid (NaN position).
    """
    if len(session.poses) == 0:
        raise MissingStreamError("session has no pose stream")
    if not session.depths:
        raise MissingStreamError("session has no depth stream")

    hand_times = np.array([ts for ts, _ in session.hands], dtype=np.uint64)
    depth_times = np.array([ts for ts, _ in session.depths], dtype=np.uint64)
    pose_for_hand = dict(associate(hand_times, session.poses.times_ns, tol_ns))
    depth_for_hand = dict(associate(hand_times, depth_times, tol_ns))

    intr = session.intrinsics
    frames: list[WorldHandFrame] = []
    for idx, (ts, observations) in enumerate(session.hands):
        pose_idx = pose_for_hand.get(idx)
        depth_idx = depth_for_hand.get(idx)
        associated = pose_idx is not None and depth_idx is not None
        if associated:
            pose = session.poses.pose(pose_idx)
            depth = session.depths[depth_idx][1]
        for obs in observations:
            joints = np.full((HAND_JOINT_COUNT, 3), np.nan)
            valid = np.zeros(HAND_JOINT_COUNT, dtype=bool)
            if associated:
                for j in range(HAND_JOINT_COUNT):
                    u, v = obs.pixels[j]
                    try:
                        z = sample_depth(depth, u, v)
                    except OutOfBoundsError:
                        continue
                    if z is None or z <= DEPTH_FLOOR_M:
                        continue
                    joints[j] = pose.apply(unproject(intr, u, v, z))
                    valid[j] = True
            frames.append(
                WorldHandFrame(
                    ts_ns=int(ts),
                    side=obs.side,
                    joints=joints,
                    valid=valid,
                    confidence=obs.confidence,
                )
            )
    frames.sort(key=lambda f: (f.ts_ns, f.side))
    return frames
