"""Ground-truth-free hand-pose consistency metrics.

Works on world-anchored 21-joint frames: bone-length constancy (coefficient
of variation), flexion-angle plausibility against configurable biomechanical
limits, wrist velocity/acceleration statistics, and detection-rate
accounting. Left and right hands are always reported separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import median_filter

from .errors import NoDataError
from .types import HAND_SIDES, WorldHandFrame

FINGERS = ("thumb", "index", "middle", "ring", "pinky")
JOINT_CLASSES = ("mcp", "pip", "dip")

WRIST = 0
BONE_COUNT = 20
ANGLE_COUNT = 15

# Wrist velocity smoothing before differentiation.
MEDIAN_FILTER_WINDOW = 5

# Hands below this confidence are excluded from metrics by default.
DEFAULT_CONFIDENCE_GATE = 0.3


def _default_bones() -> tuple[tuple[int, int], ...]:
    bones = []
    for f in range(5):
        base = 1 + 4 * f
        bones.append((WRIST, base))
        bones.extend(((base + k, base + k + 1) for k in range(3)))
    return tuple(bones)


@dataclass(frozen=True)
class HandSkeleton:
    """21-joint hand: wrist at 0, then MCP/PIP/DIP/TIP per finger.

    Joint indices: thumb 1-4, index 5-8, middle 9-12, ring 13-16, pinky
    17-20. Exactly 20 parent->child bones rooted at the wrist.
    """

    bones: tuple[tuple[int, int], ...] = field(default_factory=_default_bones)

    def __post_init__(self):
        if len(self.bones) != BONE_COUNT:
            raise ValueError(f"skeleton must have {BONE_COUNT} bones")
        children = [c for _, c in self.bones]
        if sorted(children) != list(range(1, 21)):
            raise ValueError("every non-wrist joint must have exactly one parent")

    def angle_triplets(self) -> tuple[tuple[str, str, int, int, int], ...]:
        """(finger, class, parent, joint, child) for the 15 flexion angles.

        The MCP angle uses the wrist as the parent joint.
        """
        out = []
        for f, finger in enumerate(FINGERS):
            base = 1 + 4 * f
            out.append((finger, "mcp", WRIST, base, base + 1))
            out.append((finger, "pip", base, base + 1, base + 2))
            out.append((finger, "dip", base + 1, base + 2, base + 3))
        return tuple(out)


MANO_SKELETON = HandSkeleton()


@dataclass(frozen=True)
class JointLimits:
    """Per-finger flexion limits in degrees, keyed (finger, joint class)."""

    limits: dict[tuple[str, str], tuple[float, float]]

    def __post_init__(self):
        expected = {(f, c) for f in FINGERS for c in JOINT_CLASSES}
        if set(self.limits) != expected:
            raise ValueError("limits must cover all 15 (finger, class) pairs")
        for key, (lo, hi) in self.limits.items():
            if not lo < hi:
                raise ValueError(f"limit for {key} must have min < max")

    @staticmethod
    def default() -> "JointLimits":
        raw = json.loads(
            resources.files("stera.data").joinpath("joint_limits.json").read_text()
        )
        return JointLimits.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "JointLimits":
        limits = {}
        for finger, classes in raw.items():
            for cls, pair in classes.items():
                limits[(finger, cls)] = (float(pair[0]), float(pair[1]))
        return JointLimits(limits)

    @staticmethod
    def from_json(path: str | Path) -> "JointLimits":
        return JointLimits.from_dict(json.loads(Path(path).read_text()))


def bone_lengths(frame: WorldHandFrame, skel: HandSkeleton = MANO_SKELETON) -> np.ndarray:
    """(20,) parent->child distances in skeleton order; NaN where an endpoint
    joint is invalid."""
    out = np.full(BONE_COUNT, np.nan)
    for b, (parent, child) in enumerate(skel.bones):
        if frame.valid[parent] and frame.valid[child]:
            out[b] = np.linalg.norm(frame.joints[child] - frame.joints[parent])
    return out


@dataclass(frozen=True)
class BoneCvStats:
    per_bone_cv: np.ndarray  # (20,) percent, NaN for bones with < 2 samples
    median_cv: float  # percent, over bones with data
    n_frames: int

    def to_dict(self) -> dict:
        return {
            "per_bone_cv_pct": [None if np.isnan(v) else float(v) for v in self.per_bone_cv],
            "median_cv_pct": self.median_cv,
            "n_frames": self.n_frames,
        }


def bone_cv(
    frames: list[WorldHandFrame], skel: HandSkeleton = MANO_SKELETON
) -> dict[str, BoneCvStats]:
    """Per-bone coefficient of variation, per side.

    CV_b = 100 * sample std / mean of bone b's lengths across frames; bones
    with fewer than two measurements are excluded. Raises NoDataError when no
    bone on any side has two measurements.
    """
    results: dict[str, BoneCvStats] = {}
    for side in HAND_SIDES:
        side_frames = [f for f in frames if f.side == side]
        if not side_frames:
            continue
        lengths = np.stack([bone_lengths(f, skel) for f in side_frames])
        per_bone = np.full(BONE_COUNT, np.nan)
        for b in range(BONE_COUNT):
            samples = lengths[:, b]
            samples = samples[~np.isnan(samples)]
            if samples.size < 2:
                continue
            mean = samples.mean()
            if mean <= 0:
                continue
            per_bone[b] = 100.0 * samples.std(ddof=1) / mean
        if np.isnan(per_bone).all():
            continue
        results[side] = BoneCvStats(
            per_bone_cv=per_bone,
            median_cv=float(np.nanmedian(per_bone)),
            n_frames=len(side_frames),
        )
    if not results:
        raise NoDataError("no bone has two or more valid measurements")
    return results


def flexion_angles(frame: WorldHandFrame, skel: HandSkeleton = MANO_SKELETON) -> np.ndarray:
    """(15,) flexion angles in degrees, finger-major (mcp, pip, dip each).

    The flexion at joint J is the angle between the incoming bone
    (parent -> J) and the outgoing bone (J -> child); a straight chain reads
    0 degrees. NaN where any of the three joints is invalid.
    """
    out = np.full(ANGLE_COUNT, np.nan)
    for i, (_, _, parent, joint, child) in enumerate(skel.angle_triplets()):
        if not (frame.valid[parent] and frame.valid[joint] and frame.valid[child]):
            continue
        v_in = frame.joints[joint] - frame.joints[parent]
        v_out = frame.joints[child] - frame.joints[joint]
        n1, n2 = np.linalg.norm(v_in), np.linalg.norm(v_out)
        if n1 == 0 or n2 == 0:
            continue
        cosang = np.clip(v_in @ v_out / (n1 * n2), -1.0, 1.0)
        out[i] = np.degrees(np.arccos(cosang))
    return out


@dataclass(frozen=True)
class LimitReport:
    per_angle_fraction: np.ndarray  # (15,), NaN where an angle has no samples
    pooled_fraction: float
    n_angles: int  # total measured angles pooled

    def to_dict(self) -> dict:
        return {
            "per_angle_within_limits": [
                None if np.isnan(v) else float(v) for v in self.per_angle_fraction
            ],
            "pooled_within_limits": self.pooled_fraction,
            "n_angles": self.n_angles,
        }


def joint_limit_report(
    frames: list[WorldHandFrame],
    skel: HandSkeleton = MANO_SKELETON,
    limits: JointLimits | None = None,
) -> LimitReport:
    """Fraction of measured flexion angles inside the configured limits."""
    limits = limits or JointLimits.default()
    triplets = skel.angle_triplets()
    bounds = np.array([limits.limits[(f, c)] for f, c, _, _, _ in triplets])
    if frames:
        angles = np.stack([flexion_angles(f, skel) for f in frames])
    else:
        angles = np.full((0, ANGLE_COUNT), np.nan)

    measured = ~np.isnan(angles)
    within = (angles >= bounds[:, 0]) & (angles <= bounds[:, 1]) & measured
    per_angle = np.full(ANGLE_COUNT, np.nan)
    counts = measured.sum(axis=0)
    nonzero = counts > 0
    per_angle[nonzero] = within.sum(axis=0)[nonzero] / counts[nonzero]
    total = int(measured.sum())
    pooled = float(within.sum() / total) if total else float("nan")
    return LimitReport(per_angle_fraction=per_angle, pooled_fraction=pooled, n_angles=total)


@dataclass(frozen=True)
class WristDynamics:
    median_velocity: float  # m/s
    p90_velocity: float
    p99_velocity: float
    median_accel: float  # m/s^2
    p90_accel: float
    p99_accel: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "median_velocity_mps": self.median_velocity,
            "p90_velocity_mps": self.p90_velocity,
            "p99_velocity_mps": self.p99_velocity,
            "median_accel_mps2": self.median_accel,
            "p90_accel_mps2": self.p90_accel,
            "p99_accel_mps2": self.p99_accel,
            "n_samples": self.n_samples,
        }


def wrist_dynamics(frames: list[WorldHandFrame]) -> dict[str, WristDynamics]:
    """Wrist speed and acceleration statistics per side.

    Wrist positions are median-filtered (window 5) before differentiation;
    velocity and acceleration come from central differences over the actual
    timestamps. Raises NoDataError unless some side has >= 3 valid wrist
    samples.
    """
    results: dict[str, WristDynamics] = {}
    for side in HAND_SIDES:
        samples = [
            (f.ts_ns, f.joints[WRIST])
            for f in frames
            if f.side == side and f.valid[WRIST]
        ]
        if len(samples) < 3:
            continue
        samples.sort(key=lambda item: item[0])
        t = np.array([ts for ts, _ in samples], dtype=np.int64) * 1e-9
        pos = np.stack([p for _, p in samples])
        pos = median_filter(pos, size=(MEDIAN_FILTER_WINDOW, 1), mode="nearest")
        vel = np.gradient(pos, t, axis=0)
        acc = np.gradient(vel, t, axis=0)
        speed = np.linalg.norm(vel, axis=1)
        accel = np.linalg.norm(acc, axis=1)
        results[side] = WristDynamics(
            median_velocity=float(np.median(speed)),
            p90_velocity=float(np.percentile(speed, 90)),
            p99_velocity=float(np.percentile(speed, 99)),
            median_accel=float(np.median(accel)),
            p90_accel=float(np.percentile(accel, 90)),
            p99_accel=float(np.percentile(accel, 99)),
            n_samples=len(samples),
        )
    if not results:
        raise NoDataError("no side has 3 or more valid wrist samples")
    return results


@dataclass(frozen=True)
class DiscardCounts:
    low_confidence_hands: int
    invalid_joints: int  # joints flagged invalid by the depth-floor rule
    fully_invalid_frames: int  # frames with all 21 joints invalid

    def to_dict(self) -> dict:
        return {
            "low_confidence_hands": self.low_confidence_hands,
            "invalid_joints": self.invalid_joints,
            "fully_invalid_frames": self.fully_invalid_frames,
        }


def filter_frames(
    frames: list[WorldHandFrame], conf_min: float = DEFAULT_CONFIDENCE_GATE
) -> tuple[list[WorldHandFrame], DiscardCounts]:
    """Drop hands below the confidence gate; count depth-rule casualties."""
    kept = [f for f in frames if f.confidence >= conf_min]
    counts = DiscardCounts(
        low_confidence_hands=len(frames) - len(kept),
        invalid_joints=int(sum((~f.valid).sum() for f in frames)),
        fully_invalid_frames=int(sum(1 for f in frames if not f.valid.any())),
    )
    return kept, counts


@dataclass(frozen=True)
class SideReport:
    bone_cv: BoneCvStats | None
    limit_report: LimitReport | None
    wrist: WristDynamics | None
    detection_rate: float
    mean_confidence: float | None

    def to_dict(self) -> dict:
        return {
            "bone_cv": self.bone_cv.to_dict() if self.bone_cv else None,
            "joint_limits": self.limit_report.to_dict() if self.limit_report else None,
            "wrist_dynamics": self.wrist.to_dict() if self.wrist else None,
            "detection_rate": self.detection_rate,
            "mean_confidence": self.mean_confidence,
        }


@dataclass(frozen=True)
class KinematicsReport:
    sides: dict[str, SideReport]
    discards: DiscardCounts
    n_frames_total: int

    def to_dict(self) -> dict:
        return {
            "sides": {side: report.to_dict() for side, report in sorted(self.sides.items())},
            "discards": self.discards.to_dict(),
            "n_frames_total": self.n_frames_total,
        }


def kinematics_report(
    frames: list[WorldHandFrame],
    skel: HandSkeleton = MANO_SKELETON,
    limits: JointLimits | None = None,
    conf_min: float = DEFAULT_CONFIDENCE_GATE,
    total_frames: int | None = None,
) -> KinematicsReport:
    """Full per-side consistency report over anchored hand frames.

    `total_frames` is the number of capture frames the detector ran on; it
    defaults to the number of distinct timestamps seen, which understates the
    denominator when detection missed entire frames.
    """
    limits = limits or JointLimits.default()
    kept, discards = filter_frames(frames, conf_min)
    if total_frames is None:
        total_frames = len({f.ts_ns for f in frames})

    sides: dict[str, SideReport] = {}
    for side in HAND_SIDES:
        side_frames = [f for f in kept if f.side == side]
        detected = len({f.ts_ns for f in frames if f.side == side})
        if not side_frames:
            if detected:
                sides[side] = SideReport(
                    bone_cv=None,
                    limit_report=None,
                    wrist=None,
                    detection_rate=detected / total_frames if total_frames else 0.0,
                    mean_confidence=None,
                )
            continue
        try:
            cv = bone_cv(side_frames, skel).get(side)
        except NoDataError:
            cv = None
        try:
            wrists = wrist_dynamics(side_frames).get(side)
        except NoDataError:
            wrists = None
        sides[side] = SideReport(
            bone_cv=cv,
            limit_report=joint_limit_report(side_frames, skel, limits),
            wrist=wrists,
            detection_rate=detected / total_frames if total_frames else 0.0,
            mean_confidence=float(np.mean([f.confidence for f in side_frames])),
        )
    return KinematicsReport(sides=sides, discards=discards, n_frames_total=total_frames)
