"""Trajectory accuracy and drift metrics: rigid alignment, ATE, RPE, marker
revisit drift, and the data-scaling loss curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientOverlapError,
    NonPositiveHoursError,
    NoRevisitError,
)
from .geometry import DEFAULT_ASSOC_TOL_NS, associate, transform_point
from .rotations import matrix_to_quat, quat_rotation_angle
from .types import Pose, SessionLog, Trajectory


@dataclass(frozen=True)
class TrajectoryMetrics:
    """Accuracy summary of an estimated trajectory against ground truth."""

    ate_rmse: float  # meters
    rel_ate: float  # percent of ground-truth path length
    rpe_trans: float  # meters, RMSE
    rpe_rot: float  # degrees, RMSE
    n_pairs: int
    traj_length: float  # meters, ground-truth path length

    def to_dict(self) -> dict:
        return {
            "ate_rmse_m": self.ate_rmse,
            "rel_ate_pct": self.rel_ate,
            "rpe_trans_m": self.rpe_trans,
            "rpe_rot_deg": self.rpe_rot,
            "n_pairs": self.n_pairs,
            "traj_length_m": self.traj_length,
        }


@dataclass(frozen=True)
class DriftEntry:
    marker_id: int
    t_reference_ns: int
    t_revisit_ns: int
    drift_m: float
    drift_pct: float  # percent of path length traversed between the sightings

    def to_dict(self) -> dict:
        return {
            "marker_id": self.marker_id,
            "t_reference_ns": self.t_reference_ns,
            "t_revisit_ns": self.t_revisit_ns,
            "drift_m": self.drift_m,
            "drift_pct": self.drift_pct,
        }


@dataclass(frozen=True)
class DriftReport:
    entries: tuple[DriftEntry, ...]

    def max_drift_m(self) -> float:
        return max(e.drift_m for e in self.entries)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}


def trajectory_length(traj: Trajectory) -> float:
    """Path length: sum of consecutive translation deltas."""
    if len(traj) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(traj.positions, axis=0), axis=1).sum())


def umeyama_align(est: np.ndarray, gt: np.ndarray) -> Pose:
    """Least-squares rigid transform T with T(est_i) ≈ gt_i (no scale).

    Rotation comes from the SVD of the centered cross-covariance with the
    determinant correction, translation from the centroids.
    """
    est = np.asarray(est, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    if est.shape != gt.shape:
        raise DegenerateInputError("point sets must have equal shapes")
    n = est.shape[0]
    if n < 3:
        raise DegenerateInputError(f"need at least 3 points, got {n}")

    mu_est = est.mean(axis=0)
    mu_gt = gt.mean(axis=0)
    cov = (gt - mu_gt).T @ (est - mu_est) / n
    if not np.isfinite(cov).all() or np.linalg.norm(cov) < 1e-15:
        raise DegenerateInputError("cross-covariance is degenerate")

    U, _, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return Pose(mu_gt - R @ mu_est, matrix_to_quat(R))


def _associated_indices(
    est: Trajectory, gt: Trajectory, tol_ns: int
) -> list[tuple[int, int]]:
    return associate(est.times_ns, gt.times_ns, tol_ns)


def ate(
    est: Trajectory, gt: Trajectory, tol_ns: int = DEFAULT_ASSOC_TOL_NS
) -> tuple[float, float]:
    """Absolute trajectory error after rigid alignment.

    Returns (ate_rmse meters, relative ATE as percent of the ground-truth
    path length).
    """
    pairs = _associated_indices(est, gt, tol_ns)
    if len(pairs) < 3:
        raise InsufficientOverlapError(
            f"only {len(pairs)} associated pose pairs; need at least 3"
        )
    est_pts = est.positions[[ie for ie, _ in pairs]]
    gt_pts = gt.positions[[ig for _, ig in pairs]]
    T = umeyama_align(est_pts, gt_pts)
    residuals = np.linalg.norm(T.apply(est_pts) - gt_pts, axis=1)
    rmse = float(np.sqrt(np.mean(residuals**2)))
    length = trajectory_length(gt)
    rel = 100.0 * rmse / length if length > 0 else 0.0
    return rmse, rel


def rpe(
    est: Trajectory,
    gt: Trajectory,
    delta_s: float = 1.0,
    tol_ns: int = DEFAULT_ASSOC_TOL_NS,
) -> tuple[float, float]:
    """Relative pose error over a fixed time interval.

    For every associated pose pair (P_i, Q_i) with a second pair delta
    seconds later, the residual motion E_i = (Q_i^-1 Q_j)^-1 (P_i^-1 P_j) is
    accumulated; returns the RMSE of its translation norm in meters and of
    its rotation angle in degrees.
    """
    if est.duration_s() < delta_s or gt.duration_s() < delta_s:
        raise InsufficientOverlapError("trajectories shorter than the RPE interval")
    pairs = _associated_indices(est, gt, tol_ns)
    if not pairs:
        raise InsufficientOverlapError("no associated pose pairs")

    delta_ns = int(round(delta_s * 1e9))
    matched_times = np.array([int(est.times_ns[ie]) for ie, _ in pairs], dtype=np.int64)

    trans_sq: list[float] = []
    rot_sq: list[float] = []
    for k, (ie_i, ig_i) in enumerate(pairs):
        target = matched_times[k] + delta_ns
        m = int(np.searchsorted(matched_times, target))
        best, best_dt = None, tol_ns + 1
        for cand in (m - 1, m):
            if 0 <= cand < len(pairs):
                dt = abs(int(matched_times[cand]) - target)
                if dt < best_dt:
                    best, best_dt = cand, dt
        if best is None or best == k:
            continue
        ie_j, ig_j = pairs[best]
        p_rel = est.pose(ie_i).inverse().compose(est.pose(ie_j))
        q_rel = gt.pose(ig_i).inverse().compose(gt.pose(ig_j))
        err = q_rel.inverse().compose(p_rel)
        trans_sq.append(float(err.translation @ err.translation))
        rot_sq.append(math.degrees(quat_rotation_angle(err.rotation)) ** 2)

    if not trans_sq:
        raise InsufficientOverlapError("no pose pairs separated by the RPE interval")
    return float(np.sqrt(np.mean(trans_sq))), float(np.sqrt(np.mean(rot_sq)))


def evaluate_trajectory(
    est: Trajectory,
    gt: Trajectory,
    tol_ns: int = DEFAULT_ASSOC_TOL_NS,
    rpe_delta_s: float = 1.0,
) -> TrajectoryMetrics:
    """ATE and RPE in one report."""
    pairs = _associated_indices(est, gt, tol_ns)
    ate_rmse, rel = ate(est, gt, tol_ns)
    rpe_trans, rpe_rot = rpe(est, gt, rpe_delta_s, tol_ns)
    return TrajectoryMetrics(
        ate_rmse=ate_rmse,
        rel_ate=rel,
        rpe_trans=rpe_trans,
        rpe_rot=rpe_rot,
        n_pairs=len(pairs),
        traj_length=trajectory_length(gt),
    )


def marker_drift(
    session: SessionLog, tol_ns: int = DEFAULT_ASSOC_TOL_NS
) -> DriftReport:
    """Apparent displacement of each static marker between revisits.

    Every sighting is anchored through the nearest pose; the first sighting
    of a marker id is the reference and each later one contributes a drift
    entry. The percent figure is drift over the pose-stream path length
    traversed between the two sightings (NaN for a zero-length path).
    """
    if len(session.poses) == 0:
        raise NoRevisitError("session has no pose stream")
    if not session.markers:
        raise NoRevisitError("session has no marker sightings")

    marker_times = np.array([m.ts_ns for m in session.markers], dtype=np.uint64)
    pose_for_sighting = dict(associate(marker_times, session.poses.times_ns, tol_ns))

    seg = np.linalg.norm(np.diff(session.poses.positions, axis=0), axis=1)
    cum_length = np.concatenate(([0.0], np.cumsum(seg)))

    anchored: dict[int, list[tuple[int, np.ndarray, float]]] = {}
    for idx, sighting in enumerate(session.markers):
        pose_idx = pose_for_sighting.get(idx)
        if pose_idx is None:
            continue
        world = transform_point(session.poses.pose(pose_idx), sighting.p_cam)
        anchored.setdefault(sighting.marker_id, []).append(
            (int(sighting.ts_ns), world, float(cum_length[pose_idx]))
        )

    entries: list[DriftEntry] = []
    for marker_id in sorted(anchored):
        sightings = anchored[marker_id]
        if len(sightings) < 2:
            continue
        t0, w0, s0 = sightings[0]
        for t, w, s in sightings[1:]:
            drift = float(np.linalg.norm(w - w0))
            path = s - s0
            pct = 100.0 * drift / path if path > 0 else float("nan")
            entries.append(
                DriftEntry(
                    marker_id=marker_id,
                    t_reference_ns=t0,
                    t_revisit_ns=t,
                    drift_m=drift,
                    drift_pct=pct,
                )
            )
    if not entries:
        raise NoRevisitError("no marker was sighted more than once")
    return DriftReport(entries=tuple(entries))


def scaling_law_loss(hours: float) -> float:
    """Validation-loss estimate for a given volume of data in hours."""
    if not hours > 0:
        raise NonPositiveHoursError(f"hours must be positive, got {hours}")
    return 0.024 - 0.003 * math.log(hours)
