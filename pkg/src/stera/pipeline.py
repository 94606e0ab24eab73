"""Batch orchestration: ingestion, anchoring, QA metrics, and training export.

Sessions are processed independently (the concurrency unit is the session);
reports are assembled by a single deterministic reducer, so summaries and
exports are byte-identical for any worker count. Per-session failures are
recorded in the summary without aborting the rest of the corpus.

Sidecar conventions for an input log ``X.mcap``:

* ``X.spans.jsonl`` — atomic spans; enables label QA and tree building;
* ``X.tree.json`` — a pre-built instruction tree to validate (otherwise one
  is built: via the configured external endpoint when set, else gap-based);
* ``X.gt.mcap`` — a log whose pose stream is ground truth for ATE/RPE.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, hierarchy, labels, log_format, traj_metrics
from .errors import (
    InsufficientOverlapError,
    InvalidTreeError,
    MissingStreamError,
    NoRevisitError,
    SteraError,
)
from .hand_kinematics import DEFAULT_CONFIDENCE_GATE, JointLimits, kinematics_report
from .types import SessionLog, WorldHandFrame


@dataclass
class PipelineConfig:
    inputs: list[str]
    out_dir: str
    workers: int = 1
    assoc_tol_ns: int = geometry.DEFAULT_ASSOC_TOL_NS
    rpe_delta_s: float = 1.0
    conf_min: float = DEFAULT_CONFIDENCE_GATE
    joint_limits_path: str | None = None
    lexicon_path: str | None = None
    episode_gap_s: float = 10.0
    subgoal_gap_s: float = 120.0
    endpoint_url: str | None = None
    endpoint_token: str | None = None
    endpoint_timeout_s: float = 30.0
    max_retries: int = 2
    strict_labels: bool = False  # label defects fail the run instead of warning
    export: bool = True

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if not self.inputs:
            raise ValueError("pipeline needs at least one input")

    @staticmethod
    def from_json(path: str | Path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text())
        return PipelineConfig(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    exit_code: int
    summary: dict
    summary_path: Path
    report_paths: list[Path] = field(default_factory=list)


def _jsonify(value):
    """JSON-safe deep copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonify(obj), sort_keys=True, indent=2) + "\n")


def _json_line(obj) -> str:
    return json.dumps(_jsonify(obj), sort_keys=True, separators=(",", ":"))


# --- training export ------------------------------------------------------------


def _hand_row(frame: WorldHandFrame) -> dict:
    return {
        "joints": [
            [float(x) for x in joint] if valid else None
            for joint, valid in zip(frame.joints, frame.valid)
        ],
        "valid": [bool(v) for v in frame.valid],
        "conf": frame.confidence,
    }


def export_training_set(
    session: SessionLog,
    tree: hierarchy.InstructionTree,
    spans: list[labels.AtomicSpan],
    frames: list[WorldHandFrame],
    out_dir: str | Path,
    assoc_tol_ns: int = geometry.DEFAULT_ASSOC_TOL_NS,
) -> dict:
    """Write the training-ready layout and return its content-hash manifest.

    Layout: ``meta.json``, ``hierarchy.json``, and ``episodes/<id>.jsonl``
    where the first line of each episode file is its instruction header and
    each following line is one frame row (timestamp, camera pose, left/right
    world joints with validity, covering span id). Frames outside every
    episode interval are excluded. Raises InvalidTreeError unless the tree
    validates against the spans.
    """
    violations = hierarchy.validate_tree(tree, spans)
    if violations:
        raise InvalidTreeError(violations)

    out_dir = Path(out_dir)
    (out_dir / "episodes").mkdir(parents=True, exist_ok=True)
    by_id = {s.id: s for s in spans}

    _dump_json(
        {
            "session_id": session.session_id,
            "intrinsics": {
                "fx": session.intrinsics.fx,
                "fy": session.intrinsics.fy,
                "cx": session.intrinsics.cx,
                "cy": session.intrinsics.cy,
                "w": session.intrinsics.width,
                "h": session.intrinsics.height,
            },
            "streams": {
                "poses": len(session.poses),
                "depth": len(session.depths),
                "hands": len(session.hands),
                "imu": len(session.imu),
                "markers": len(session.markers),
            },
        },
        out_dir / "meta.json",
    )
    _dump_json(hierarchy.tree_to_dict(tree), out_dir / "hierarchy.json")

    # One row per (timestamp) with both hands folded in.
    by_ts: dict[int, dict[str, WorldHandFrame]] = {}
    for frame in frames:
        by_ts.setdefault(frame.ts_ns, {})[frame.side] = frame
    row_times = sorted(by_ts)
    times_arr = np.array(row_times, dtype=np.uint64)
    pose_index = dict(geometry.associate(times_arr, session.poses.times_ns, assoc_tol_ns))

    goal = tree.goal
    for sub_goal in tree.sub_goals:
        for episode in sub_goal.episodes:
            path = out_dir / "episodes" / f"{episode.id}.jsonl"
            members = sorted(
                (by_id[i] for i in episode.span_ids if i in by_id),
                key=lambda s: (s.start_ns, s.id),
            )
            lines = [
                _json_line(
                    {
                        "episode_id": episode.id,
                        "goal": goal,
                        "sub_goal": sub_goal.description,
                        "instruction": episode.description,
                        "start_ns": episode.start_ns,
                        "end_ns": episode.end_ns,
                        "span_ids": list(episode.span_ids),
                    }
                )
            ]
            for row_idx, ts in enumerate(row_times):
                if not episode.start_ns <= ts <= episode.end_ns:
                    continue
                span_id = next(
                    (s.id for s in members if s.start_ns <= ts <= s.end_ns), None
                )
                pose_i = pose_index.get(row_idx)
                pose = (
                    {
                        "t": session.poses.positions[pose_i].tolist(),
                        "q": session.poses.quaternions[pose_i].tolist(),
                    }
                    if pose_i is not None
                    else None
                )
                hands = by_ts[ts]
                lines.append(
                    _json_line(
                        {
                            "ts": int(ts),
                            "pose": pose,
                            "left": _hand_row(hands["left"]) if "left" in hands else None,
                            "right": _hand_row(hands["right"]) if "right" in hands else None,
                            "span_id": span_id,
                        }
                    )
                )
            path.write_text("\n".join(lines) + "\n")

    files = sorted(
        p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json"
    )
    manifest = {
        "files": [
            {
                "path": str(p.relative_to(out_dir)),
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                "size": p.stat().st_size,
            }
            for p in files
        ]
    }
    _dump_json(manifest, out_dir / "manifest.json")
    return manifest


# --- per-session processing -------------------------------------------------------


def _anchor_summary(frames: list[WorldHandFrame]) -> dict:
    total = sum(f.valid.size for f in frames)
    valid = int(sum(f.valid.sum() for f in frames))
    return {
        "n_hand_frames": len(frames),
        "n_joints": total,
        "valid_joint_fraction": valid / total if total else None,
    }


def process_session(config: PipelineConfig, input_path: str) -> dict:
    """Run the full per-session flow; never raises for per-session data errors."""
    path = Path(input_path)
    report: dict = {"input": path.name, "ok": True, "error": None}
    limits = (
        JointLimits.from_json(config.joint_limits_path)
        if config.joint_limits_path
        else JointLimits.default()
    )
    lexicon = (
        labels.ModifierLexicon.from_json(config.lexicon_path)
        if config.lexicon_path
        else labels.ModifierLexicon.default()
    )

    try:
        session = log_format.read_session(path)
        report["session_id"] = session.session_id
        report["skipped_messages"] = session.skipped_messages
        report["streams"] = {
            "poses": len(session.poses),
            "depth": len(session.depths),
            "hands": len(session.hands),
            "imu": len(session.imu),
            "markers": len(session.markers),
        }

        frames: list[WorldHandFrame] = []
        if session.hands:
            try:
                frames = geometry.anchor_hands(session, config.assoc_tol_ns)
                report["anchoring"] = _anchor_summary(frames)
                report["kinematics"] = kinematics_report(
                    frames,
                    limits=limits,
                    conf_min=config.conf_min,
                    total_frames=len(session.hands),
                ).to_dict()
            except MissingStreamError as exc:
                report["anchoring"] = {"skipped": str(exc)}

        spans_path = path.with_name(path.stem + ".spans.jsonl")
        spans: list[labels.AtomicSpan] = []
        if spans_path.exists():
            spans = labels.load_spans_jsonl(spans_path)
            quality = labels.label_stats(spans, lexicon)
            defects = labels.detect_defects(spans)
            report["labels"] = {
                "stats": quality.to_dict(),
                "defects": [d.to_dict() for d in defects],
            }

        tree = None
        if spans:
            tree_path = path.with_name(path.stem + ".tree.json")
            if tree_path.exists():
                tree = hierarchy.load_tree(tree_path)
                source = "sidecar"
            elif config.endpoint_url:
                tree = hierarchy.build_tree_external(
                    spans,
                    hierarchy.EndpointConfig(
                        url=config.endpoint_url,
                        auth_token=config.endpoint_token,
                        timeout_s=config.endpoint_timeout_s,
                    ),
                    max_retries=config.max_retries,
                )
                source = "external"
            else:
                tree = hierarchy.build_tree_gap(
                    spans,
                    episode_gap_ns=int(config.episode_gap_s * 1e9),
                    subgoal_gap_ns=int(config.subgoal_gap_s * 1e9),
                )
                source = "gap"
            violations = hierarchy.validate_tree(tree, spans)
            tree_report = {
                "source": source,
                "violations": [v.to_dict() for v in violations],
            }
            if not violations:
                tree_report["stats"] = hierarchy.tree_stats(tree, spans).to_dict()
            report["tree"] = tree_report

        gt_path = path.with_name(path.stem + ".gt.mcap")
        if gt_path.exists():
            gt = log_format.read_session(gt_path)
            try:
                metrics = traj_metrics.evaluate_trajectory(
                    session.poses,
                    gt.poses,
                    tol_ns=config.assoc_tol_ns,
                    rpe_delta_s=config.rpe_delta_s,
                )
                report["trajectory"] = metrics.to_dict()
            except InsufficientOverlapError as exc:
                report["trajectory"] = {"skipped": str(exc)}

        if session.markers:
            try:
                report["drift"] = traj_metrics.marker_drift(
                    session, config.assoc_tol_ns
                ).to_dict()
            except NoRevisitError as exc:
                report["drift"] = {"skipped": str(exc)}

        if config.export and tree is not None and not report["tree"]["violations"]:
            export_dir = Path(config.out_dir) / "exports" / path.stem
            manifest = export_training_set(
                session, tree, spans, frames, export_dir, config.assoc_tol_ns
            )
            report["export"] = manifest

    except (SteraError, OSError, ValueError) as exc:
        report["ok"] = False
        report["error"] = f"{type(exc).__name__}: {exc}"
    return report


def _process_star(args: tuple[PipelineConfig, str]) -> dict:
    return process_session(*args)


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Process every input session and write per-session reports plus a summary.

    Exit code is nonzero iff any session failed outright, any tree invariant
    was violated, or (with strict_labels) any label defect was found.
    """
    out_dir = Path(config.out_dir)
    ordered_inputs = sorted(config.inputs)
    jobs = [(config, p) for p in ordered_inputs]
    if config.workers == 1 or len(jobs) <= 1:
        reports = [process_session(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(_process_star, jobs))

    report_paths = []
    digests = []
    n_failed = 0
    n_violating = 0
    for input_path, report in zip(ordered_inputs, reports):
        stem = Path(input_path).stem
        report_path = out_dir / "reports" / f"{stem}.report.json"
        _dump_json(report, report_path)
        report_paths.append(report_path)

        tree_violations = len(report.get("tree", {}).get("violations", []))
        label_defects = len(report.get("labels", {}).get("defects", []))
        failed = not report["ok"]
        violating = tree_violations > 0 or (config.strict_labels and label_defects > 0)
        n_failed += failed
        n_violating += violating
        digests.append(
            {
                "input": Path(input_path).name,
                "session_id": report.get("session_id"),
                "ok": report["ok"],
                "error": report.get("error"),
                "tree_violations": tree_violations,
                "label_defects": label_defects,
            }
        )

    exit_code = 1 if (n_failed or n_violating) else 0
    summary = {
        "n_sessions": len(ordered_inputs),
        "n_failed": n_failed,
        "n_violating": n_violating,
        "exit_code": exit_code,
        "sessions": digests,
    }
    summary_path = out_dir / "summary.json"
    _dump_json(summary, summary_path)
    return PipelineResult(
        exit_code=exit_code,
        summary=summary,
        summary_path=summary_path,
        report_paths=report_paths,
    )
