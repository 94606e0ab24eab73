"""Command-line interface.

Subcommands: ingest, metrics, anchor, kinematics, labels, hierarchy, drift,
synth, run, export. See README for the synth profile and pipeline config
document formats.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, hierarchy, labels, log_format, pipeline, synth, traj_metrics
from .errors import SteraError
from .hand_kinematics import DEFAULT_CONFIDENCE_GATE, JointLimits, kinematics_report
from .types import SessionLog


def _print_json(obj) -> None:
    print(json.dumps(pipeline._jsonify(obj), indent=2, sort_keys=True))


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel session workers")


def _session_digest(session) -> dict:
    return {
        "session_id": session.session_id,
        "skipped_messages": session.skipped_messages,
        "duration_s": session.poses.duration_s(),
        "streams": {
            "poses": len(session.poses),
            "depth": len(session.depths),
            "hands": len(session.hands),
            "imu": len(session.imu),
            "markers": len(session.markers),
        },
    }


# --- subcommand handlers --------------------------------------------------------


def _cmd_ingest(args) -> int:
    _print_json(_session_digest(log_format.read_session(args.file)))
    return 0


def _cmd_metrics(args) -> int:
    est = log_format.read_session(args.est)
    gt = log_format.read_session(args.gt)
    metrics = traj_metrics.evaluate_trajectory(
        est.poses, gt.poses, tol_ns=args.tol_ns, rpe_delta_s=args.rpe_delta
    )
    _print_json(metrics.to_dict())
    return 0


def _anchor_rows(frames) -> list[str]:
    rows = []
    for f in frames:
        rows.append(
            pipeline._json_line(
                {
                    "ts": f.ts_ns,
                    "side": f.side,
                    "joints": [
                        [float(x) for x in joint] if ok else None
                        for joint, ok in zip(f.joints, f.valid)
                    ],
                    "valid": [bool(v) for v in f.valid],
                    "conf": f.confidence,
                }
            )
        )
    return rows


def _cmd_anchor(args) -> int:
    session = log_format.read_session(args.file)
    frames = geometry.anchor_hands(session, args.tol_ns)
    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / f"{Path(args.file).stem}.hands.jsonl"
    rows = _anchor_rows(frames)
    out_path.write_text("\n".join(rows) + ("\n" if rows else ""))
    _print_json(pipeline._anchor_summary(frames) | {"output": str(out_path)})
    return 0


def _cmd_kinematics(args) -> int:
    limits = JointLimits.from_json(args.limits) if args.limits else JointLimits.default()
    out = {}
    for file in args.files:
        session = log_format.read_session(file)
        frames = geometry.anchor_hands(session, args.tol_ns)
        out[Path(file).name] = kinematics_report(
            frames, limits=limits, conf_min=args.conf_min, total_frames=len(session.hands)
        ).to_dict()
    _print_json(out)
    return 0


def _cmd_labels(args) -> int:
    lexicon = (
        labels.ModifierLexicon.from_json(args.lexicon)
        if args.lexicon
        else labels.ModifierLexicon.default()
    )
    spans = labels.load_spans_jsonl(args.spans)
    report = {
        "stats": labels.label_stats(spans, lexicon).to_dict(),
        "defects": [d.to_dict() for d in labels.detect_defects(spans)],
    }
    _print_json(report)
    return 0


def _cmd_hierarchy(args) -> int:
    spans = labels.load_spans_jsonl(args.spans)
    if args.action == "validate":
        tree = hierarchy.load_tree(args.tree)
        violations = hierarchy.validate_tree(tree, spans)
        _print_json({"violations": [v.to_dict() for v in violations]})
        return 1 if violations else 0
    if args.action == "build-gap":
        tree = hierarchy.build_tree_gap(
            spans,
            episode_gap_ns=int(args.episode_gap * 1e9),
            subgoal_gap_ns=int(args.subgoal_gap * 1e9),
        )
    else:  # build-ext
        if not args.endpoint:
            raise SteraError("build-ext requires --endpoint")
        tree = hierarchy.build_tree_external(
            spans,
            hierarchy.EndpointConfig(
                url=args.endpoint, auth_token=args.token, timeout_s=args.timeout
            ),
            max_retries=args.max_retries,
        )
    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / f"{Path(args.spans).stem.removesuffix('.spans')}.tree.json"
    hierarchy.save_tree(tree, out_path)
    stats = hierarchy.tree_stats(tree, spans)
    _print_json({"output": str(out_path), "stats": stats.to_dict()})
    return 0


def _cmd_drift(args) -> int:
    session = log_format.read_session(args.file)
    _print_json(traj_metrics.marker_drift(session, args.tol_ns).to_dict())
    return 0


def _cmd_synth(args) -> int:
    spec = json.loads(Path(args.profile).read_text())
    profile = synth.MotionProfile(
        kind=spec["kind"],
        duration_s=float(spec["duration_s"]),
        rate_hz=float(spec["rate_hz"]),
        speed_mps=float(spec.get("speed_mps", 0.5)),
        yaw_rate_rps=float(spec.get("yaw_rate_rps", 0.5)),
        seed=int(spec.get("seed", 0)),
    )
    session_id = spec.get("session_id", f"synth-{profile.kind}-{profile.seed}")
    args.out.mkdir(parents=True, exist_ok=True)
    outputs = {}

    if "hands" in spec:
        hands = spec["hands"]
        template = hands.get("template")
        session, _ = synth.gen_hand_session(
            profile,
            template=np.asarray(template, dtype=float) if template else None,
            seed=int(hands.get("seed", profile.seed)),
            hand_mode=hands.get("mode", "reach_cycle"),
            sides=tuple(hands.get("sides", ("left", "right"))),
            detection_rate=float(hands.get("detection_rate", 1.0)),
            center_depth_m=float(hands.get("center_depth_m", 0.5)),
            session_id=session_id,
        )
        session_path = args.out / f"{session_id}.mcap"
        log_format.write_session(session, session_path)
        outputs["session"] = str(session_path)
    else:
        noise = None
        if "noise" in spec:
            noise = synth.NoiseModel(
                pos_sigma_m=float(spec["noise"].get("pos_sigma_m", 0.0)),
                rot_sigma_deg=float(spec["noise"].get("rot_sigma_deg", 0.0)),
                drift_per_m=float(spec["noise"].get("drift_per_m", 0.0)),
                seed=int(spec["noise"].get("seed", profile.seed)),
            )
        session, clean = synth.gen_session(
            profile,
            noise=noise,
            marker_every_s=spec.get("marker_every_s"),
            marker_id=int(spec.get("marker_id", 0)),
            marker_world=tuple(spec.get("marker_world", (1.0, 0.4, 0.3))),
            session_id=session_id,
        )
        session_path = args.out / f"{session_id}.mcap"
        log_format.write_session(session, session_path)
        outputs["session"] = str(session_path)
        if noise is not None and not noise.is_zero():
            gt_session = SessionLog(
                session_id=f"{session_id}-gt", intrinsics=session.intrinsics, poses=clean
            )
            gt_path = args.out / f"{session_id}.gt.mcap"
            log_format.write_session(gt_session, gt_path)
            outputs["ground_truth"] = str(gt_path)

    if "labels" in spec:
        plan = spec["labels"]
        spans = synth.gen_label_corpus(
            n=int(plan["n"]),
            zero_duration=int(plan.get("zero_duration", 0)),
            overlaps=int(plan.get("overlaps", 0)),
            seed=int(plan.get("seed", profile.seed)),
        )
        spans_path = args.out / f"{session_id}.spans.jsonl"
        labels.save_spans_jsonl(spans, spans_path)
        outputs["spans"] = str(spans_path)

    _print_json(outputs)
    return 0


def _cmd_run(args) -> int:
    config = pipeline.PipelineConfig.from_json(args.config)
    if args.workers != 1:
        config.workers = args.workers
    if args.out != Path("."):
        config.out_dir = str(args.out)
    result = pipeline.run_pipeline(config)
    _print_json(result.summary)
    return result.exit_code


def _cmd_export(args) -> int:
    session = log_format.read_session(args.file)
    tree = hierarchy.load_tree(args.tree)
    spans_path = (
        Path(args.spans)
        if args.spans
        else Path(args.file).with_name(Path(args.file).stem + ".spans.jsonl")
    )
    spans = labels.load_spans_jsonl(spans_path)
    frames = geometry.anchor_hands(session, args.tol_ns) if session.hands else []
    out_dir = args.out / Path(args.file).stem
    manifest = pipeline.export_training_set(session, tree, spans, frames, out_dir, args.tol_ns)
    _print_json({"output": str(out_dir), "n_files": len(manifest["files"])})
    return 0


# --- parser -----------------------------------------------------------------------


def _add_tol(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--tol-ms",
        dest="tol_ms",
        type=float,
        default=geometry.DEFAULT_ASSOC_TOL_NS / 1e6,
        help="timestamp association tolerance in milliseconds",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stera",
        description="Convert and validate egocentric capture logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read a capture log and print its stream summary")
    p.add_argument("file", type=Path)
    _common(p)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("metrics", help="trajectory accuracy against ground truth")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth capture log")
    p.add_argument("--est", type=Path, required=True, help="estimated capture log")
    p.add_argument("--rpe-delta", type=float, default=1.0, help="RPE interval in seconds")
    _add_tol(p)
    _common(p)
    p.set_defaults(handler=_cmd_metrics)

    p = sub.add_parser("anchor", help="anchor hand detections into the world frame")
    p.add_argument("file", type=Path)
    _add_tol(p)
    _common(p)
    p.set_defaults(handler=_cmd_anchor)

    p = sub.add_parser("kinematics", help="hand-pose consistency reports")
    p.add_argument("files", nargs="+", type=Path)
    p.add_argument("--conf-min", type=float, default=DEFAULT_CONFIDENCE_GATE)
    p.add_argument("--limits", type=Path, help="joint-limit JSON document")
    _add_tol(p)
    _common(p)
    p.set_defaults(handler=_cmd_kinematics)

    p = sub.add_parser("labels", help="atomic-label QA over a span corpus")
    p.add_argument("spans", type=Path)
    p.add_argument("--lexicon", type=Path, help="modifier lexicon JSON document")
    _common(p)
    p.set_defaults(handler=_cmd_labels)

    p = sub.add_parser("hierarchy", help="validate or build instruction trees")
    p.add_argument("action", choices=("validate", "build-gap", "build-ext"))
    p.add_argument("spans", type=Path)
    p.add_argument("--tree", type=Path, help="tree document (for validate)")
    p.add_argument("--episode-gap", type=float, default=10.0, help="seconds")
    p.add_argument("--subgoal-gap", type=float, default=120.0, help="seconds")
    p.add_argument("--endpoint", help="external generator URL (for build-ext)")
    p.add_argument("--token", help="bearer token for the external generator")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-retries", type=int, default=2)
    _common(p)
    p.set_defaults(handler=_cmd_hierarchy)

    p = sub.add_parser("drift", help="marker-revisit drift report")
    p.add_argument("file", type=Path)
    _add_tol(p)
    _common(p)
    p.set_defaults(handler=_cmd_drift)

    p = sub.add_parser("synth", help="generate synthetic sessions from a profile document")
    p.add_argument("profile", type=Path)
    _common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("run", help="run the full pipeline from a config document")
    p.add_argument("config", type=Path)
    _common(p)
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("export", help="write the training-ready episode layout")
    p.add_argument("file", type=Path)
    p.add_argument("--tree", type=Path, required=True)
    p.add_argument("--spans", type=Path, help="defaults to <file>.spans.jsonl")
    _add_tol(p)
    _common(p)
    p.set_defaults(handler=_cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "tol_ms"):
        args.tol_ns = int(args.tol_ms * 1e6)
    try:
        return args.handler(args)
    except SteraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
