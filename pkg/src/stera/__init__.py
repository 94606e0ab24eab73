"""stera: batch toolkit turning raw egocentric capture logs into validated,
training-ready episode data.

Stages: capture-log ingestion (MCAP subset), world-frame hand anchoring,
trajectory accuracy and drift metrics, hand-kinematics consistency checks,
atomic-label QA, hierarchical-instruction validation, and a deterministic
synthetic-session generator that serves as the test oracle for all of it.
"""

from . import errors
from .geometry import (
    DEFAULT_ASSOC_TOL_NS,
    DEPTH_FLOOR_M,
    anchor_hands,
    associate,
    project,
    sample_depth,
    transform_point,
    unproject,
)
from .hand_kinematics import (
    MANO_SKELETON,
    HandSkeleton,
    JointLimits,
    KinematicsReport,
    bone_cv,
    bone_lengths,
    filter_frames,
    flexion_angles,
    joint_limit_report,
    kinematics_report,
    wrist_dynamics,
)
from .hierarchy import (
    EndpointConfig,
    Episode,
    InstructionTree,
    SubGoal,
    TreeStats,
    build_tree_external,
    build_tree_gap,
    load_tree,
    save_tree,
    tree_stats,
    validate_tree,
)
from .labels import (
    AtomicSpan,
    LabelQualityReport,
    ModifierLexicon,
    detect_defects,
    label_stats,
    load_spans_jsonl,
    save_spans_jsonl,
)
from .log_format import decode_session, encode_session, read_session, write_session
from .pipeline import PipelineConfig, export_training_set, run_pipeline
from .synth import (
    DEFAULT_BONE_LENGTHS,
    MotionProfile,
    NoiseModel,
    gen_hand_session,
    gen_label_corpus,
    gen_session,
    gen_trajectory,
    perturb_trajectory,
)
from .traj_metrics import (
    DriftReport,
    TrajectoryMetrics,
    ate,
    evaluate_trajectory,
    marker_drift,
    rpe,
    scaling_law_loss,
    trajectory_length,
    umeyama_align,
)
from .types import (
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

__version__ = "0.1.0"

__all__ = [
    "errors",
    # types
    "Pose",
    "Trajectory",
    "CameraIntrinsics",
    "DepthMap",
    "HandObservation",
    "WorldHandFrame",
    "MarkerSighting",
    "ImuStream",
    "SessionLog",
    # log format
    "read_session",
    "write_session",
    "encode_session",
    "decode_session",
    # geometry
    "transform_point",
    "project",
    "unproject",
    "sample_depth",
    "associate",
    "anchor_hands",
    "DEPTH_FLOOR_M",
    "DEFAULT_ASSOC_TOL_NS",
    # trajectory metrics
    "TrajectoryMetrics",
    "DriftReport",
    "trajectory_length",
    "umeyama_align",
    "ate",
    "rpe",
    "evaluate_trajectory",
    "marker_drift",
    "scaling_law_loss",
    # hand kinematics
    "HandSkeleton",
    "MANO_SKELETON",
    "JointLimits",
    "KinematicsReport",
    "bone_lengths",
    "bone_cv",
    "flexion_angles",
    "joint_limit_report",
    "wrist_dynamics",
    "filter_frames",
    "kinematics_report",
    # labels
    "AtomicSpan",
    "ModifierLexicon",
    "LabelQualityReport",
    "detect_defects",
    "label_stats",
    "load_spans_jsonl",
    "save_spans_jsonl",
    # hierarchy
    "Episode",
    "SubGoal",
    "InstructionTree",
    "TreeStats",
    "EndpointConfig",
    "validate_tree",
    "tree_stats",
    "build_tree_gap",
    "build_tree_external",
    "save_tree",
    "load_tree",
    # synth
    "MotionProfile",
    "NoiseModel",
    "DEFAULT_BONE_LENGTHS",
    "gen_trajectory",
    "perturb_trajectory",
    "gen_session",
    "gen_hand_session",
    "gen_label_corpus",
    # pipeline
    "PipelineConfig",
    "run_pipeline",
    "export_training_set",
]
