"""Three-level instruction tree over atomic spans: goal -> sub-goals -> episodes.

Enforced invariants: every span belongs to exactly one episode, episode
boundaries equal the timestamps of their first/last span, and the episode
intervals cover the whole span range except raw inter-span idle gaps.
Includes a deterministic gap-based tree builder and an adapter for an
external text-generation service with validity gating.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import (
    EmptyInputError,
    InvalidTreeError,
    ServiceUnreachableError,
    ValidationExhaustedError,
)
from .labels import AtomicSpan

logger = logging.getLogger(__name__)

DUPLICATE_ASSIGNMENT = "duplicate_assignment"
UNASSIGNED = "unassigned"
BOUNDARY_MISMATCH = "boundary_mismatch"
COVERAGE_GAP = "coverage_gap"
UNKNOWN_SPAN = "unknown_span"

DESCRIPTION_MAX_CHARS = 120

DEFAULT_EPISODE_GAP_NS = 10_000_000_000  # 10 s
DEFAULT_SUBGOAL_GAP_NS = 120_000_000_000  # 120 s


@dataclass(frozen=True)
class Episode:
    id: int
    description: str
    span_ids: tuple[int, ...]
    start_ns: int
    end_ns: int

    def __post_init__(self):
        if not self.span_ids:
            raise ValueError("episode must reference at least one span")


@dataclass(frozen=True)
class SubGoal:
    id: int
    description: str
    episodes: tuple[Episode, ...]

    def __post_init__(self):
        if not self.episodes:
            raise ValueError("sub-goal must contain at least one episode")


@dataclass(frozen=True)
class InstructionTree:
    goal: str
    sub_goals: tuple[SubGoal, ...]

    def episodes(self) -> list[Episode]:
        return [ep for sg in self.sub_goals for ep in sg.episodes]


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    span_ids: tuple[int, ...] = ()
    episode_ids: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "detail": self.detail,
            "span_ids": list(self.span_ids),
            "episode_ids": list(self.episode_ids),
        }


def validate_tree(tree: InstructionTree, spans: list[AtomicSpan]) -> list[Violation]:
    """Check the three structural invariants; an empty list means valid.

    Emitted kinds: duplicate_assignment (span in more than one episode),
    unassigned (span in no episode), boundary_mismatch (episode start/end not
    equal to its first/last span), coverage_gap (a span's time is not covered
    by any episode interval), plus unknown_span for references to ids absent
    from the corpus.
    """
    violations: list[Violation] = []
    by_id = {s.id: s for s in spans}
    episodes = tree.episodes()

    assignments: dict[int, list[int]] = {}
    for ep in episodes:
        for span_id in ep.span_ids:
            assignments.setdefault(span_id, []).append(ep.id)

    for span_id in sorted(assignments):
        if span_id not in by_id:
            violations.append(
                Violation(
                    kind=UNKNOWN_SPAN,
                    detail=f"episode references span {span_id} absent from the corpus",
                    span_ids=(span_id,),
                    episode_ids=tuple(assignments[span_id]),
                )
            )
        elif len(assignments[span_id]) > 1:
            violations.append(
                Violation(
                    kind=DUPLICATE_ASSIGNMENT,
                    detail=f"span {span_id} assigned to episodes {assignments[span_id]}",
                    span_ids=(span_id,),
                    episode_ids=tuple(assignments[span_id]),
                )
            )

    for span in spans:
        if span.id not in assignments:
            violations.append(
                Violation(
                    kind=UNASSIGNED,
                    detail=f"span {span.id} belongs to no episode",
                    span_ids=(span.id,),
                )
            )

    for ep in episodes:
        members = [by_id[s] for s in ep.span_ids if s in by_id]
        if not members:
            continue
        start = min(s.start_ns for s in members)
        end = max(s.end_ns for s in members)
        if ep.start_ns != start or ep.end_ns != end:
            violations.append(
                Violation(
                    kind=BOUNDARY_MISMATCH,
                    detail=(
                        f"episode {ep.id} spans [{ep.start_ns}, {ep.end_ns}] but its spans "
                        f"cover [{start}, {end}]"
                    ),
                    episode_ids=(ep.id,),
                )
            )

    # Coverage: every span's time must lie inside the union of episode
    # intervals; idle time between spans may legitimately stay uncovered.
    if spans and episodes:
        intervals = sorted((ep.start_ns, ep.end_ns) for ep in episodes)
        merged: list[list[int]] = []
        for lo, hi in intervals:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        for span in sorted(spans, key=lambda s: (s.start_ns, s.id)):
            lo, hi = span.start_ns, max(span.end_ns, span.start_ns)
            covered = any(m_lo <= lo and hi <= m_hi for m_lo, m_hi in merged)
            if not covered:
                violations.append(
                    Violation(
                        kind=COVERAGE_GAP,
                        detail=f"span {span.id} time [{lo}, {hi}] not covered by any episode",
                        span_ids=(span.id,),
                    )
                )
    return violations


@dataclass(frozen=True)
class TreeStats:
    n_spans: int
    n_episodes: int
    n_sub_goals: int
    mean_duration_s: dict[str, float]  # atomic / episode / sub_goal / session
    median_duration_s: dict[str, float]
    level_ratios: dict[str, float]
    spans_per_episode: tuple[int, ...]
    spans_per_episode_median: float
    spans_per_episode_mean: float
    fraction_episodes_le_10_spans: float

    def to_dict(self) -> dict:
        return {
            "n_spans": self.n_spans,
            "n_episodes": self.n_episodes,
            "n_sub_goals": self.n_sub_goals,
            "mean_duration_s": self.mean_duration_s,
            "median_duration_s": self.median_duration_s,
            "level_ratios": self.level_ratios,
            "spans_per_episode_median": self.spans_per_episode_median,
            "spans_per_episode_mean": self.spans_per_episode_mean,
            "fraction_episodes_le_10_spans": self.fraction_episodes_le_10_spans,
        }


def tree_stats(tree: InstructionTree, spans: list[AtomicSpan]) -> TreeStats:
    """Counts, per-level durations, and adjacent-level scale ratios."""
    violations = validate_tree(tree, spans)
    if violations:
        raise InvalidTreeError(violations)

    by_id = {s.id: s for s in spans}
    episodes = tree.episodes()

    atomic = np.array([s.duration_ns() for s in spans], dtype=float) * 1e-9
    episode_durations = np.array([ep.end_ns - ep.start_ns for ep in episodes], dtype=float) * 1e-9
    subgoal_durations = (
        np.array(
            [
                max(ep.end_ns for ep in sg.episodes) - min(ep.start_ns for ep in sg.episodes)
                for sg in tree.sub_goals
            ],
            dtype=float,
        )
        * 1e-9
    )
    session_duration = (
        max(s.end_ns for s in spans) - min(s.start_ns for s in spans)
    ) * 1e-9

    def ratio(num: float, den: float) -> float:
        return num / den if den > 0 else float("nan")

    mean = {
        "atomic": float(atomic.mean()),
        "episode": float(episode_durations.mean()),
        "sub_goal": float(subgoal_durations.mean()),
        "session": float(session_duration),
    }
    median = {
        "atomic": float(np.median(atomic)),
        "episode": float(np.median(episode_durations)),
        "sub_goal": float(np.median(subgoal_durations)),
        "session": float(session_duration),
    }
    counts = tuple(len(ep.span_ids) for ep in episodes)
    return TreeStats(
        n_spans=len(spans),
        n_episodes=len(episodes),
        n_sub_goals=len(tree.sub_goals),
        mean_duration_s=mean,
        median_duration_s=median,
        level_ratios={
            "episode_over_atomic": ratio(mean["episode"], mean["atomic"]),
            "sub_goal_over_episode": ratio(mean["sub_goal"], mean["episode"]),
            "session_over_sub_goal": ratio(mean["session"], mean["sub_goal"]),
        },
        spans_per_episode=counts,
        spans_per_episode_median=float(np.median(counts)),
        spans_per_episode_mean=float(np.mean(counts)),
        fraction_episodes_le_10_spans=float(np.mean([c <= 10 for c in counts])),
    )


def _describe(spans: list[AtomicSpan]) -> str:
    text = "; ".join(s.text for s in spans)
    return text[:DESCRIPTION_MAX_CHARS]


def build_tree_gap(
    spans: list[AtomicSpan],
    episode_gap_ns: int = DEFAULT_EPISODE_GAP_NS,
    subgoal_gap_ns: int = DEFAULT_SUBGOAL_GAP_NS,
) -> InstructionTree:
    """Deterministic tree builder: split on inter-span idle gaps.

    Consecutive spans with an idle gap <= episode_gap_ns share an episode;
    consecutive episodes with a gap <= subgoal_gap_ns share a sub-goal.
    Descriptions are concatenated span texts truncated to 120 characters.
    The output always passes validate_tree.
    """
    if not spans:
        raise EmptyInputError("cannot build a tree over zero spans")
    if not episode_gap_ns < subgoal_gap_ns:
        raise ValueError("episode gap must be smaller than the sub-goal gap")

    ordered = sorted(spans, key=lambda s: (s.start_ns, s.id))
    groups: list[list[AtomicSpan]] = [[ordered[0]]]
    for span in ordered[1:]:
        prev_end = max(s.end_ns for s in groups[-1])
        if span.start_ns - prev_end <= episode_gap_ns:
            groups[-1].append(span)
        else:
            groups.append([span])

    episodes = [
        Episode(
            id=i,
            description=_describe(group),
            span_ids=tuple(s.id for s in group),
            start_ns=min(s.start_ns for s in group),
            end_ns=max(s.end_ns for s in group),
        )
        for i, group in enumerate(groups)
    ]

    clusters: list[list[int]] = [[0]]
    for i, ep in enumerate(episodes[1:], start=1):
        if ep.start_ns - episodes[clusters[-1][-1]].end_ns <= subgoal_gap_ns:
            clusters[-1].append(i)
        else:
            clusters.append([i])

    sub_goals = tuple(
        SubGoal(
            id=k,
            description=_describe([s for i in cluster for s in groups[i]]),
            episodes=tuple(episodes[i] for i in cluster),
        )
        for k, cluster in enumerate(clusters)
    )
    return InstructionTree(goal=_describe(ordered), sub_goals=sub_goals)


# --- serialization -------------------------------------------------------------

def tree_to_dict(tree: InstructionTree) -> dict:
    return {
        "goal": tree.goal,
        "sub_goals": [
            {
                "id": sg.id,
                "description": sg.description,
                "episodes": [
                    {
                        "id": ep.id,
                        "description": ep.description,
                        "span_ids": list(ep.span_ids),
                        "start_ns": ep.start_ns,
                        "end_ns": ep.end_ns,
                    }
                    for ep in sg.episodes
                ],
            }
            for sg in tree.sub_goals
        ],
    }


def tree_from_dict(raw: dict) -> InstructionTree:
    try:
        sub_goals = tuple(
            SubGoal(
                id=int(sg["id"]),
                description=str(sg["description"]),
                episodes=tuple(
                    Episode(
                        id=int(ep["id"]),
                        description=str(ep["description"]),
                        span_ids=tuple(int(i) for i in ep["span_ids"]),
                        start_ns=int(ep["start_ns"]),
                        end_ns=int(ep["end_ns"]),
                    )
                    for ep in sg["episodes"]
                ),
            )
            for sg in raw["sub_goals"]
        )
        return InstructionTree(goal=str(raw["goal"]), sub_goals=sub_goals)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed tree document: {exc}") from exc


def save_tree(tree: InstructionTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree), indent=2, sort_keys=True) + "\n")


def load_tree(path: str | Path) -> InstructionTree:
    return tree_from_dict(json.loads(Path(path).read_text()))


# --- external generator --------------------------------------------------------

@dataclass(frozen=True)
class EndpointConfig:
    url: str
    auth_token: str | None = None
    timeout_s: float = 30.0


def _spans_payload(spans: list[AtomicSpan]) -> list[dict]:
    return [
        {"id": s.id, "start_ns": s.start_ns, "end_ns": s.end_ns, "text": s.text}
        for s in spans
    ]


def build_tree_external(
    spans: list[AtomicSpan],
    endpoint: EndpointConfig,
    max_retries: int = 2,
) -> InstructionTree:
    """Request a tree from an external generation service, gated on validity.

    POSTs {"spans": [...]} and expects the tree JSON document back. When the
    response fails validation the request is retried with the violations
    echoed back (fields "violations" and "attempt"), up to max_retries times.
    Only a tree passing validate_tree is ever returned.
    """
    if not spans:
        raise EmptyInputError("cannot build a tree over zero spans")
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"

    body: dict = {"spans": _spans_payload(spans)}
    last_violations: list[Violation] = []
    attempts = max_retries + 1
    for attempt in range(attempts):
        try:
            response = requests.post(
                endpoint.url, json=body, headers=headers, timeout=endpoint.timeout_s
            )
        except requests.RequestException as exc:
            raise ServiceUnreachableError(f"POST {endpoint.url} failed: {exc}") from exc
        if response.status_code != 200:
            raise ServiceUnreachableError(
                f"POST {endpoint.url} returned status {response.status_code}"
            )
        try:
            tree = tree_from_dict(response.json())
            violations = validate_tree(tree, spans)
        except ValueError as exc:
            violations = [Violation(kind="malformed_response", detail=str(exc))]
            tree = None
        if tree is not None and not violations:
            return tree
        last_violations = violations
        logger.warning(
            "external tree attempt %d/%d invalid (%d violations); request=%s response=%s",
            attempt + 1,
            attempts,
            len(violations),
            json.dumps(body)[:2000],
            response.text[:2000],
        )
        body = {
            "spans": _spans_payload(spans),
            "violations": [v.to_dict() for v in violations],
            "attempt": attempt + 2,
        }
    raise ValidationExhaustedError(attempts, last_violations)
