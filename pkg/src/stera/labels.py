"""Structural QA and descriptive-richness statistics for atomic action labels.

Spans are short timestamped imperative sentences; this module finds temporal
defects (zero/negative durations, overlapping consecutive pairs) and measures
how descriptive the text is against a configurable word lexicon. Detection
never mutates or repairs spans.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import EmptyCorpusError

ZERO_DURATION = "zero_duration"
OVERLAP = "overlap"

_PUNCT_TO_SPACE = str.maketrans({ch: " " for ch in string.punctuation})


@dataclass(frozen=True)
class AtomicSpan:
    """One timestamped language label."""

    id: int
    start_ns: int
    end_ns: int
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("span text must be non-empty")

    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


@dataclass(frozen=True)
class Defect:
    kind: str  # ZERO_DURATION or OVERLAP
    span_ids: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "span_ids": list(self.span_ids)}


@dataclass(frozen=True)
class ModifierLexicon:
    """Word sets that count as descriptive modifiers, plus spatial prepositions."""

    colors: frozenset[str]
    materials: frozenset[str]
    sizes: frozenset[str]
    prepositions: frozenset[str]

    def __post_init__(self):
        for name in ("colors", "materials", "sizes", "prepositions"):
            words = getattr(self, name)
            if not words:
                raise ValueError(f"{name} must be non-empty")
            if any(w != w.lower() for w in words):
                raise ValueError(f"{name} must be lowercase")

    @property
    def modifiers(self) -> frozenset[str]:
        return self.colors | self.materials | self.sizes

    @staticmethod
    def from_dict(raw: dict) -> "ModifierLexicon":
        return ModifierLexicon(
            colors=frozenset(raw["colors"]),
            materials=frozenset(raw["materials"]),
            sizes=frozenset(raw["sizes"]),
            prepositions=frozenset(raw["prepositions"]),
        )

    @staticmethod
    def from_json(path: str | Path) -> "ModifierLexicon":
        return ModifierLexicon.from_dict(json.loads(Path(path).read_text()))

    @staticmethod
    def default() -> "ModifierLexicon":
        raw = json.loads(resources.files("stera.data").joinpath("lexicon.json").read_text())
        return ModifierLexicon.from_dict(raw)


@dataclass(frozen=True)
class LabelQualityReport:
    n_spans: int
    zero_duration_count: int
    overlap_count: int
    overlap_fraction: float  # of adjacent pairs
    mean_words: float
    mean_modifiers: float
    preposition_fraction: float  # labels containing >= 1 spatial preposition

    def to_dict(self) -> dict:
        return {
            "n_spans": self.n_spans,
            "zero_duration_count": self.zero_duration_count,
            "overlap_count": self.overlap_count,
            "overlap_fraction": self.overlap_fraction,
            "mean_words": self.mean_words,
            "mean_modifiers": self.mean_modifiers,
            "preposition_fraction": self.preposition_fraction,
        }


def tokenize(text: str) -> list[str]:
    """Lowercase, replace ASCII punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TO_SPACE).split()


def detect_defects(spans: list[AtomicSpan]) -> list[Defect]:
    """Temporal defects over a start-sorted span list.

    Emits one ZERO_DURATION per span with end <= start and one OVERLAP per
    consecutive pair where the earlier span ends after the later one starts.
    """
    defects: list[Defect] = []
    for span in spans:
        if span.end_ns <= span.start_ns:
            defects.append(Defect(kind=ZERO_DURATION, span_ids=(span.id,)))
    for left, right in zip(spans, spans[1:]):
        if left.end_ns > right.start_ns:
            defects.append(Defect(kind=OVERLAP, span_ids=(left.id, right.id)))
    return defects


def label_stats(
    spans: list[AtomicSpan], lexicon: ModifierLexicon | None = None
) -> LabelQualityReport:
    """Corpus-level quality report: defect counts and text statistics."""
    if not spans:
        raise EmptyCorpusError("no spans to analyze")
    lexicon = lexicon or ModifierLexicon.default()

    defects = detect_defects(spans)
    zero_count = sum(1 for d in defects if d.kind == ZERO_DURATION)
    overlap_count = sum(1 for d in defects if d.kind == OVERLAP)
    adjacent_pairs = max(len(spans) - 1, 0)

    modifiers = lexicon.modifiers
    word_counts = []
    modifier_counts = []
    with_preposition = 0
    for span in spans:
        tokens = tokenize(span.text)
        word_counts.append(len(tokens))
        modifier_counts.append(sum(1 for t in tokens if t in modifiers))
        if any(t in lexicon.prepositions for t in tokens):
            with_preposition += 1

    n = len(spans)
    return LabelQualityReport(
        n_spans=n,
        zero_duration_count=zero_count,
        overlap_count=overlap_count,
        overlap_fraction=overlap_count / adjacent_pairs if adjacent_pairs else 0.0,
        mean_words=sum(word_counts) / n,
        mean_modifiers=sum(modifier_counts) / n,
        preposition_fraction=with_preposition / n,
    )


def load_spans_jsonl(path: str | Path) -> list[AtomicSpan]:
    """Read a span corpus: one JSON object per line, sorted by start time."""
    spans = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        try:
            spans.append(
                AtomicSpan(
                    id=int(obj["id"]),
                    start_ns=int(obj["start_ns"]),
                    end_ns=int(obj["end_ns"]),
                    text=str(obj["text"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{line_no}: bad span record: {exc}") from exc
    spans.sort(key=lambda s: (s.start_ns, s.id))
    ids = [s.id for s in spans]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: span ids must be unique")
    return spans


def save_spans_jsonl(spans: list[AtomicSpan], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"id": s.id, "start_ns": s.start_ns, "end_ns": s.end_ns, "text": s.text},
            sort_keys=True,
            separators=(",", ":"),
        )
        for s in spans
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
