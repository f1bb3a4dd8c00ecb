"""Confidence scores, confidence classes and threshold filtering.

Scores are kept as exact fractions so class edges and the threshold
comparison never depend on float rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .dataset import DataSet
from .discovery import AccessStats, PoiCandidate, PoiKind


class ScoringError(ValueError):
    pass


def as_fraction(x) -> Fraction:
    """Exact value of a score or threshold; floats are read as their
    shortest decimal repr, so 0.8 means 4/5."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def standalone_confidence(candidate: PoiCandidate, dataset: DataSet) -> Fraction:
    """Share of the values processed at the POI that belong to the data set."""
    if not candidate.observations:
        raise ScoringError(f"{candidate.key} has no observations")
    hits = sum(dataset.contains_value(o.value, candidate.data_class) for o in candidate.observations)
    return Fraction(hits, len(candidate.observations))


def credited_bytes(candidate: PoiCandidate) -> int:
    """Distinct byte writes by the candidate that ended up inside a
    complete pattern occurrence. A byte write shared by overlapping
    occurrences counts once."""
    seen = set()
    for occ in candidate.occurrences:
        for i, (insn, seq) in enumerate(zip(occ.writers, occ.writer_seqs)):
            if insn == candidate.addr:
                seen.add((occ.match_start + i, seq))
    return len(seen)


def contiguous_confidence(candidate: PoiCandidate, stats: AccessStats) -> Fraction:
    """Pattern bytes the instruction wrote (or read) over all bytes it
    wrote (or read) during the whole run."""
    if not candidate.occurrences:
        raise ScoringError(f"{candidate.key} has no occurrences")
    totals = stats.read if candidate.kind is PoiKind.CONTIGUOUS_READ else stats.written
    total = totals.get(candidate.addr, 0)
    if total <= 0:
        raise ScoringError(f"no byte count for {candidate.addr:#x}")
    return Fraction(credited_bytes(candidate), total)


def confidence_class(score) -> int:
    """0 for [0, 0.1], c for (c/10, (c+1)/10]."""
    s = as_fraction(score)
    if s < 0 or s > 1:
        raise ScoringError(f"score {score} outside [0, 1]")
    if s <= Fraction(1, 10):
        return 0
    return math.ceil(s * 10) - 1


@dataclass(frozen=True)
class ScoredPoi:
    candidate: PoiCandidate
    score: Fraction

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ScoringError(f"score {self.score} outside [0, 1]")

    @property
    def confidence_class(self) -> int:
        return confidence_class(self.score)

    @property
    def key(self):
        return self.candidate.key


def score_candidate(candidate: PoiCandidate, dataset: DataSet, stats: AccessStats) -> ScoredPoi:
    if candidate.kind.is_contiguous:
        return ScoredPoi(candidate, contiguous_confidence(candidate, stats))
    return ScoredPoi(candidate, standalone_confidence(candidate, dataset))


def score_all(candidates: Iterable[PoiCandidate], dataset: DataSet, stats: AccessStats) -> list[ScoredPoi]:
    return [score_candidate(c, dataset, stats) for c in candidates]


def filter_pois(scored: Iterable[ScoredPoi], threshold) -> list[ScoredPoi]:
    t = as_fraction(threshold)
    if not 0 <= t <= 1:
        raise ScoringError(f"threshold {threshold} outside [0, 1]")
    return [s for s in scored if s.score >= t]
