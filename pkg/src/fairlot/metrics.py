"""Utility, expected utility, systemic exclusion rate, and tradeoff frontiers."""

from __future__ import annotations

from dataclasses import dataclass
from math import floor
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import AllocationResult, FairlotError, UtilityGroundTruth, ValidationError


class UnsupportedMetricError(FairlotError):
    """The ground truth lacks the field this metric needs."""


FRONTIER_BUCKET = 0.005  # utility-delta bin width for frontier extraction


@dataclass(frozen=True, eq=False)
class EnsembleOutcomes:
    """m x n binary outcome matrix: one row per decision-maker."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int8)
        if m.ndim != 2 or m.shape[0] < 1:
            raise ValidationError("outcomes must be a 2-d matrix with m >= 1 rows")
        if not np.isin(m, (0, 1)).all():
            raise ValidationError("outcomes must be 0/1")
        object.__setattr__(self, "matrix", m)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class FrontierPoint:
    utility_delta: float
    ser: float
    config: str

    def __post_init__(self):
        if not (0.0 <= self.ser <= 1.0):
            raise ValidationError(f"ser must lie in [0, 1], got {self.ser}")


def utility(result: AllocationResult, truth: UtilityGroundTruth, k: Optional[int] = None) -> float:
    """Precision of the selection: fraction of winners with a realized
    positive outcome."""
    if truth.realized is None:
        raise UnsupportedMetricError("utility needs realized outcomes")
    if truth.n != result.outcomes.size:
        raise ValidationError("ground truth length differs from outcomes")
    k = result.k if k is None else k
    if k != result.k:
        raise ValidationError(f"result selects {result.k} individuals, not k={k}")
    sel = result.outcomes == 1
    return float(truth.realized[sel].sum()) / k


def expected_utility(
    result: AllocationResult, truth: UtilityGroundTruth, k: Optional[int] = None
) -> float:
    """Mean success probability over the selected individuals."""
    if truth.probabilities is None:
        raise UnsupportedMetricError("expected utility needs probabilities")
    if truth.n != result.outcomes.size:
        raise ValidationError("ground truth length differs from outcomes")
    k = result.k if k is None else k
    if k != result.k:
        raise ValidationError(f"result selects {result.k} individuals, not k={k}")
    sel = result.outcomes == 1
    return float(truth.probabilities[sel].sum()) / k


def ser(outcomes: "EnsembleOutcomes | np.ndarray") -> float:
    """Systemic exclusion rate: fraction of individuals with a negative
    outcome from every one of the m > 1 decision-makers."""
    mat = outcomes.matrix if isinstance(outcomes, EnsembleOutcomes) else EnsembleOutcomes(np.asarray(outcomes)).matrix
    if mat.shape[0] <= 1:
        raise ValidationError("SER needs m > 1 decision-makers")
    excluded_everywhere = (mat == 0).all(axis=0)
    return float(excluded_everywhere.mean())


def expected_ser(inclusion_probabilities: np.ndarray) -> float:
    """Analytic SER for independent decision-makers: mean over individuals of
    the product of per-decision-maker exclusion probabilities."""
    q = np.asarray(inclusion_probabilities, dtype=np.float64)
    if q.ndim != 2:
        raise ValidationError("inclusion probabilities must be an m x n matrix")
    if q.min() < 0.0 or q.max() > 1.0:
        raise ValidationError("inclusion probabilities must lie in [0, 1]")
    return float(np.prod(1.0 - q, axis=0).mean())


def frontier(
    points: Iterable[FrontierPoint], bucket: float = FRONTIER_BUCKET
) -> list[FrontierPoint]:
    """Pareto-minimal SER envelope over utility-delta buckets.

    Deltas are binned at `bucket` width; each bin keeps its lowest-SER point,
    then any point dominated by a cheaper-or-equal, strictly-lower-SER point
    is dropped. Result sorted by utility_delta.
    """
    best: dict[int, FrontierPoint] = {}
    for p in points:
        b = floor(p.utility_delta / bucket + 1e-12)
        cur = best.get(b)
        if cur is None or (p.ser, p.utility_delta) < (cur.ser, cur.utility_delta):
            best[b] = p
    out: list[FrontierPoint] = []
    running = np.inf
    for p in sorted(best.values(), key=lambda p: (p.utility_delta, p.ser)):
        if p.ser < running:
            out.append(p)
            running = p.ser
    return out
