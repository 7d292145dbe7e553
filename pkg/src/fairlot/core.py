"""Shared domain types and the Broome-fairness compliance checker.

Claim scores live in [0, 1]; an allocation hands out exactly k positive
outcomes among n individuals. The two fairness conditions checked here:

* BF.1 - a strictly stronger claim must get a strictly larger selection
  weight in every round where both individuals are still unselected.
* BF.2 - a strictly positive claim must get a strictly positive weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-9  # absolute tolerance on per-round weight normalization


class FairlotError(Exception):
    """Base class for package errors."""


class ValidationError(FairlotError):
    """A domain type invariant is violated."""


class StructuralError(FairlotError):
    """Inputs that should line up (lengths, id sets) do not."""


class ConfigurationError(FairlotError):
    """A mechanism or experiment configuration is invalid."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ClaimProfile:
    """Per-individual claim strengths plus stable identity indices."""

    claims: np.ndarray
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        claims = np.asarray(self.claims, dtype=np.float64)
        if claims.ndim != 1:
            raise ValidationError("claims must be a 1-d vector")
        if claims.size == 0:
            raise ValidationError("claims must be non-empty")
        if not np.all(np.isfinite(claims)):
            raise ValidationError("claims must be finite")
        if claims.min() < 0.0 or claims.max() > 1.0:
            raise ValidationError("every claim must lie in [0, 1]")
        ids = self.ids
        if ids is None:
            ids = np.arange(claims.size, dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape != claims.shape:
                raise ValidationError("ids and claims must have the same length")
            if np.unique(ids).size != ids.size:
                raise ValidationError("ids must be unique")
        object.__setattr__(self, "claims", _readonly(claims))
        object.__setattr__(self, "ids", _readonly(ids))

    @property
    def n(self) -> int:
        return self.claims.size


class Mechanism(str, Enum):
    TOP_K = "top_k"
    UNWEIGHTED = "unweighted"
    BF = "bf"
    PARTIAL_BF = "partial_bf"
    VARIANCE = "variance"
    OUTLIER = "outlier"
    DECISION_BOUNDARY = "decision_boundary"


_BANDED = (Mechanism.PARTIAL_BF, Mechanism.DECISION_BOUNDARY)


@dataclass(frozen=True)
class LotteryConfig:
    """k resources among n individuals; k_prime of them randomized over an
    n_prime-sized band for the banded (partial-BF style) mechanisms.

    k_prime = 0 is accepted as the documented degenerate limit in which a
    banded mechanism reduces exactly to top-k (n_prime is then ignored).
    """

    k: int
    n: int
    mechanism: Mechanism = Mechanism.BF
    k_prime: Optional[int] = None
    n_prime: Optional[int] = None

    def __post_init__(self):
        if not (1 <= self.k <= self.n):
            raise ConfigurationError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.mechanism in _BANDED:
            kp, npr = self.k_prime, self.n_prime
            if kp is None:
                raise ConfigurationError(f"{self.mechanism.value} requires k_prime")
            if not (0 <= kp <= self.k):
                raise ConfigurationError(f"k_prime must lie in [0, k], got {kp}")
            if kp > 0:
                if npr is None:
                    raise ConfigurationError(f"{self.mechanism.value} requires n_prime")
                hi = self.n - self.k + kp
                if not (kp < npr <= hi):
                    raise ConfigurationError(
                        f"n_prime must lie in ({kp}, {hi}], got {npr}"
                    )

    @classmethod
    def from_rates(
        cls,
        n: int,
        selection_rate: float,
        mechanism: Mechanism = Mechanism.BF,
        kprime_rate: Optional[float] = None,
        nprime_rate: Optional[float] = None,
    ) -> "LotteryConfig":
        """Build an absolute config from k/n, k'/k and n'/n fractions."""
        k = resolve_k(n, selection_rate)
        kp = npr = None
        if mechanism in _BANDED:
            if kprime_rate is None:
                raise ConfigurationError("banded mechanisms need kprime_rate")
            kp = int(round(kprime_rate * k))
            if kprime_rate > 0:
                kp = max(1, kp)
            if kp > 0:
                if nprime_rate is None:
                    raise ConfigurationError("banded mechanisms need nprime_rate")
                npr = int(round(nprime_rate * n))
        return cls(k=k, n=n, mechanism=mechanism, k_prime=kp, n_prime=npr)


def resolve_k(n: int, selection_rate: float) -> int:
    if not (0.0 < selection_rate <= 1.0):
        raise ConfigurationError(f"selection_rate must lie in (0, 1], got {selection_rate}")
    return max(1, int(round(selection_rate * n)))


@dataclass(frozen=True, eq=False)
class SelectionWeights:
    """Per-round selection weights over the not-yet-selected individuals."""

    round: int
    ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.round < 1:
            raise ValidationError("round index starts at 1")
        ids = np.asarray(self.ids, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if ids.shape != w.shape or ids.ndim != 1:
            raise StructuralError("ids and weights must be 1-d and the same length")
        if np.unique(ids).size != ids.size:
            raise ValidationError("survivor ids must be unique")
        if w.size and w.min() < 0.0:
            raise ValidationError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(
                f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {w.sum()!r}"
            )
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "weights", _readonly(w))


@dataclass(frozen=True, eq=False)
class AllocationResult:
    """Binary outcomes plus the order in which winners were chosen."""

    outcomes: np.ndarray
    selected_order: np.ndarray
    seed: int
    mechanism: str

    def __post_init__(self):
        out = np.asarray(self.outcomes, dtype=np.int8)
        order = np.asarray(self.selected_order, dtype=np.int64)
        if out.ndim != 1 or order.ndim != 1:
            raise ValidationError("outcomes and selected_order must be 1-d")
        if not np.isin(out, (0, 1)).all():
            raise ValidationError("outcomes must be 0/1")
        k = int(out.sum())
        if order.size != k:
            raise ValidationError(
                f"selected_order has {order.size} ids but {k} outcomes equal 1"
            )
        if np.unique(order).size != order.size:
            raise ValidationError("selected_order ids must be unique")
        object.__setattr__(self, "outcomes", _readonly(out))
        object.__setattr__(self, "selected_order", _readonly(order))

    @property
    def k(self) -> int:
        return int(self.outcomes.sum())


@dataclass(frozen=True, eq=False)
class UtilityGroundTruth:
    """Realized outcomes o*_i and/or success probabilities p_i."""

    realized: Optional[np.ndarray] = None
    probabilities: Optional[np.ndarray] = None

    def __post_init__(self):
        real, prob = self.realized, self.probabilities
        if real is None and prob is None:
            raise ValidationError("need realized outcomes or probabilities")
        if real is not None:
            real = np.asarray(real, dtype=np.int8)
            if real.ndim != 1 or not np.isin(real, (0, 1)).all():
                raise ValidationError("realized outcomes must be a 0/1 vector")
            object.__setattr__(self, "realized", _readonly(real))
        if prob is not None:
            prob = np.asarray(prob, dtype=np.float64)
            if prob.ndim != 1 or not np.all(np.isfinite(prob)):
                raise ValidationError("probabilities must be finite")
            if prob.min() < 0.0 or prob.max() > 1.0:
                raise ValidationError("probabilities must lie in [0, 1]")
            object.__setattr__(self, "probabilities", _readonly(prob))
        if real is not None and prob is not None and real.size != prob.size:
            raise ValidationError("realized and probabilities lengths differ")

    @property
    def n(self) -> int:
        return self.realized.size if self.realized is not None else self.probabilities.size


class Violation(NamedTuple):
    """One offending (round, i, j) pair; j is None for BF.2 violations."""

    kind: str  # "bf1" or "bf2"
    round: int
    i: int
    j: Optional[int]


@dataclass(frozen=True)
class ComplianceReport:
    bf1_ok: bool
    bf2_ok: bool
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.bf1_ok and self.bf2_ok


def canonical_sort(claims: ClaimProfile) -> np.ndarray:
    """Ids ordered by descending claim, ties broken by ascending id."""
    order = np.lexsort((claims.ids, -claims.claims))
    return claims.ids[order]


def _round_ok(c: np.ndarray, w: np.ndarray) -> tuple[bool, bool]:
    """Vectorized BF.1/BF.2 check for one round (no violation listing)."""
    bf2 = bool(np.all(w[c > 0.0] > 0.0))
    order = np.argsort(c, kind="stable")
    cs, ws = c[order], w[order]
    # group by unique claim level; BF.1 holds iff max weight of each level
    # is strictly below the min weight of every higher level (transitive
    # through adjacent levels).
    levels, starts = np.unique(cs, return_index=True)
    bf1 = True
    if levels.size > 1:
        bounds = np.append(starts, cs.size)
        maxes = np.array([ws[bounds[i]:bounds[i + 1]].max() for i in range(levels.size)])
        mins = np.array([ws[bounds[i]:bounds[i + 1]].min() for i in range(levels.size)])
        bf1 = bool(np.all(maxes[:-1] < mins[1:]))
    return bf1, bf2


def check_bf_compliance(
    claims: ClaimProfile, weights_per_round: Iterable[SelectionWeights]
) -> ComplianceReport:
    """Check BF.1 and BF.2 over every recorded round.

    Violations are enumerated as (round, i, j) id pairs for BF.1 and
    (round, i, None) for BF.2. Raises StructuralError if a round references
    ids unknown to the claim profile.
    """
    lookup = {int(i): float(c) for i, c in zip(claims.ids, claims.claims)}
    bf1_ok = bf2_ok = True
    violations: list[Violation] = []
    for sw in weights_per_round:
        try:
            c = np.array([lookup[int(i)] for i in sw.ids], dtype=np.float64)
        except KeyError as exc:
            raise StructuralError(f"round {sw.round} references unknown id {exc}") from exc
        w = sw.weights
        ok1, ok2 = _round_ok(c, w)
        if ok1 and ok2:
            continue
        ids = sw.ids
        if not ok2:
            bf2_ok = False
            for pos in np.flatnonzero((c > 0.0) & (w <= 0.0)):
                violations.append(Violation("bf2", sw.round, int(ids[pos]), None))
        if not ok1:
            bf1_ok = False
            # full pairwise enumeration only on failing rounds
            gt = c[:, None] > c[None, :]
            bad = gt & ~(w[:, None] > w[None, :])
            for a, b in zip(*np.nonzero(bad)):
                violations.append(Violation("bf1", sw.round, int(ids[a]), int(ids[b])))
    return ComplianceReport(bf1_ok, bf2_ok, tuple(violations))
