"""Allocation mechanisms over known claim scores.

Every randomized mechanism is built on one primitive: iterative weighted
selection without replacement (one winner per round, per-round weights
renormalized over the survivors, drawn by cumulative-sum inversion). The
sequential form is kept deliberately so a SelectionTrace can be audited
round by round against the BF conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    AllocationResult,
    ClaimProfile,
    ConfigurationError,
    LotteryConfig,
    Mechanism,
    SelectionWeights,
    canonical_sort,
)
from .rng import RandomSource, as_generator, seed_of

WeightRule = Callable[[np.ndarray], np.ndarray]


class ZeroClaimsError(ConfigurationError):
    """All surviving claims are zero; signals the unweighted fallback."""


def bf_weights(survivor_claims: np.ndarray) -> np.ndarray:
    """Broome-fair weights: w_i = c_i / sum of surviving claims.

    Raises ZeroClaimsError when no survivor has a positive claim, which
    callers may translate into the documented unweighted fallback.
    """
    c = np.asarray(survivor_claims, dtype=np.float64)
    total = float(c.sum())
    if total <= 0.0:
        raise ZeroClaimsError("no positive claims among survivors")
    return c / total


def uniform_weights(survivor_claims: np.ndarray) -> np.ndarray:
    """Equal chance for every survivor (violates BF.1 by design)."""
    m = np.asarray(survivor_claims).size
    return np.full(m, 1.0 / m)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    survivors: np.ndarray
    weights: SelectionWeights
    chosen: int


@dataclass(frozen=True)
class SelectionTrace:
    """Round-by-round record of a sequential lottery.

    meta carries mechanism-specific context, e.g. the deterministic and
    randomized id slices of a partial-BF lottery.
    """

    rounds: tuple[RoundRecord, ...]
    meta: dict = field(default_factory=dict)

    def weights_per_round(self) -> list[SelectionWeights]:
        return [r.weights for r in self.rounds]


def iterative_weighted_selection(
    claims: ClaimProfile,
    k: int,
    weight_rule: WeightRule,
    rng: RandomSource | np.random.Generator,
    *,
    zero_claim_fallback: bool = True,
    mechanism: str = "iterative_weighted",
) -> tuple[AllocationResult, SelectionTrace]:
    """Select k distinct individuals, one per round, weights from weight_rule.

    weight_rule maps the survivors' claims to a probability vector over the
    survivors (summing to 1). If it raises ZeroClaimsError and the fallback
    is enabled, remaining rounds use an unweighted lottery over the
    survivors and the mechanism descriptor records the fallback; otherwise a
    ConfigurationError propagates.
    """
    n = claims.n
    if not (1 <= k <= n):
        raise ConfigurationError(f"need 1 <= k <= n, got k={k}, n={n}")
    gen = as_generator(rng)
    alive = np.arange(n)
    rounds: list[RoundRecord] = []
    chosen_positions: list[int] = []
    fallback_used = False
    for t in range(1, k + 1):
        c_alive = claims.claims[alive]
        try:
            w = np.asarray(weight_rule(c_alive), dtype=np.float64)
        except ZeroClaimsError:
            if not zero_claim_fallback:
                raise ConfigurationError(
                    f"all-zero weights with {k - t + 1} slots remaining"
                )
            fallback_used = True
            w = uniform_weights(c_alive)
        sw = SelectionWeights(round=t, ids=claims.ids[alive], weights=w)
        cum = np.cumsum(w)
        u = gen.random()
        pick = int(np.searchsorted(cum, u, side="right"))
        pick = min(pick, w.size - 1)
        while w[pick] <= 0.0:  # float-boundary guard: never pick weight 0
            pick -= 1
        rounds.append(
            RoundRecord(t, claims.ids[alive].copy(), sw, int(claims.ids[alive][pick]))
        )
        chosen_positions.append(int(alive[pick]))
        alive = np.delete(alive, pick)
    outcomes = np.zeros(n, dtype=np.int8)
    outcomes[chosen_positions] = 1
    label = mechanism + ("+zero_claim_fallback" if fallback_used else "")
    result = AllocationResult(
        outcomes=outcomes,
        selected_order=claims.ids[chosen_positions],
        seed=seed_of(rng),
        mechanism=label,
    )
    return result, SelectionTrace(tuple(rounds))


def top_k(claims: ClaimProfile, k: int) -> AllocationResult:
    """Deterministic selection of the k largest claims (ties by ascending id)."""
    n = claims.n
    if not (1 <= k <= n):
        raise ConfigurationError(f"need 1 <= k <= n, got k={k}, n={n}")
    order_ids = canonical_sort(claims)
    selected = order_ids[:k]
    id_to_pos = {int(i): p for p, i in enumerate(claims.ids)}
    outcomes = np.zeros(n, dtype=np.int8)
    outcomes[[id_to_pos[int(i)] for i in selected]] = 1
    return AllocationResult(outcomes, selected, seed=0, mechanism="top_k")


def bf_lottery(
    claims: ClaimProfile, k: int, rng: RandomSource | np.random.Generator
) -> tuple[AllocationResult, SelectionTrace]:
    """Full Broome-fair lottery: per-round weights proportional to claims."""
    return iterative_weighted_selection(claims, k, bf_weights, rng, mechanism="bf_lottery")


def unweighted_lottery(
    claims: ClaimProfile, k: int, rng: RandomSource | np.random.Generator
) -> AllocationResult:
    """Uniform k-subset; every individual has inclusion probability k/n."""
    result, _ = iterative_weighted_selection(
        claims, k, uniform_weights, rng, mechanism="unweighted_lottery"
    )
    return result


def partial_bf_lottery(
    claims: ClaimProfile,
    cfg: LotteryConfig,
    rng: RandomSource | np.random.Generator,
) -> tuple[AllocationResult, SelectionTrace]:
    """Top k-k' claims selected outright, then a BF lottery for k' slots over
    the next n' individuals in canonical sort order.

    With k' = 0 this is exactly top_k (empty trace, band recorded as empty).
    """
    if cfg.mechanism not in (Mechanism.PARTIAL_BF, Mechanism.DECISION_BOUNDARY):
        raise ConfigurationError(f"config mechanism is {cfg.mechanism}, not a banded one")
    if cfg.n != claims.n:
        raise ConfigurationError(f"config n={cfg.n} but profile has n={claims.n}")
    k, kp = cfg.k, int(cfg.k_prime or 0)
    order_ids = canonical_sort(claims)
    det_ids = order_ids[: k - kp]
    id_to_pos = {int(i): p for p, i in enumerate(claims.ids)}
    mech = f"partial_bf(k'={kp},n'={cfg.n_prime or 0})"
    if kp == 0:
        outcomes = np.zeros(claims.n, dtype=np.int8)
        outcomes[[id_to_pos[int(i)] for i in det_ids]] = 1
        result = AllocationResult(outcomes, det_ids, seed=seed_of(rng), mechanism=mech)
        trace = SelectionTrace((), meta={"deterministic_ids": det_ids, "band_ids": order_ids[:0]})
        return result, trace
    npr = int(cfg.n_prime)
    band_ids = order_ids[k - kp : k - kp + npr]
    band_pos = np.array([id_to_pos[int(i)] for i in band_ids])
    band = ClaimProfile(claims.claims[band_pos], ids=band_ids)
    band_result, trace = iterative_weighted_selection(
        band, kp, bf_weights, rng, mechanism=mech
    )
    outcomes = np.zeros(claims.n, dtype=np.int8)
    outcomes[[id_to_pos[int(i)] for i in det_ids]] = 1
    outcomes[band_pos[band_result.outcomes == 1]] = 1
    selected_order = np.concatenate([det_ids, band_result.selected_order])
    result = AllocationResult(
        outcomes,
        selected_order,
        seed=seed_of(rng),
        mechanism=band_result.mechanism,  # carries any fallback marker
    )
    meta = {"deterministic_ids": det_ids, "band_ids": band_ids}
    return result, SelectionTrace(trace.rounds, meta=meta)


def allocate(
    claims: ClaimProfile,
    cfg: LotteryConfig,
    rng: Optional[RandomSource | np.random.Generator] = None,
) -> AllocationResult:
    """Dispatch on cfg.mechanism for the known-claims mechanisms."""
    if cfg.n != claims.n:
        raise ConfigurationError(f"config n={cfg.n} but profile has n={claims.n}")
    if cfg.mechanism == Mechanism.TOP_K:
        return top_k(claims, cfg.k)
    if rng is None:
        raise ConfigurationError(f"{cfg.mechanism.value} requires an rng")
    if cfg.mechanism == Mechanism.UNWEIGHTED:
        return unweighted_lottery(claims, cfg.k, rng)
    if cfg.mechanism == Mechanism.BF:
        return bf_lottery(claims, cfg.k, rng)[0]
    if cfg.mechanism in (Mechanism.PARTIAL_BF, Mechanism.DECISION_BOUNDARY):
        return partial_bf_lottery(claims, cfg, rng)[0]
    raise ConfigurationError(f"mechanism {cfg.mechanism} is not a known-claims mechanism")
