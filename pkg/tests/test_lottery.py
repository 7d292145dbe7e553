"""Known-claims mechanisms against exact enumeration and frozen values."""

import numpy as np
import pytest

from fairlot import (
    ClaimProfile,
    LotteryConfig,
    Mechanism,
    RandomSource,
    bf_lottery,
    bf_weights,
    check_bf_compliance,
    iterative_weighted_selection,
    partial_bf_lottery,
    top_k,
    unweighted_lottery,
)
from fairlot.core import ConfigurationError
from fairlot.lottery import ZeroClaimsError, uniform_weights

from oracles import (
    binomial_3sigma,
    enumerate_inclusion_probabilities,
    enumerate_partial_bf_inclusion,
)

DRAWS = 20_000


def _empirical_inclusion(fn, n, draws, seed=0):
    counts = np.zeros(n)
    for it in range(draws):
        counts += fn(RandomSource(seed, it))
    return counts / draws


class TestBFWeights:
    def test_already_normalized(self):
        np.testing.assert_allclose(bf_weights([0.5, 0.3, 0.2]), [0.5, 0.3, 0.2])

    def test_equal_claims_equal_chance(self):
        np.testing.assert_allclose(bf_weights([0.4, 0.4]), [0.5, 0.5])

    def test_zero_claim_gets_zero_weight(self):
        np.testing.assert_allclose(bf_weights([0.9, 0.1, 0.0]), [0.9, 0.1, 0.0])

    def test_all_zero_signals_fallback(self):
        with pytest.raises(ZeroClaimsError):
            bf_weights([0.0, 0.0])


class TestTopK:
    def test_selects_largest(self):
        r = top_k(ClaimProfile([0.2, 0.9, 0.5]), k=2)
        np.testing.assert_array_equal(r.outcomes, [0, 1, 1])
        assert list(r.selected_order) == [1, 2]

    def test_tie_break_by_id(self):
        r = top_k(ClaimProfile([0.5, 0.5, 0.1]), k=1)
        np.testing.assert_array_equal(r.outcomes, [1, 0, 0])

    def test_k_equals_n(self):
        r = top_k(ClaimProfile([0.1, 0.2]), k=2)
        assert r.outcomes.sum() == 2


class TestIterativeSelection:
    def test_single_round_probabilities(self):
        # one BF round: selection frequencies converge to the claims
        p = ClaimProfile([0.5, 0.3, 0.2])
        freq = _empirical_inclusion(
            lambda rng: bf_lottery(p, 1, rng)[0].outcomes, 3, DRAWS
        )
        for i, target in enumerate([0.5, 0.3, 0.2]):
            assert abs(freq[i] - target) < binomial_3sigma(target, DRAWS)

    def test_two_round_inclusion_frozen_value(self):
        # P(weakest of [0.5, 0.3, 0.2] included when k=2) = 17/35,
        # from 1 - [0.5*(0.3/0.5) + 0.3*(0.5/0.7)]
        target = 17.0 / 35.0
        oracle = enumerate_inclusion_probabilities([0.5, 0.3, 0.2], 2)
        assert abs(oracle[2] - target) < 1e-12
        p = ClaimProfile([0.5, 0.3, 0.2])
        freq = _empirical_inclusion(
            lambda rng: bf_lottery(p, 2, rng)[0].outcomes, 3, DRAWS, seed=1
        )
        assert abs(freq[2] - target) < binomial_3sigma(target, DRAWS)

    def test_k_equals_n_selects_everyone(self):
        p = ClaimProfile([0.9, 0.1, 0.4, 0.2])
        r, trace = bf_lottery(p, 4, RandomSource(7))
        assert r.outcomes.sum() == 4
        assert len(trace.rounds) == 4

    def test_trace_survivors_shrink_and_chosen_positive(self):
        p = ClaimProfile([0.5, 0.3, 0.2, 0.7])
        _, trace = bf_lottery(p, 3, RandomSource(11))
        sizes = [rec.survivors.size for rec in trace.rounds]
        assert sizes == [4, 3, 2]
        for rec in trace.rounds:
            w = rec.weights.weights[list(rec.weights.ids).index(rec.chosen)]
            assert w > 0.0

    def test_trace_weights_pass_bf_when_claims_positive(self):
        p = ClaimProfile([0.15, 0.82, 0.41, 0.64, 0.33])
        _, trace = bf_lottery(p, 5, RandomSource(3))
        assert check_bf_compliance(p, trace.weights_per_round()).ok

    def test_zero_claim_fallback_recorded(self):
        p = ClaimProfile([0.8, 0.0, 0.0])
        r, _ = iterative_weighted_selection(
            p, 2, bf_weights, RandomSource(4), mechanism="bf_lottery"
        )
        assert "zero_claim_fallback" in r.mechanism
        assert r.outcomes[0] == 1  # positive claim must win before fallback

    def test_fallback_disabled_raises(self):
        p = ClaimProfile([0.8, 0.0, 0.0])
        with pytest.raises(ConfigurationError):
            iterative_weighted_selection(
                p, 2, bf_weights, RandomSource(4), zero_claim_fallback=False
            )

    def test_reproducible_for_equal_sources(self):
        p = ClaimProfile([0.5, 0.3, 0.2, 0.7, 0.1])
        a, _ = bf_lottery(p, 3, RandomSource(99, 2))
        b, _ = bf_lottery(p, 3, RandomSource(99, 2))
        np.testing.assert_array_equal(a.outcomes, b.outcomes)
        np.testing.assert_array_equal(a.selected_order, b.selected_order)

    def test_claim_scale_invariance(self):
        # BF weights are ratios: scaling claims leaves the draws unchanged
        base = np.array([0.9, 0.62, 0.31, 0.105, 0.44])
        a, _ = bf_lottery(ClaimProfile(base), 3, RandomSource(5, 1))
        b, _ = bf_lottery(ClaimProfile(base * 0.37), 3, RandomSource(5, 1))
        np.testing.assert_array_equal(a.outcomes, b.outcomes)


class TestUnweightedLottery:
    def test_k_equals_n(self):
        r = unweighted_lottery(ClaimProfile([0.1, 0.2, 0.3, 0.4]), 4, RandomSource(0))
        assert r.outcomes.sum() == 4

    def test_two_individuals_half_each(self):
        p = ClaimProfile([0.9, 0.1])
        freq = _empirical_inclusion(
            lambda rng: unweighted_lottery(p, 1, rng).outcomes, 2, DRAWS, seed=2
        )
        assert abs(freq[0] - 0.5) < binomial_3sigma(0.5, DRAWS)

    def test_inclusion_probability_k_over_n(self):
        p = ClaimProfile([0.5, 0.4, 0.3, 0.2, 0.1])
        freq = _empirical_inclusion(
            lambda rng: unweighted_lottery(p, 2, rng).outcomes, 5, DRAWS, seed=3
        )
        for f in freq:
            assert abs(f - 0.4) < binomial_3sigma(0.4, DRAWS)


class TestPartialBF:
    def test_degenerate_full_bf(self):
        # k' = k, n' = n: distribution identical to the full BF lottery
        claims = [0.5, 0.3, 0.2]
        cfg = LotteryConfig(k=2, n=3, mechanism=Mechanism.PARTIAL_BF, k_prime=2, n_prime=3)
        oracle = enumerate_partial_bf_inclusion(claims, 2, 2, 3)
        np.testing.assert_allclose(
            oracle, enumerate_inclusion_probabilities(claims, 2), atol=1e-12
        )
        p = ClaimProfile(claims)
        freq = _empirical_inclusion(
            lambda rng: partial_bf_lottery(p, cfg, rng)[0].outcomes, 3, DRAWS, seed=4
        )
        for i in range(3):
            assert abs(freq[i] - oracle[i]) < binomial_3sigma(oracle[i], DRAWS)

    def test_frozen_band_probabilities(self):
        # n=8, k=2, k'=1, n'=2: strongest always wins, second slot split
        # 0.8/1.5 vs 0.7/1.5
        claims = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]
        oracle = enumerate_partial_bf_inclusion(claims, 2, 1, 2)
        np.testing.assert_allclose(oracle[:3], [1.0, 0.8 / 1.5, 0.7 / 1.5], atol=1e-12)
        assert oracle[3:].sum() == 0.0
        cfg = LotteryConfig(k=2, n=8, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=2)
        p = ClaimProfile(claims)
        freq = _empirical_inclusion(
            lambda rng: partial_bf_lottery(p, cfg, rng)[0].outcomes, 8, DRAWS, seed=5
        )
        assert freq[0] == 1.0
        assert abs(freq[1] - 0.8 / 1.5) < binomial_3sigma(0.8 / 1.5, DRAWS)

    def test_top_slice_never_loses(self):
        p = ClaimProfile([0.9, 0.8, 0.7, 0.6, 0.5, 0.4])
        cfg = LotteryConfig(k=3, n=6, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=3)
        for it in range(50):
            r, _ = partial_bf_lottery(p, cfg, RandomSource(6, it))
            assert r.outcomes[0] == 1 and r.outcomes[1] == 1

    def test_kprime_zero_equals_top_k(self):
        p = ClaimProfile([0.2, 0.9, 0.5, 0.7])
        cfg = LotteryConfig(k=2, n=4, mechanism=Mechanism.PARTIAL_BF, k_prime=0)
        r, trace = partial_bf_lottery(p, cfg, RandomSource(12))
        t = top_k(p, 2)
        np.testing.assert_array_equal(r.outcomes, t.outcomes)
        np.testing.assert_array_equal(r.selected_order, t.selected_order)
        assert len(trace.rounds) == 0

    def test_trace_exposes_slices(self):
        p = ClaimProfile([0.9, 0.8, 0.7, 0.6])
        cfg = LotteryConfig(k=2, n=4, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=2)
        _, trace = partial_bf_lottery(p, cfg, RandomSource(1))
        assert list(trace.meta["deterministic_ids"]) == [0]
        assert list(trace.meta["band_ids"]) == [1, 2]


class TestMonotonicity:
    def test_inclusion_monotone_in_claims(self):
        # enumeration oracle, several small profiles, all k
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            claims = rng.uniform(0.05, 1.0, n)
            for k in range(1, n + 1):
                q = enumerate_inclusion_probabilities(claims, k)
                for i in range(n):
                    for j in range(n):
                        if claims[i] > claims[j]:
                            assert q[i] >= q[j] - 1e-12
