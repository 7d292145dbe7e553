"""Domain types, canonical sort, and the BF-compliance checker."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlot import (
    ClaimProfile,
    LotteryConfig,
    Mechanism,
    RandomSource,
    SelectionWeights,
    StructuralError,
    ValidationError,
    canonical_sort,
    check_bf_compliance,
)
from fairlot.core import ConfigurationError


class TestClaimProfile:
    def test_defaults_ids(self):
        p = ClaimProfile([0.5, 0.3, 0.2])
        assert p.n == 3
        np.testing.assert_array_equal(p.ids, [0, 1, 2])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            ClaimProfile([0.5, 1.2])
        with pytest.raises(ValidationError):
            ClaimProfile([-0.1])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValidationError):
            ClaimProfile([0.5, 0.3], ids=[1, 1])

    def test_is_immutable(self):
        p = ClaimProfile([0.5, 0.3])
        with pytest.raises(ValueError):
            p.claims[0] = 0.9


class TestLotteryConfig:
    def test_basic_bounds(self):
        with pytest.raises(ConfigurationError):
            LotteryConfig(k=0, n=5)
        with pytest.raises(ConfigurationError):
            LotteryConfig(k=6, n=5)

    def test_partial_bounds(self):
        # n' must lie in (k', n - k + k']
        LotteryConfig(k=2, n=8, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=2)
        with pytest.raises(ConfigurationError):
            LotteryConfig(k=2, n=8, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=1)
        with pytest.raises(ConfigurationError):
            LotteryConfig(k=2, n=8, mechanism=Mechanism.PARTIAL_BF, k_prime=1, n_prime=8)
        # degenerate k' = 0 accepted (top-k limit)
        LotteryConfig(k=2, n=8, mechanism=Mechanism.PARTIAL_BF, k_prime=0)

    def test_from_rates(self):
        cfg = LotteryConfig.from_rates(1000, 0.25, Mechanism.PARTIAL_BF, 0.5, 0.25)
        assert (cfg.k, cfg.k_prime, cfg.n_prime) == (250, 125, 250)


class TestCanonicalSort:
    def test_descending(self):
        assert list(canonical_sort(ClaimProfile([0.2, 0.9, 0.5]))) == [1, 2, 0]

    def test_tie_break_by_id(self):
        assert list(canonical_sort(ClaimProfile([0.5, 0.5]))) == [0, 1]

    def test_already_sorted_identity(self):
        assert list(canonical_sort(ClaimProfile([0.9, 0.5, 0.1]))) == [0, 1, 2]

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_pure_function(self, claims):
        p = ClaimProfile(claims)
        np.testing.assert_array_equal(canonical_sort(p), canonical_sort(p))


def _weights(t, ids, w):
    return SelectionWeights(round=t, ids=ids, weights=w)


class TestBFCompliance:
    def test_proportional_weights_pass(self):
        p = ClaimProfile([0.5, 0.3, 0.2])
        report = check_bf_compliance(p, [_weights(1, [0, 1, 2], [0.5, 0.3, 0.2])])
        assert report.bf1_ok and report.bf2_ok and not report.violations

    def test_top_k_violates_bf2(self):
        # deterministic allocation: positive claim with zero weight
        p = ClaimProfile([0.5, 0.3, 0.2])
        report = check_bf_compliance(p, [_weights(1, [0, 1, 2], [1.0, 0.0, 0.0])])
        assert not report.bf2_ok
        kinds = {v.kind for v in report.violations}
        assert "bf2" in kinds
        bf2_ids = {v.i for v in report.violations if v.kind == "bf2"}
        assert bf2_ids == {1, 2}

    def test_unweighted_violates_bf1(self):
        p = ClaimProfile([0.5, 0.5, 0.2])
        third = 1.0 / 3.0
        report = check_bf_compliance(p, [_weights(1, [0, 1, 2], [third, third, third])])
        assert not report.bf1_ok and report.bf2_ok
        assert any(v.kind == "bf1" and (v.i, v.j) in {(0, 2), (1, 2)} for v in report.violations)

    def test_unknown_id_is_structural(self):
        p = ClaimProfile([0.5, 0.5])
        with pytest.raises(StructuralError):
            check_bf_compliance(p, [_weights(1, [0, 7], [0.5, 0.5])])

    def test_multi_round_survivor_subsets(self):
        p = ClaimProfile([0.5, 0.3, 0.2])
        rounds = [
            _weights(1, [0, 1, 2], [0.5, 0.3, 0.2]),
            _weights(2, [1, 2], [0.6, 0.4]),
        ]
        assert check_bf_compliance(p, rounds).ok

    @given(
        st.lists(
            st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=12
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_proportional_rule_always_complies(self, claims):
        # claim-proportional weights satisfy both conditions whenever all
        # claims are strictly positive; claims are snapped to a 1e-6 grid
        # because sub-ulp claim gaps collapse to equal weights under float
        # division and cannot carry a strict inequality
        c = np.round(np.asarray(claims), 6)
        p = ClaimProfile(c)
        report = check_bf_compliance(p, [_weights(1, np.arange(c.size), c / c.sum())])
        assert report.ok


class TestRandomSource:
    def test_equal_pairs_replay(self):
        a = RandomSource(123, 5).generator().random(16)
        b = RandomSource(123, 5).generator().random(16)
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RandomSource(123, 5).generator().random(16)
        b = RandomSource(123, 6).generator().random(16)
        assert not np.array_equal(a, b)

    def test_stream_offsets(self):
        rs = RandomSource(9)
        assert rs.stream(3) == RandomSource(9, 3)
        assert rs.stream(3).stream(4) == RandomSource(9, 7)
