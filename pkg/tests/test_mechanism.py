import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpledger.mechanism import (
    PrivacyParams,
    compute_sigma,
    epsilon_for_sigma,
    gaussian_mechanism,
    gaussian_upper_tail,
    sensitivity_of,
    threshold_grid,
    verify_dp_guarantee,
)
from dpledger.queries import (
    ColumnSpec,
    QueryDescriptor,
    QueryKind,
    Schema,
    UnknownColumnError,
)

# Independently evaluated sqrt(2 ln(1.25/1e-5)) at 30-digit precision.
SIGMA_EPS1_D1E5_S1 = 4.84480526260538942125864215759
# Independently evaluated sqrt(2 ln 25) * 2.
SIGMA_EPS1_D005_S2 = 5.07454496471807864042965177259


def brute_force_sensitivity(query, domain, max_rows=3):
    """Largest |answer change| over all tiny datasets and add-one neighbors.

    Enumerates every dataset with at most ``max_rows`` rows drawn from
    ``domain`` and every way of appending one more row. Independent of the
    closed forms it checks: pure enumeration.
    """
    worst = 0.0
    for n in range(max_rows + 1):
        for rows in itertools.product(domain, repeat=n):
            base = query(rows)
            for extra in domain:
                worst = max(worst, abs(query(rows + (extra,)) - base))
    return worst


class TestSensitivity:
    def test_count_matches_brute_force(self, schema, count_all):
        oracle = brute_force_sensitivity(len, (0.0, 100.0))
        assert oracle == 1.0
        assert sensitivity_of(count_all, schema, n_public=5) == oracle

    def test_count_ignores_bounds(self, count_all):
        wide = Schema((ColumnSpec("age", -1e6, 1e6),))
        narrow = Schema((ColumnSpec("age", 0.0, 1.0),))
        assert sensitivity_of(count_all, wide) == sensitivity_of(count_all, narrow) == 1.0

    def test_sum_positive_bounds_matches_brute_force(self):
        oracle = brute_force_sensitivity(sum, (0.0, 100.0))
        assert oracle == 100.0
        schema = Schema((ColumnSpec("x", 0.0, 100.0),))
        desc = QueryDescriptor(QueryKind.SUM, column="x")
        assert sensitivity_of(desc, schema) == oracle

    def test_sum_mixed_bounds_matches_brute_force(self):
        oracle = brute_force_sensitivity(sum, (-50.0, 30.0))
        assert oracle == 50.0
        schema = Schema((ColumnSpec("x", -50.0, 30.0),))
        desc = QueryDescriptor(QueryKind.SUM, column="x")
        assert sensitivity_of(desc, schema) == oracle

    def test_mean_formula(self):
        schema = Schema((ColumnSpec("x", 0.0, 100.0),))
        desc = QueryDescriptor(QueryKind.MEAN, column="x")
        assert sensitivity_of(desc, schema, n_public=1000) == pytest.approx(0.1)

    def test_mean_requires_positive_n(self):
        schema = Schema((ColumnSpec("x", 0.0, 100.0),))
        desc = QueryDescriptor(QueryKind.MEAN, column="x")
        with pytest.raises(ValueError):
            sensitivity_of(desc, schema, n_public=0)

    def test_unknown_column(self, schema):
        desc = QueryDescriptor(QueryKind.SUM, column="height")
        with pytest.raises(UnknownColumnError):
            sensitivity_of(desc, schema)


class TestComputeSigma:
    def test_frozen_value(self):
        sigma = compute_sigma(PrivacyParams(1.0, 1e-5), 1.0)
        assert sigma == pytest.approx(SIGMA_EPS1_D1E5_S1, rel=1e-12)

    def test_frozen_value_bigger_delta(self):
        sigma = compute_sigma(PrivacyParams(1.0, 0.05), 2.0)
        assert sigma == pytest.approx(SIGMA_EPS1_D005_S2, rel=1e-12)

    def test_doubling_epsilon_halves_sigma_exactly(self):
        lo = compute_sigma(PrivacyParams(1.0, 1e-5), 1.0)
        hi = compute_sigma(PrivacyParams(2.0, 1e-5), 1.0)
        assert hi == lo / 2.0

    @given(k=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False))
    def test_epsilon_scaling_law(self, k):
        base = compute_sigma(PrivacyParams(1.0, 1e-5), 1.0)
        scaled = compute_sigma(PrivacyParams(k, 1e-5), 1.0)
        assert scaled == pytest.approx(base / k, rel=1e-14)

    @given(
        d1=st.floats(min_value=1e-9, max_value=0.5, allow_nan=False),
        d2=st.floats(min_value=1e-9, max_value=0.5, allow_nan=False),
    )
    def test_monotone_decreasing_in_delta(self, d1, d2):
        lo, hi = sorted((d1, d2))
        sigma_lo = compute_sigma(PrivacyParams(1.0, lo), 1.0)
        sigma_hi = compute_sigma(PrivacyParams(1.0, hi), 1.0)
        assert sigma_lo >= sigma_hi
        # Strict once the gap is wider than float rounding can swallow.
        if hi > lo * (1 + 1e-9):
            assert sigma_lo > sigma_hi

    def test_increasing_in_sensitivity(self):
        p = PrivacyParams(1.0, 1e-5)
        assert compute_sigma(p, 2.0) > compute_sigma(p, 1.0)

    def test_inversion_round_trip(self):
        p = PrivacyParams(0.7, 1e-4)
        sigma = compute_sigma(p, 3.0)
        assert epsilon_for_sigma(sigma, p.delta, 3.0) == pytest.approx(
            p.epsilon, rel=1e-12
        )

    @pytest.mark.parametrize("epsilon,delta", [(0.0, 1e-5), (-1.0, 1e-5), (1.0, 0.0),
                                               (1.0, 0.6), (1.0, 1.0), (float("nan"), 1e-5)])
    def test_invalid_params(self, epsilon, delta):
        with pytest.raises(ValueError):
            PrivacyParams(epsilon, delta)


class TestGaussianMechanism:
    def test_zero_sigma_is_identity(self):
        rng = np.random.default_rng(0)
        assert gaussian_mechanism(42.0, 0.0, rng) == 42.0

    def test_same_seed_same_output(self):
        a = gaussian_mechanism(10.0, 2.5, np.random.default_rng(99))
        b = gaussian_mechanism(10.0, 2.5, np.random.default_rng(99))
        assert a == b

    def test_sample_mean_near_true_value(self):
        sigma = 4.84480526260538942
        n = 100_000
        rng = np.random.default_rng(1234)
        draws = np.array([gaussian_mechanism(7.0, sigma, rng) for _ in range(n)])
        # Standard error of the mean bounds the drift at 4 sigmas.
        assert abs(draws.mean() - 7.0) < 4.0 * sigma / math.sqrt(n)

    def test_sample_variance_within_five_percent(self):
        sigma = 3.0
        rng = np.random.default_rng(54321)
        draws = np.array([gaussian_mechanism(0.0, sigma, rng) for _ in range(100_000)])
        assert abs(draws.var() - sigma**2) / sigma**2 < 0.05

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            gaussian_mechanism(0.0, -1.0, np.random.default_rng(0))


class TestVerifyDpGuarantee:
    @pytest.mark.parametrize("epsilon", [0.1, 0.5, 1.0])
    @pytest.mark.parametrize("delta", [1e-5, 1e-3])
    def test_calibrated_sigma_passes(self, epsilon, delta):
        params = PrivacyParams(epsilon, delta)
        sigma = compute_sigma(params, 1.0)
        grid = threshold_grid(1.0, sigma)
        assert verify_dp_guarantee(params, 1.0, grid) is True

    def test_undernoised_sigma_fails(self):
        params = PrivacyParams(1.0, 1e-5)
        sigma = compute_sigma(params, 1.0) / 10.0
        grid = threshold_grid(1.0, sigma)
        assert verify_dp_guarantee(params, 1.0, grid, sigma=sigma) is False

    def test_zero_sensitivity_always_passes(self):
        params = PrivacyParams(1.0, 1e-5)
        grid = threshold_grid(0.0, 1.0)
        assert verify_dp_guarantee(params, 0.0, grid, sigma=1.0) is True
        assert verify_dp_guarantee(params, 0.0, [], sigma=0.0) is True

    def test_grid_must_span_tails(self):
        params = PrivacyParams(1.0, 1e-5)
        with pytest.raises(ValueError):
            verify_dp_guarantee(params, 1.0, np.linspace(-1, 1, 100))

    def test_tail_probability_sane(self):
        assert gaussian_upper_tail(0.0, 0.0, 1.0) == pytest.approx(0.5)
        assert gaussian_upper_tail(10.0, 0.0, 1.0) < 1e-20
