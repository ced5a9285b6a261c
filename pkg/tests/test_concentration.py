import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvarbounds import distributions as dist
from cvarbounds.bounds import SupportBounds
from cvarbounds.concentration import (DiscrepancyBudget, brown_deviation_bounds, dkw_epsilon,
                                      ecdf, ecdf_cvar_bounds, order_stat_lower_bound,
                                      order_stat_upper_bound, surrogate_cvar_bounds)
from cvarbounds.riskcore import SampleBatch, cvar_sorted_form

from conftest import quantile_integral_oracle


def dkw_oracle(delta, n):
    mpmath.mp.dps = 50
    return float(mpmath.sqrt(mpmath.log(1 / mpmath.mpf(delta)) / (2 * n)))


class TestDkw:
    def test_unit_radius(self):
        assert dkw_epsilon(math.exp(-2), 1) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("delta,n", [(0.05, 1000), (0.05, 2), (0.5, 4), (1e-6, 10**6)])
    def test_against_high_precision(self, delta, n):
        assert dkw_epsilon(delta, n) == pytest.approx(dkw_oracle(delta, n), rel=1e-14)

    def test_reference_values(self):
        # high-precision values of sqrt(ln 20 / 2000) and sqrt(ln 20 / 4)
        assert dkw_epsilon(0.05, 1000) == pytest.approx(0.0387022756, abs=1e-10)
        assert dkw_epsilon(0.05, 2) == pytest.approx(0.8654091913, abs=1e-10)

    @pytest.mark.parametrize("delta,n", [(0, 5), (1, 5), (-0.1, 5), (0.1, 0), (0.1, 2.5)])
    def test_rejects(self, delta, n):
        with pytest.raises(ValueError):
            dkw_epsilon(delta, n)

    @given(st.floats(1e-9, 0.999), st.integers(1, 10**7), st.floats(0, 1))
    def test_budget_arithmetic(self, delta, n, eps_model):
        b = DiscrepancyBudget(delta, n, eps_model)
        assert b.eta ** 2 * 2 * n == pytest.approx(math.log(1 / delta), rel=1e-12)
        assert b.eps_prime == min(eps_model + b.eta, 1.0)

    def test_budget_rejects(self):
        with pytest.raises(ValueError):
            DiscrepancyBudget(0.05, 10, 1.5)
        with pytest.raises(ValueError):
            DiscrepancyBudget(1.0, 10)


class TestEcdfBounds:
    def test_ecdf(self):
        f = ecdf(SampleBatch([5]))
        assert list(f.breakpoints) == [5] and list(f.levels) == [1]

    def test_example_upper(self):
        b = SampleBatch([1, 2, 3, 4])
        r = ecdf_cvar_bounds(b, 0.5, 0.5, SupportBounds.common(0, 4))
        eps = math.sqrt(math.log(2) / 8)
        assert r.inputs["eps"] == pytest.approx(eps, abs=1e-15)
        assert quantile_integral_oracle(ecdf(b), 0.5 - eps) == pytest.approx(4.0)
        assert r.upper == 4.0 and r.case_taken == ("U_main", "L_main")
        assert r.guarantee == 0.5

    def test_example_degenerate_upper(self):
        r = ecdf_cvar_bounds(SampleBatch([1, 4]), 0.5, 0.05, SupportBounds.common(0, 4))
        assert r.upper == 4 and "U_degenerate" in r.case_taken

    def test_point_sample(self):
        r = ecdf_cvar_bounds(SampleBatch([0.3] * 100), 0.2, 0.05, SupportBounds.common(0.3, 0.3))
        assert r.lower == pytest.approx(0.3, abs=1e-12) and r.upper == pytest.approx(0.3, abs=1e-12)

    def test_missing_support(self):
        r = ecdf_cvar_bounds(SampleBatch([1, 2, 3]), 0.5, 0.05, SupportBounds())
        assert r.upper is None and r.absent["upper"] == "missing_upper_support"
        assert r.lower is None and r.absent["lower"] == "missing_lower_support"
        r = ecdf_cvar_bounds(SampleBatch(np.arange(1000.0)), 0.2, 0.05, SupportBounds())
        assert r.lower is not None and r.upper is None

    def test_support_conflicts(self):
        with pytest.raises(ValueError):
            ecdf_cvar_bounds(SampleBatch([1, 5]), 0.5, 0.05, SupportBounds.common(0, 4))
        with pytest.raises(ValueError):
            ecdf_cvar_bounds(SampleBatch([1, 5]), 0.5, 1.0, SupportBounds.common(0, 6))

    def test_lower_split_is_strict(self):
        # alpha + eps == 1 exactly: the sample-based bound takes the degenerate branch
        n, delta = 8, math.exp(-1.0)
        eps = dkw_epsilon(delta, n)
        alpha = 1.0 - eps
        assert alpha + eps == 1.0
        b = SampleBatch(np.linspace(0, 1, n))
        r = ecdf_cvar_bounds(b, alpha, delta, SupportBounds.common(0, 1))
        assert "L_degenerate" in r.case_taken
        s = surrogate_cvar_bounds(b, alpha, DiscrepancyBudget(delta, n, 0.0),
                                  SupportBounds.common(0, 1))
        assert "L_main" in s.case_taken
        assert s.lower == pytest.approx(r.lower, abs=1e-12)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=80), st.floats(0.01, 1), st.floats(0.001, 0.99))
    def test_brackets_point_estimate(self, vals, alpha, delta):
        b = SampleBatch(vals)
        r = ecdf_cvar_bounds(b, alpha, delta, SupportBounds.common(0, 1))
        est = cvar_sorted_form(b, alpha)
        assert r.lower <= est + 1e-9 and est <= r.upper + 1e-9
        assert 0 - 1e-9 <= r.lower and r.upper <= 1 + 1e-9


class TestSurrogate:
    def test_zero_model_eps_is_bitwise_ecdf(self, rng):
        for n in (3, 50, 500):
            b = SampleBatch(rng.uniform(-1, 1, n))
            s = SupportBounds.common(-1, 1)
            e = ecdf_cvar_bounds(b, 0.2, 0.05, s)
            u = surrogate_cvar_bounds(b, 0.2, DiscrepancyBudget(0.05, n, 0.0), s)
            assert (e.lower, e.upper) == (u.lower, u.upper)

    def test_uninformative(self):
        b = SampleBatch([0.1, 0.2, 0.3])
        r = surrogate_cvar_bounds(b, 0.2, DiscrepancyBudget(0.05, 3, 1.0), SupportBounds(-1, 1, 0, 0.5))
        assert r.upper == 1.0 and "U_degenerate" in r.case_taken
        assert r.lower == pytest.approx(-1.0, abs=1e-12)

    def test_rejects_mismatch(self):
        with pytest.raises(ValueError):
            surrogate_cvar_bounds(SampleBatch([0.1, 0.2]), 0.2, DiscrepancyBudget(0.05, 3), SupportBounds.common(0, 1))

    def test_gmm_from_normal(self):
        gmm = dist.five_component_gmm()
        normal = dist.moment_matched_normal(gmm)
        eps = dist.binned_discrepancy(gmm, normal, 10_000, -1, 1)
        ys = dist.sample(normal, 1000, 42)
        r = surrogate_cvar_bounds(ys, 0.2, DiscrepancyBudget(0.05, 1000, eps), SupportBounds.common(-1, 1))
        truth = dist.true_cvar(gmm, 0.2, 1_000_001)
        assert r.lower is not None and r.upper is not None
        assert r.lower <= truth <= r.upper


class TestBaselines:
    def test_brown(self):
        up, down = brown_deviation_bounds(0.2, 0.05, 1000, 0, 1)
        assert up == pytest.approx(math.sqrt(5 * math.log(60) / 200), rel=1e-14)
        assert up == pytest.approx(0.3199353279, abs=1e-10)
        assert down == pytest.approx(5 * math.sqrt(math.log(20) / 2000), rel=1e-14)
        with pytest.raises(ValueError):
            brown_deviation_bounds(0.2, 0.05, 1000, 0, 0)

    def test_order_stat_examples(self):
        b = SampleBatch([1, 2, 3, 4])
        r = ecdf_cvar_bounds(b, 0.5, 0.5, SupportBounds.common(0, 4))
        assert order_stat_upper_bound(b, 0.5, 0.5, 4) == pytest.approx(r.upper, abs=1e-12)
        assert order_stat_lower_bound(b, 0.5, 0.5, 0) == pytest.approx(r.lower, abs=1e-12)
        c = SampleBatch([2.5] * 7)
        assert order_stat_upper_bound(c, 0.3, 0.1, 2.5) == 2.5
        assert order_stat_lower_bound(c, 0.3, 0.1, 2.5) == 2.5

    def test_order_stat_rejects(self):
        b = SampleBatch([1, 2])
        with pytest.raises(ValueError):
            order_stat_upper_bound(b, 0.5, 0.6, 3)
        with pytest.raises(ValueError):
            order_stat_upper_bound(b, 0.5, 0.1, 1.5)
        with pytest.raises(ValueError):
            order_stat_lower_bound(b, 0.5, 0.1, 1.5)

    @given(st.integers(0, 2**32 - 1))
    def test_coincidence(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 300))
        x = rng.normal(size=n) * rng.uniform(0.1, 5)
        if rng.random() < 0.3:
            x = np.round(x)  # ties
        b = SampleBatch(x)
        delta = float(rng.uniform(1e-4, 0.5))
        alpha = float(rng.uniform(0.01, 1.0))
        lo_s, hi_s = b.sorted[0] - rng.exponential(), b.sorted[-1] + rng.exponential()
        r = ecdf_cvar_bounds(b, alpha, delta, SupportBounds.common(lo_s, hi_s))
        assert abs(order_stat_upper_bound(b, alpha, delta, hi_s) - r.upper) <= 1e-9 * max(1, abs(r.upper))
        # the two lower forms also agree in the degenerate branch once eps is clipped to 1
        assert abs(order_stat_lower_bound(b, alpha, delta, lo_s) - r.lower) <= 1e-9 * max(1, abs(r.lower))
        est = cvar_sorted_form(b, alpha)
        assert order_stat_lower_bound(b, alpha, delta, lo_s) <= est + 1e-9
        assert est <= order_stat_upper_bound(b, alpha, delta, hi_s) + 1e-9
