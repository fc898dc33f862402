from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from naeq.errors import InsufficientVariation, InvalidParameters, NonPositiveAlpha, NoSwitches
from naeq.microfound import (
    AdTargetingExperiment,
    DiscountExperiment,
    ShockDiscountSpec,
    ad_targeting_bias,
    cell_probabilities_exact,
    discount_elasticity,
    mills,
    shock_discount_alpha,
)

SMALL = dict(T=200_000)


# ---------------------------------------------------------------- discounts


@given(mu=st.fractions(Fraction(1, 100), Fraction(99, 100)),
       g1=st.fractions(0, 1), g2=st.fractions(0, 1), rho=st.fractions(-1, 1))
@settings(max_examples=200, deadline=None)
def test_cells_sum_to_one_exactly(mu, g1, g2, rho):
    cells = cell_probabilities_exact(mu, g1, g2, rho)
    assert sum(cells) == 1
    feasible = all(0 <= c <= 1 for c in cells)
    if not feasible:
        with pytest.raises(InvalidParameters):
            DiscountExperiment(mu_low=float(mu), gamma1=float(g1), gamma2=float(g2), rho=float(rho))


def test_uncorrelated_discounts_are_unbiased():
    r = discount_elasticity(DiscountExperiment(rho=0.0))
    assert r.implied_alpha == 1.0
    assert r.eta_hat == pytest.approx(r.eta_true_derived)


def test_reference_values():
    e = DiscountExperiment()
    r = discount_elasticity(e)
    P = 22.0
    assert r.eta_hat == pytest.approx((1 - 0.8 * 0.5) * P / (20 - 0.2 * P))
    assert r.eta_true_derived == pytest.approx(P / (20 - 0.2 * P))
    assert r.eta_true_printed == pytest.approx(P / (20 - 1.8 * P))
    assert r.implied_alpha == pytest.approx(0.6)


def test_monte_carlo_matches_analytic():
    e = DiscountExperiment(T=1_000_000, seed=11)
    mc = discount_elasticity(e, "monte-carlo")
    assert abs(mc.eta_hat - discount_elasticity(e).eta_hat) <= 3 * mc.se
    assert mc.prng == "PCG64"


def test_monte_carlo_is_deterministic():
    e = DiscountExperiment(seed=4, **SMALL)
    a, b = discount_elasticity(e, "monte-carlo"), discount_elasticity(e, "monte-carlo")
    assert a.eta_hat == b.eta_hat and a.se == b.se


def test_correlation_lowers_estimate():
    base = discount_elasticity(DiscountExperiment(rho=0.0)).eta_hat
    assert discount_elasticity(DiscountExperiment(rho=0.3)).eta_hat < base


@given(r1=st.floats(-1, 1), r2=st.floats(-1, 1), g=st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_estimate_weakly_decreasing_in_correlation(r1, r2, g):
    lo, hi = sorted((r1, r2))
    e_lo = discount_elasticity(DiscountExperiment(rho=lo, gamma1=g)).eta_hat
    e_hi = discount_elasticity(DiscountExperiment(rho=hi, gamma1=g)).eta_hat
    assert e_hi <= e_lo + 1e-12


def test_empty_arm():
    e = DiscountExperiment(mu_low=1e-9, T=10, seed=0)
    with pytest.raises(InsufficientVariation):
        discount_elasticity(e, "monte-carlo")


@pytest.mark.parametrize("kwargs", [dict(p_low=24, p_high=20), dict(mu_low=1.0), dict(rho=1.5), dict(gamma1=2)])
def test_discount_invariants(kwargs):
    with pytest.raises(InvalidParameters):
        DiscountExperiment(**kwargs)


# ---------------------------------------------------------------- ad targeting


def test_mills_ratio_accuracy():
    for x in (-8.0, -2.0, 0.0, 1.0, 6.0):
        assert mills(x) == pytest.approx(norm.pdf(x) / norm.cdf(x), rel=1e-12)


def test_analytic_values_at_zero_one():
    r = ad_targeting_bias(AdTargetingExperiment())
    rising = 1 + norm.pdf(0) / norm.cdf(0)
    falling = 1 + norm.pdf(1) / norm.cdf(1)
    assert r.rising == pytest.approx(rising, abs=1e-12)
    assert r.value == pytest.approx((rising + falling) / 2, abs=1e-12)
    assert r.printed == pytest.approx((rising + 2 - falling) / 2, abs=1e-12)
    assert r.value == pytest.approx(1.5427, abs=1e-4)
    assert r.printed == pytest.approx(1.2551, abs=1e-4)
    assert r.value > 1 and r.printed > 1


def test_monte_carlo_matches_corrected_value():
    e = AdTargetingExperiment(T=1_000_000, seed=5)
    mc = ad_targeting_bias(e, "monte-carlo")
    ref = ad_targeting_bias(e)
    assert abs(mc.value - ref.value) <= 3 * mc.se
    assert abs(mc.value - ref.printed) > 3 * mc.se
    assert mc.rising == pytest.approx(ref.rising, abs=0.02)
    assert mc.falling == pytest.approx(ref.falling, abs=0.02)


def test_random_budget_is_unbiased():
    mc = ad_targeting_bias(AdTargetingExperiment(policy="random", seed=2), "monte-carlo")
    assert abs(mc.value - 1.0) <= 3 * mc.se


@given(xl=st.floats(0, 3), d1=st.floats(0.05, 5), d2=st.floats(0.05, 5))
@settings(max_examples=80, deadline=None)
def test_analytic_estimate_decreases_in_spread(xl, d1, d2):
    lo, hi = sorted((d1, d2))
    a = ad_targeting_bias(AdTargetingExperiment(x_low=xl, x_high=xl + lo)).value
    b = ad_targeting_bias(AdTargetingExperiment(x_low=xl, x_high=xl + hi)).value
    assert b <= a
    assert b > 1


@given(xl=st.floats(0, 5), d=st.floats(0.01, 5))
@settings(max_examples=60, deadline=None)
def test_raise_side_term_exceeds_one(xl, d):
    assert ad_targeting_bias(AdTargetingExperiment(x_low=xl, x_high=xl + d)).rising > 1


def test_budget_path_follows_threshold_rule():
    from naeq.microfound import _simulate_budget

    e = AdTargetingExperiment(x_low=0.3, x_high=1.2, T=5000, batches=10, seed=9)
    high, eps = _simulate_budget(e)
    state = [False]
    for t in range(e.T):
        x = e.x_high if state[-1] else e.x_low
        state.append(x + eps[t] < 0)
    assert np.array_equal(np.array(state), high)


def test_no_switches():
    # sales never fall below the mean, so the budget is never raised
    e = AdTargetingExperiment(x_low=50.0, x_high=60.0, T=200, batches=2, seed=0)
    with pytest.raises(NoSwitches):
        ad_targeting_bias(e, "monte-carlo")


def test_ad_determinism():
    e = AdTargetingExperiment(seed=8, **SMALL)
    assert ad_targeting_bias(e, "monte-carlo") == ad_targeting_bias(e, "monte-carlo")


# ---------------------------------------------------------------- shock


@pytest.mark.parametrize("shock, expected", [(0.0, 1.0), (0.2, 0.6)])
def test_shock_alpha(shock, expected):
    assert shock_discount_alpha(ShockDiscountSpec(1.0, shock)) == pytest.approx(expected)


def test_shock_too_large():
    with pytest.raises(NonPositiveAlpha):
        shock_discount_alpha(ShockDiscountSpec(1.0, 0.5))
