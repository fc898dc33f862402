from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import minimize_scalar

from naeq.equilibrium import solve_alpha_equilibrium
from naeq.errors import DegenerateDenominator, InvalidParameters
from naeq.markets import (
    AdvertisingMarket,
    LinearPriceMarket,
    TeamProductionSpec,
    advertising_alpha,
    advertising_equilibrium,
    advertising_nae,
    biased_best_reply,
    duopoly_alpha,
    motivating_example,
    price_alpha_equilibrium,
    price_duopoly_nae,
    price_nash,
    price_symmetric_nae,
    symmetric_alpha,
    symmetric_alpha_positive,
    symmetric_prices,
    team_alpha,
    team_alpha_equilibrium,
    team_lowest_nash,
    team_production_nae,
)


def _best_bias_reply(payoff, lo=0.05, hi=5.0):
    """Bias maximizing ``payoff(alpha)``: coarse grid, then bounded refinement."""
    grid = np.linspace(lo, hi, 400)
    k = int(np.argmax([payoff(a) for a in grid]))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    return minimize_scalar(lambda a: -payoff(a), bounds=(left, right), method="bounded",
                           options={"xatol": 1e-10}).x


# ---------------------------------------------------------------- price


def test_price_equilibrium_motivating_example():
    assert price_alpha_equilibrium(motivating_example(), [0.6, 0.6]) == pytest.approx([25, 25])


def test_symmetric_nash_price():
    m = LinearPriceMarket.symmetric(3, 20, 1, 0.5)
    assert price_nash(m) == pytest.approx([15, 15, 15])
    assert symmetric_prices(3, 20, 1, 0.5)[1] == pytest.approx(15.0)


@given(n=st.integers(1, 6), c=st.floats(-0.15, 0.9), alpha=st.floats(0.2, 3))
@settings(max_examples=40, deadline=None)
def test_price_formula_matches_generic_solver(n, c, alpha):
    assume(abs(c) > 1e-3)
    m = LinearPriceMarket.symmetric(n, 20, 1, c)
    al = np.full(n, alpha)
    assert price_alpha_equilibrium(m, al) == pytest.approx(solve_alpha_equilibrium(m.game(), al).x, rel=1e-8)


@pytest.mark.parametrize("bt, ct, expected", [
    ((1, 1), (0.8, 0.8), 0.6),
    ((1, 2), (0.5, 0.8), math.sqrt(0.8)),
    ((1, 1), (0, 0), 1.0),
])
def test_duopoly_alpha(bt, ct, expected):
    m = LinearPriceMarket.from_duopoly((20, 20), bt, ct)
    assert duopoly_alpha(m) == pytest.approx(expected, abs=1e-12)


def test_asymmetric_duopoly_bias_is_mutual_best_reply():
    m = LinearPriceMarket.from_duopoly((20, 20), (1, 2), (0.5, 0.8))
    star = duopoly_alpha(m)
    for i in range(2):
        def payoff(a, i=i):
            al = np.full(2, star)
            al[i] = a
            x = price_alpha_equilibrium(m, al)
            return float((x * m.demand(x))[i])
        assert _best_bias_reply(payoff) == pytest.approx(star, abs=1e-6)


def test_symmetric_alpha_examples():
    assert symmetric_alpha(1, 1, 0.7) == 1.0
    a3 = symmetric_alpha(3, 1, 0.7)
    assert a3 == pytest.approx(0.8826, abs=1e-4)
    assert a3 == pytest.approx((0.7 + math.sqrt(0.49 - 36 * 0.7 + 36)) / (6 - 1.4), abs=1e-12)
    assert abs(symmetric_alpha(10_000, 1, 0.7) - 1) < 1e-3


@given(n=st.integers(2, 30), c=st.floats(0.05, 0.95))
@settings(max_examples=60, deadline=None)
def test_signed_and_positive_forms_agree(n, c):
    r = (1 - c / n) / (c / n)
    assert symmetric_alpha(n, 1, c) == pytest.approx(symmetric_alpha_positive(n, r), rel=1e-12)


def test_symmetric_bias_is_best_reply_to_symmetric_rivals():
    n, a, b, c = 4, 20.0, 1.0, 0.7
    m = LinearPriceMarket.symmetric(n, a, b, c)
    star = symmetric_alpha(n, b, c)

    def payoff(al):
        prof = np.full(n, star)
        prof[0] = al
        x = price_alpha_equilibrium(m, prof)
        return float(x[0] * m.demand(x)[0])

    assert _best_bias_reply(payoff) == pytest.approx(star, abs=1e-6)


@given(ct=st.floats(-0.45, 0.9), b1=st.floats(0.5, 2), b2=st.floats(0.5, 2), a=st.floats(5, 40))
@settings(max_examples=60, deadline=None)
def test_price_direction_and_pareto(ct, b1, b2, a):
    assume(abs(ct) > 0.02)
    try:
        m = LinearPriceMarket.from_duopoly((a, a), (b1, b2), (ct * b1, ct * b2))
        rep = price_duopoly_nae(m)
    except InvalidParameters:
        assume(False)
    assert np.all(rep.alpha < 1)
    # prices sit above the unbiased best reply to the rival's NAE price
    br = np.array([biased_best_reply(m, 1.0, rep.x, i) for i in range(2)])
    assert np.all(rep.x > br)
    if ct > 0:
        assert np.all(rep.profit > rep.profit_nash)
    else:
        assert np.all(rep.profit < rep.profit_nash)


def test_negative_demand_rejected():
    m = LinearPriceMarket.from_duopoly((1, 100), (1, 1), (-0.2, -0.2))
    with pytest.raises(InvalidParameters):
        price_duopoly_nae(m)


def test_symmetric_nae_needs_identical_firms():
    with pytest.raises(InvalidParameters):
        price_symmetric_nae(LinearPriceMarket((20, 21), (1, 1), (0.5, 0.5)))


@pytest.mark.parametrize("kwargs", [
    dict(a=(20, 20), b=(1, 1), c=(0.5, -0.5)),
    dict(a=(20, 20), b=(1, 1), c=(1.0, 1.0)),
    dict(a=(20, 20), b=(1, 1), c=(0.5, 0.5), w=(0.3, 0.6)),
    dict(a=(0, 20), b=(1, 1), c=(0.5, 0.5)),
    dict(a=(20, 20, 20), b=(1, 1, 1), c=(-0.9, -0.9, -0.9), w=(0.6, 0.2, 0.2)),
])
def test_linear_market_invariants(kwargs):
    with pytest.raises(InvalidParameters):
        LinearPriceMarket(**kwargs)


# ---------------------------------------------------------------- advertising


def test_advertising_nash_budgets():
    m = AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1))
    x = advertising_equilibrium(m, (1, 1))
    assert x == pytest.approx([4 / 9, 4 / 9], abs=1e-14)
    assert solve_alpha_equilibrium(m.game(), (1, 1)).x == pytest.approx(x, rel=1e-8)


def test_advertising_decoupled_budget():
    m = AdvertisingMarket((1, 1), (1, 3), (0, 0), (2, 1))
    assert advertising_equilibrium(m, (1, 1)) == pytest.approx([1.0, 2.25])
    assert advertising_alpha(m) == 1.0


def test_advertising_bias_value_and_limit():
    m = AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1))
    assert advertising_alpha(m) == pytest.approx(1.0718, abs=1e-4)
    near = AdvertisingMarket((1, 1), (1, 1), (0.999999, 0.999999), (1, 1))
    assert 1.99 < advertising_alpha(near) < 2.0


def test_advertising_bias_is_best_reply():
    m = AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1))
    star = advertising_alpha(m)

    def payoff(a):
        return float(m.profit(advertising_equilibrium(m, (a, star)))[0])

    assert _best_bias_reply(payoff, 0.5, 1.9) == pytest.approx(star, abs=1e-6)


def test_advertising_degenerate_denominator():
    m = AdvertisingMarket((1, 1), (1, 1), (0.9, 0.9), (1, 1))
    with pytest.raises(DegenerateDenominator):
        advertising_equilibrium(m, (2.5, 2.5))


@given(c=st.floats(-0.45, 0.95), p=st.floats(0.5, 1.0), b=st.floats(0.5, 2))
@settings(max_examples=60, deadline=None)
def test_advertising_direction_and_pareto(c, p, b):
    assume(abs(c) > 0.02)
    try:
        m = AdvertisingMarket((1, 1), (b, b), (c, c), (p, p))
    except InvalidParameters:
        assume(False)
    rep = advertising_nae(m)
    assert np.all(rep.alpha > 1)
    assert np.all(rep.x > rep.x_nash)
    if c > 0:
        assert np.all(rep.profit > rep.profit_nash)
    else:
        assert np.all(rep.profit < rep.profit_nash)


def test_advertising_invariants():
    with pytest.raises(InvalidParameters):
        AdvertisingMarket((1, 1), (1, 1), (1.2, 1.2), (1, 1))
    with pytest.raises(InvalidParameters):
        AdvertisingMarket((1, 1), (0.2, 1), (-0.5, -0.5), (1, 1))


# ---------------------------------------------------------------- team production


@given(a1=st.floats(0.3, 3), a2=st.floats(0.3, 3))
@settings(max_examples=30, deadline=None)
def test_team_equilibrium_matches_generic(a1, a2):
    t = TeamProductionSpec(2, 10, 0.3)
    x = team_alpha_equilibrium(t, (a1, a2))
    assert solve_alpha_equilibrium(t.game(), (a1, a2)).x == pytest.approx(x, rel=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_team_production_nae(n):
    t = TeamProductionSpec(n, 10, 0.3)
    rep = team_production_nae(t)
    assert np.all(rep.alpha > 1)
    assert np.all(rep.x > rep.x_nash)
    assert np.all(rep.profit > rep.profit_nash)
    assert rep.x_nash == pytest.approx(team_alpha_equilibrium(t, np.ones(n)), rel=1e-10)


def test_team_single_player():
    t = TeamProductionSpec(1, 10, 0.3)
    assert team_alpha(t) == 1.0
    assert team_production_nae(t).x == pytest.approx([(10 * 0.3) ** (1 / 0.7)])


def test_team_lowest_nash_from_below():
    t = TeamProductionSpec(3, 5, 0.2)
    x = team_lowest_nash(t)
    g = t.gamma
    assert x == pytest.approx((g * t.theta * (np.prod(x) / x) ** g) ** (1 / (1 - g)), rel=1e-12)
