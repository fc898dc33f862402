from __future__ import annotations

import math

import numpy as np
import pytest

from naeq.audit import audit_assumptions
from naeq.errors import IndefiniteSigns
from naeq.markets import (
    AdvertisingMarket,
    LinearPriceMarket,
    TeamProductionSpec,
    circle_game,
    motivating_example,
    price_nash,
)
from naeq.nae import (
    NaeSettings,
    classify_directions,
    constrained_equilibrium,
    fd_follower_slopes,
    follower_slopes,
    implied_alpha,
    solve_nae,
    stackelberg_best,
    verify_nae,
)

FAST = NaeSettings(verify=False)


@pytest.fixture(scope="module")
def duopoly():
    return motivating_example().game()


@pytest.fixture(scope="module")
def example_nae(duopoly):
    return solve_nae(duopoly)


@pytest.mark.parametrize("alpha2, x2", [(0.6, 25.0), (1.0, 20.0)])
def test_constrained_equilibrium(duopoly, alpha2, x2):
    ce = constrained_equilibrium(duopoly, 0, 25.0, [alpha2])
    assert ce.profile == pytest.approx([25.0, x2], abs=1e-9)
    assert ce.pinned_strategy == 25.0


def test_constrained_equilibrium_single_player():
    mono = LinearPriceMarket.symmetric(1, 20, 1, 0).game()
    ce = constrained_equilibrium(mono, 0, 12.5, [])
    assert ce.profile == pytest.approx([12.5])
    assert ce.implied_alpha == pytest.approx(0.6)


def test_implied_alpha_at_table_point(duopoly):
    assert implied_alpha(duopoly, [25, 25], 0) == pytest.approx(0.6)
    assert implied_alpha(duopoly, [50 / 3, 50 / 3], 0) == pytest.approx(1.0)


def test_leader_against_biased_follower(duopoly):
    res = stackelberg_best(duopoly, 0, [0.6])
    assert res.x == pytest.approx(25.0, abs=1e-6)
    assert res.value == pytest.approx(375.0, abs=1e-8)


def test_leader_against_unbiased_follower(duopoly):
    # follower replies (20 + 0.8 x)/2, leader maximizes x (28 - 0.68 x)
    res = stackelberg_best(duopoly, 0, [1.0])
    assert res.x == pytest.approx(28 / 1.36, abs=1e-6)


def test_leader_single_player_is_monopoly():
    mono = LinearPriceMarket.symmetric(1, 20, 1, 0).game()
    assert stackelberg_best(mono, 0, []).x == pytest.approx(10.0, abs=1e-6)


def test_follower_slopes_agree_with_differences(duopoly):
    x = np.array([25.0, 25.0])
    ift = follower_slopes(duopoly, np.array([0.6, 0.6]), x, 0)
    fd = fd_follower_slopes(duopoly, [0.6], x, 0)
    assert ift == pytest.approx([0.0, 0.5], abs=1e-8)
    assert fd == pytest.approx(ift, abs=1e-6)


def test_motivating_example_nae(example_nae):
    assert example_nae.alpha_star == pytest.approx([0.6, 0.6], abs=1e-6)
    assert example_nae.x_star == pytest.approx([25, 25], abs=1e-6)
    assert example_nae.verdict.ok
    assert np.all(example_nae.slope_identity_relative <= 1e-4)
    assert np.all(np.abs(example_nae.stackelberg_gaps) <= 1e-4)
    assert example_nae.x_nash == pytest.approx([50 / 3, 50 / 3], abs=1e-8)


def test_no_externality_gives_unbiased_nae():
    m = LinearPriceMarket.from_duopoly((20, 20), (1, 1), (0, 0))
    rep = solve_nae(m.game(), FAST)
    assert rep.alpha_star == pytest.approx([1, 1], abs=1e-6)
    assert rep.x_star == pytest.approx(price_nash(m), abs=1e-6)


def test_advertising_nae():
    m = AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1))
    rep = solve_nae(m.game(), FAST, m.bias_domain())
    assert rep.alpha_star == pytest.approx([2 / (1 + math.sqrt(0.75))] * 2, rel=1e-6)


def test_verify_accepts_nae_and_rejects_nash(duopoly):
    assert verify_nae(duopoly, [0.6, 0.6], [25, 25]).ok
    bad = verify_nae(duopoly, [1, 1], [50 / 3, 50 / 3], deviation_grid=[0.6, 1.0])
    assert not bad.ok
    assert bad.worst_alpha == pytest.approx(0.6)
    assert bad.worst_violation == pytest.approx(287.109375 - 2500 / 9, abs=1e-6)


def test_verify_without_externality_only_unbiased():
    g = LinearPriceMarket.from_duopoly((20, 20), (1, 1), (0, 0)).game()
    nash = np.array([10.0, 10.0])
    assert verify_nae(g, [1, 1], nash).ok
    x = np.array([20 / 1.6, 20 / 1.6])
    assert not verify_nae(g, [0.6, 0.6], x).ok


def test_price_substitutes_classification(duopoly, example_nae):
    audit = audit_assumptions(duopoly)
    cls = classify_directions(audit, example_nae)
    assert cls.predicted == {"strategy": 1, "bias": -1, "pareto": "nae"}
    assert cls.consistent


@pytest.mark.parametrize("market", [
    AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1)),
    AdvertisingMarket((1, 1), (1, 1), (-0.3, -0.3), (1, 1)),
])
def test_advertising_classification(market):
    bias = market.bias_domain()
    rep = solve_nae(market.game(), FAST, bias)
    cls = classify_directions(audit_assumptions(market.game(), bias), rep)
    assert cls.predicted["bias"] == 1
    assert cls.consistent
    assert cls.observed["pareto"] == ("nae" if market.c[0] > 0 else "nash")


def test_team_production_classification():
    t = TeamProductionSpec(2, 10, 0.3)
    rep = solve_nae(t.game(), FAST)
    cls = classify_directions(audit_assumptions(t.game()), rep)
    assert cls.consistent
    assert np.all(rep.alpha_star > 1)


def test_circle_game_breaks_direction_prediction():
    g = circle_game(0.01)
    rep = solve_nae(g, FAST)
    cls = classify_directions(audit_assumptions(g), rep)
    assert "strategy" in cls.mismatches
    assert np.all(rep.alpha_star > 1)


def test_classification_needs_definite_signs(duopoly, example_nae):
    audit = audit_assumptions(LinearPriceMarket.symmetric(1, 20, 1, 0).game())
    with pytest.raises(IndefiniteSigns):
        classify_directions(audit, example_nae)
