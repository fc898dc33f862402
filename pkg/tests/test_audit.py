from __future__ import annotations

import numpy as np
import pytest

from naeq.audit import FAIL, HEURISTIC, PASS, VACUOUS, SamplingPlan, audit_assumptions
from naeq.errors import SampleFailure
from naeq.game import GameSpec, negate_relabel
from naeq.markets import AdvertisingMarket, LinearPriceMarket, TeamProductionSpec, circle_game, motivating_example


def test_motivating_example_passes_everything():
    rep = audit_assumptions(motivating_example().game())
    assert all(v == PASS for v in rep.passed.values())
    assert (rep.sign_comp, rep.sign_extr, rep.sign_partial) == (1, 1, 1)
    assert rep.definite


def test_circle_game_fails_secondary_adaptation_with_witness():
    rep = audit_assumptions(circle_game(0.01))
    assert rep.passed["A6"] == FAIL
    w = rep.witnesses["A6"]
    # follower moved one way after the first adaptation and the other way after the second
    assert np.sign(w["first"] - w["equilibrium"][w["follower"]]) != np.sign(
        w["second"] - w["equilibrium"][w["follower"]])
    for k in ("A1", "A2", "A3", "A4", "A5"):
        assert rep.passed[k] == PASS


def test_monopoly_vacuous_checks():
    rep = audit_assumptions(LinearPriceMarket.symmetric(1, 20, 1, 0).game())
    assert rep.passed["A1"] == rep.passed["A4"] == rep.passed["A6"] == VACUOUS
    assert rep.passed["A2"] == rep.passed["A3"] == PASS
    assert rep.sign_comp is None and rep.sign_extr is None


def test_complements_signs():
    rep = audit_assumptions(LinearPriceMarket.symmetric(2, 20, 1, -0.4).game())
    assert (rep.sign_comp, rep.sign_extr, rep.sign_partial) == (-1, -1, 1)
    assert all(rep.ok(k) for k in rep.passed)


def test_relabelling_flips_externality_and_partial_signs():
    game = motivating_example().game()
    neg = audit_assumptions(negate_relabel(game))
    assert (neg.sign_comp, neg.sign_extr, neg.sign_partial) == (1, -1, -1)
    twice = audit_assumptions(negate_relabel(negate_relabel(game)))
    assert (twice.sign_comp, twice.sign_extr, twice.sign_partial) == (1, 1, 1)


@pytest.mark.parametrize("market, signs", [
    (AdvertisingMarket((1, 1), (1, 1), (0.5, 0.5), (1, 1)), (1, 1, -1)),
    (AdvertisingMarket((1, 1), (1, 1), (-0.3, -0.3), (1, 1)), (-1, -1, -1)),
])
def test_advertising_signs(market, signs):
    rep = audit_assumptions(market.game(), market.bias_domain())
    assert (rep.sign_comp, rep.sign_extr, rep.sign_partial) == signs
    assert all(rep.ok(k) for k in rep.passed)


def test_team_production_heuristic_bounded_replies():
    rep = audit_assumptions(TeamProductionSpec(2, 10, 0.3).game())
    assert rep.passed["A5"] == HEURISTIC
    assert (rep.sign_comp, rep.sign_extr, rep.sign_partial) == (1, 1, -1)


def test_sign_break_forces_fail_with_witness():
    # cross effect changes sign at x_2 = 10
    game = GameSpec(n=2, lower=(0.0, 0.0), upper=(20.0, 20.0),
                    demand=lambda x: np.array([20 - x[0] + 0.1 * (x[1] - 10) * x[1], 20 - x[1] + 0.5 * x[0]]),
                    profit=lambda x, q: x * q)
    rep = audit_assumptions(game, plan=SamplingPlan(box=((1, 1), (19, 19))))
    assert rep.passed["A1"] == FAIL
    assert "x" in rep.witnesses["A1"]
    assert rep.sign_extr is None


def test_sample_failure():
    def demand(x):
        if x[0] > 20:
            return np.array([np.nan, 1.0])
        return np.array([20 - x[0] + 0.5 * x[1], 20 - x[1] + 0.5 * x[0]])

    game = GameSpec(n=2, lower=(0.0, 0.0), upper=(40.0, 40.0), demand=demand, profit=lambda x, q: x * q)
    with pytest.raises(SampleFailure):
        audit_assumptions(game, plan=SamplingPlan(box=((1, 1), (30, 30))))


def test_audit_is_deterministic():
    g = circle_game(0.01)
    a, b = audit_assumptions(g), audit_assumptions(g)
    assert a.passed == b.passed and a.witnesses == b.witnesses
