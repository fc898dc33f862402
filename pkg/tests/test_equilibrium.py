from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from naeq.equilibrium import (
    SolverSettings,
    perceived_best_reply,
    projected_residual,
    solve_alpha_equilibrium,
    unbiased_best_reply,
)
from naeq.errors import InvalidParameters, NonConvergence
from naeq.game import GameSpec, negate_relabel, perceived_second
from naeq.markets import LinearPriceMarket, motivating_example, price_alpha_equilibrium


@pytest.fixture
def duopoly():
    return motivating_example().game()


@pytest.mark.parametrize("alpha, x, profit", [
    ((1.0, 1.0), (50 / 3, 50 / 3), (2500 / 9, 2500 / 9)),
    ((0.6, 0.6), (25.0, 25.0), (375.0, 375.0)),
    ((0.6, 1.0), (21.875, 18.75), (287.109375, 351.5625)),
])
def test_alpha_equilibria_of_motivating_example(duopoly, alpha, x, profit):
    rep = solve_alpha_equilibrium(duopoly, alpha)
    assert rep.x == pytest.approx(x, abs=1e-9)
    assert rep.profit == pytest.approx(profit, abs=1e-7)
    assert rep.residual <= 1e-10
    assert np.all(rep.soc < 0)


def test_best_reply_biased(duopoly):
    assert perceived_best_reply(duopoly, 0.6, [25.0], 0) == pytest.approx(25.0, abs=1e-10)


def test_best_reply_unbiased(duopoly):
    assert perceived_best_reply(duopoly, 1.0, [17.0], 0) == pytest.approx(16.8, abs=1e-10)


@given(x2=st.floats(0, 80))
@settings(max_examples=40, deadline=None)
def test_unbiased_reply_maximizes_true_profit(x2):
    game = motivating_example().game()
    br = unbiased_best_reply(game, [x2], 0)
    direct = minimize_scalar(lambda t: -game.payoffs(np.array([t, x2]))[0], bounds=(0, 200),
                             method="bounded", options={"xatol": 1e-10}).x
    assert br == pytest.approx(direct, abs=1e-6)


def test_boundary_reply_sits_on_bound():
    # profit x * (5 - x) on [0, 2]: maximizer at the upper bound
    game = GameSpec(n=1, lower=(0.0,), upper=(2.0,), demand=lambda x: 5.0 - x,
                    profit=lambda x, q: x * q)
    assert perceived_best_reply(game, 1.0, [], 0) == 2.0


def test_bad_bias_rejected(duopoly):
    with pytest.raises(InvalidParameters):
        solve_alpha_equilibrium(duopoly, (0.6, 0.0))


def test_nonconvergence_reports_best(duopoly):
    s = SolverSettings(max_iter=1, starts=0, newton=False, tol=1e-14)
    with pytest.raises(NonConvergence) as info:
        solve_alpha_equilibrium(duopoly, (1.0, 1.0), s)
    assert info.value.best is not None
    assert np.isfinite(info.value.residual)


def test_jacobi_path_without_newton(duopoly):
    s = SolverSettings(newton=False)
    rep = solve_alpha_equilibrium(duopoly, (0.6, 0.6), s)
    assert rep.x == pytest.approx([25, 25], abs=1e-8)
    assert rep.method == "jacobi"


@given(alpha=st.tuples(st.floats(0.1, 5), st.floats(0.1, 5)),
       ct=st.floats(-0.3, 0.9), a=st.floats(5, 40))
@settings(max_examples=40, deadline=None)
def test_generic_solver_matches_linear_formula(alpha, ct, a):
    m = LinearPriceMarket.from_duopoly((a, a), (1.0, 1.0), (ct, ct))
    rep = solve_alpha_equilibrium(m.game(), alpha)
    assert rep.x == pytest.approx(price_alpha_equilibrium(m, alpha), rel=1e-8)
    assert projected_residual(m.game(), alpha, rep.x) <= 1e-10 * max(1.0, float(np.max(rep.x)))
    assert np.all(perceived_second(m.game(), np.asarray(alpha), rep.x) < 0)


@given(alpha=st.tuples(st.floats(0.1, 5), st.floats(0.1, 5)))
@settings(max_examples=30, deadline=None)
def test_relabelled_equilibrium_is_negated(alpha):
    game = motivating_example().game()
    neg = negate_relabel(game)
    x = solve_alpha_equilibrium(game, alpha).x
    assert projected_residual(neg, alpha, -x) <= 1e-8
    assert solve_alpha_equilibrium(neg, alpha).x == pytest.approx(-x, abs=1e-8)


def test_relabelled_example_at_06():
    neg = negate_relabel(motivating_example().game())
    assert solve_alpha_equilibrium(neg, (0.6, 0.6)).x == pytest.approx([-25, -25], abs=1e-9)
