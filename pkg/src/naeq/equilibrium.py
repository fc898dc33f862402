"""Perceived best replies and alpha-equilibria.

The solver runs damped simultaneous (Jacobi) best-reply iteration with
seeded multi-starts when it stalls.  Before iterating it tries a guarded
Newton step on the joint perceived first-order system, which settles
linear games in one or two steps; the Newton result is only kept when it
meets the same residual and second-order checks as the iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameters, NonConvergence, NonFiniteEvaluation, NoSignChange, SOCViolation
from .game import (
    MULTIPLICATIVE,
    BiasFunction,
    GameSpec,
    check_bias,
    first_step,
    perceived_gradient,
    perceived_jacobian,
    perceived_second,
)


@dataclass(frozen=True)
class SolverSettings:
    """Knobs for the alpha-equilibrium solver."""

    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    starts: int = 8
    seed: int = 0
    x0: tuple[float, ...] | None = None
    newton: bool = True
    stall_window: int = 500

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise InvalidParameters("damping must lie in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1 or self.starts < 0:
            raise InvalidParameters("tolerance, iteration budget and start count must be positive")

    def with_x0(self, x0) -> "SolverSettings":
        return replace(self, x0=None if x0 is None else tuple(float(v) for v in x0))


@dataclass(frozen=True)
class SolveReport:
    """A converged alpha-equilibrium."""

    x: np.ndarray
    alpha: np.ndarray
    demand: np.ndarray
    profit: np.ndarray
    residual: float
    soc: np.ndarray
    iterations: int
    method: str
    starts_used: int = 0
    free: tuple[int, ...] = field(default=())


def _interior(game: GameSpec, x: np.ndarray) -> np.ndarray:
    h = first_step(x)
    return np.clip(x, game.lo + h, game.hi - h)


def _gradient(game, alpha, x, bias):
    return perceived_gradient(game, alpha, _interior(game, x), bias)


def _own_gradient(game, alpha, x, i, bias) -> float:
    """Player ``i``'s perceived marginal profit with only its own coordinate moved inside.

    Falls back to moving every coordinate inside when an opponent on its
    bound makes some evaluator non-finite.
    """
    h = first_step(x[i])
    y = x.copy()
    y[i] = min(max(y[i], game.lower[i] + h), game.upper[i] - h)
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(perceived_gradient(game, alpha, y, bias)[i])
    except NonFiniteEvaluation:
        return float(_gradient(game, alpha, x, bias)[i])


def projected_residual(game: GameSpec, alpha, x, free=None, bias: BiasFunction = MULTIPLICATIVE) -> float:
    """Largest violation of the perceived first-order (KKT) conditions among ``free`` players."""
    x = np.asarray(x, dtype=float)
    g = _gradient(game, alpha, x, bias)
    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    at_lo = x <= game.lo + tol
    at_hi = x >= game.hi - tol
    g = np.where(at_lo, np.maximum(g, 0.0), g)
    g = np.where(at_hi, np.minimum(g, 0.0), g)
    idx = np.arange(game.n) if free is None else np.asarray(free, dtype=int)
    return float(np.max(np.abs(g[idx]))) if idx.size else 0.0


def perceived_best_reply(game: GameSpec, alpha_i: float, x_minus_i: Sequence[float], i: int,
                         bias: BiasFunction = MULTIPLICATIVE, guess: float | None = None,
                         xtol: float = 1e-13) -> float:
    """Strategy of player ``i`` maximizing perceived profit against ``x_minus_i``.

    Returns the interior root of the perceived first-order condition when one
    exists, otherwise the bound at which perceived profit is maximal.
    """
    if not bias.contains(alpha_i):
        raise InvalidParameters(f"bias {alpha_i} outside the feasible set")
    x_minus_i = np.asarray(x_minus_i, dtype=float)
    if x_minus_i.shape != (game.n - 1,):
        raise InvalidParameters(f"expected {game.n - 1} opponent strategies")
    alpha = np.ones(game.n)
    alpha[i] = alpha_i
    x = np.insert(x_minus_i, i, 0.0)
    lo, hi = game.lower[i], game.upper[i]

    def g(t: float) -> float:
        x[i] = t
        return _own_gradient(game, alpha, x, i, bias)

    start = guess if guess is not None and math.isfinite(guess) else (
        0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else (
            max(lo, 0.0) + 1.0 if math.isfinite(lo) else min(hi, 0.0) - 1.0))
    start = min(max(start, lo), hi)

    a, b = _bracket(g, start, lo, hi)
    if a is None:
        return b  # boundary maximizer
    root = a if a == b else brentq(g, a, b, xtol=xtol * max(1.0, abs(a), abs(b)), rtol=4 * np.finfo(float).eps,
                  maxiter=200)
    x[i] = root
    second = perceived_second(game, alpha, _interior(game, x), bias)[i]
    if not second < 0:
        raise SOCViolation(f"perceived second derivative {second:.3g} >= 0 at x_{i} = {root:.6g}")
    return float(root)


def _bracket(g, start, lo, hi, max_expand: int = 200):
    """Bracket the decreasing-crossing of ``g``; ``(None, bound)`` for a corner solution."""
    g0 = g(start)
    if g0 == 0.0:
        return start, start
    step = max(1.0, abs(start)) * 0.1
    if g0 > 0:
        a, b = start, start
        for _ in range(max_expand):
            if b >= hi:
                return None, hi
            b = min(b + step, hi)
            gb = g(b)
            if gb <= 0:
                if b >= hi and gb > 0:
                    return None, hi
                return a, b
            a = b
            step *= 2.0
        raise NoSignChange("perceived profit keeps increasing; no best reply on the interval")
    a, b = start, start
    for _ in range(max_expand):
        if a <= lo:
            return None, lo
        a = max(a - step, lo)
        ga = g(a)
        if ga >= 0:
            return a, b
        b = a
        step *= 2.0
    raise NoSignChange("perceived profit keeps increasing downward; no best reply on the interval")


def _initial(game: GameSpec, settings: SolverSettings, x0) -> np.ndarray:
    if x0 is not None:
        return game.clip(np.asarray(x0, dtype=float))
    if settings.x0 is not None:
        return game.clip(np.asarray(settings.x0, dtype=float))
    lo, hi = game.lo, game.hi
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi),
                   np.where(np.isfinite(lo), np.maximum(lo, 0.0) + 1.0, np.minimum(hi, 0.0) - 1.0))
    return mid


def _newton(game, alpha, x, free, bias, tol, max_iter: int = 50):
    """Guarded quasi-Newton on the free players' perceived FOCs; ``None`` if it fails.

    Starts from a differenced Jacobian and applies Broyden updates, falling
    back to a fresh Jacobian whenever a step fails to reduce the residual.
    """
    free = np.asarray(free, dtype=int)
    x = x.copy()
    res = projected_residual(game, alpha, x, free, bias)
    g = _gradient(game, alpha, x, bias)[free]
    jac = None
    for _ in range(max_iter):
        if res <= tol:
            return x, res
        fresh = jac is None
        if fresh:
            jac = perceived_jacobian(game, alpha, _interior(game, x), bias)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            return None
        if not np.isfinite(step).all():
            return None
        t = 1.0
        while t > 1e-6:
            trial = x.copy()
            trial[free] = np.clip(x[free] + t * step, game.lo[free], game.hi[free])
            try:
                r = projected_residual(game, alpha, trial, free, bias)
            except ArithmeticError:
                r = math.inf
            if r < res:
                break
            t *= 0.5
        else:
            if fresh:
                return None
            jac = None
            continue
        g_new = _gradient(game, alpha, trial, bias)[free]
        dx = trial[free] - x[free]
        if t == 1.0 and dx @ dx > 0:
            jac = jac + np.outer(g_new - g - jac @ dx, dx) / (dx @ dx)
        else:
            jac = None
        x, res, g = trial, r, g_new
    return (x, res) if res <= tol else None


def solve_profile(game: GameSpec, alpha, settings: SolverSettings = SolverSettings(),
                  free: Sequence[int] | None = None, x0=None,
                  bias: BiasFunction = MULTIPLICATIVE) -> SolveReport:
    """Solve the perceived first-order system for the ``free`` players.

    Players not in ``free`` keep their coordinate from the initial profile.
    """
    alpha = check_bias(alpha, game.n, bias)
    free = tuple(range(game.n)) if free is None else tuple(int(i) for i in free)
    x_init = _initial(game, settings, x0)
    if not free:
        q, pi = game.evaluate(x_init)
        return SolveReport(x_init, alpha, q, pi, 0.0, np.array([]), 0, "trivial", 0, free)

    if settings.newton:
        try:
            out = _newton(game, alpha, x_init, free, bias, settings.tol)
        except ArithmeticError:
            out = None
        if out is not None:
            report = _finish(game, alpha, out[0], out[1], free, bias, 0, "newton", 0)
            if report is not None:
                return report

    rng = np.random.default_rng(settings.seed)
    best_x, best_res = x_init, math.inf
    soc_failed = None
    trajectory = []
    total = 0
    for start in range(settings.starts + 1):
        x = x_init if start == 0 else _random_start(game, x_init, free, rng)
        try:
            x, res, its, converged = _jacobi(game, alpha, x, free, bias, settings)
        except (NoSignChange, SOCViolation, ArithmeticError):
            continue
        total += its
        trajectory.append(res)
        if res < best_res:
            best_x, best_res = x, res
        if converged:
            if settings.newton:
                polished = _newton(game, alpha, x, free, bias, settings.tol)
                if polished is not None:
                    x, res = polished
            report = _finish(game, alpha, x, res, free, bias, total, "jacobi", start)
            if report is not None:
                return report
            soc_failed = x
    if soc_failed is not None:
        raise SOCViolation(f"fixed point {soc_failed} has a non-negative perceived second derivative")
    raise NonConvergence(
        f"no alpha-equilibrium within tolerance {settings.tol:g}; best residual {best_res:.3g}",
        best=best_x, residual=best_res, trajectory=trajectory,
    )


def _random_start(game, x_init, free, rng):
    x = x_init.copy()
    for i in free:
        lo, hi = game.lower[i], game.upper[i]
        span = max(1.0, abs(x_init[i]))
        a = lo if math.isfinite(lo) else x_init[i] - 2 * span
        b = hi if math.isfinite(hi) else x_init[i] + 2 * span
        x[i] = rng.uniform(a, b)
    return x


def _jacobi(game, alpha, x, free, bias, settings):
    x = x.copy()
    best = math.inf
    since = 0
    lam = settings.damping
    for it in range(1, settings.max_iter + 1):
        br = x.copy()
        for i in free:
            br[i] = perceived_best_reply(game, alpha[i], np.delete(x, i), i, bias, guess=x[i])
        x = x + lam * (br - x)
        x[list(free)] = np.clip(x[list(free)], game.lo[list(free)], game.hi[list(free)])
        move = float(np.max(np.abs(br - x)[list(free)]))
        res = projected_residual(game, alpha, x, free, bias)
        if res <= settings.tol:
            return x, res, it, True
        if move <= 1e-15 * max(1.0, float(np.max(np.abs(x)))):
            return x, res, it, res <= settings.tol
        if res < 0.999 * best:
            best, since = res, 0
        else:
            since += 1
            if since >= settings.stall_window:
                return x, res, it, False
    return x, res, settings.max_iter, False


def _finish(game, alpha, x, res, free, bias, its, method, starts):
    free_arr = np.asarray(free, dtype=int)
    soc = perceived_second(game, alpha, _interior(game, x), bias)[free_arr]
    tol = 1e-12 * np.maximum(1.0, np.abs(x[free_arr]))
    interior = (x[free_arr] > game.lo[free_arr] + tol) & (x[free_arr] < game.hi[free_arr] - tol)
    if np.any(interior & ~(soc < 0)):
        return None
    q, pi = game.evaluate(x)
    return SolveReport(x, alpha, q, pi, res, soc, its, method, starts, tuple(free))


def solve_alpha_equilibrium(game: GameSpec, alpha, settings: SolverSettings = SolverSettings(),
                            bias: BiasFunction = MULTIPLICATIVE) -> SolveReport:
    """Strategy profile where every player's perceived FOC holds with a negative perceived SOC."""
    return solve_profile(game, alpha, settings, bias=bias)


def unbiased_best_reply(game: GameSpec, x_minus_i, i: int, guess: float | None = None) -> float:
    return perceived_best_reply(game, 1.0, x_minus_i, i, guess=guess)
