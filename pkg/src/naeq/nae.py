"""Constrained equilibria, Stackelberg-leader strategies and naive analytics equilibria.

A bias profile ``alpha*`` with its alpha-equilibrium ``x*`` is a naive
analytics equilibrium when each ``x*_i`` maximizes player ``i``'s true
payoff once the opponents re-equilibrate (with their own biases) to any
pinned ``x_i``.  At such a point the bias exactly offsets the opponents'
response:

    f(s_i, alpha_i) = s_i + sum_j (dx_j/dx_i) * dq_i/dx_j,      s_i = dq_i/dx_i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .audit import AuditReport
from .equilibrium import SolverSettings, SolveReport, perceived_best_reply, solve_profile
from .errors import (
    IndefiniteSigns,
    InvalidParameters,
    NaeqError,
    NoInteriorNAE,
    NonConvergence,
    UnboundedObjective,
)
from .game import (
    MULTIPLICATIVE,
    BiasFunction,
    GameSpec,
    demand_jacobian,
    first_step,
    marginal_terms,
    perceived_jacobian,
    perceived_second,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NaeSettings:
    """Outer-loop and search settings for :func:`solve_nae`."""

    damping: float = 0.5
    tol: float = 1e-8
    max_outer: int = 500
    grid_points: int = 21
    slope_step: float = 1e-4
    alpha0: tuple[float, ...] | None = None
    warm_start: bool = True
    verify: bool = True
    deviation_grid: tuple[float, ...] | None = None
    verify_tol: float = 1e-7
    clip_patience: int = 25
    inner: SolverSettings = field(default_factory=lambda: SolverSettings(tol=1e-11))

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise InvalidParameters("damping must lie in (0, 1]")
        if self.grid_points < 3:
            raise InvalidParameters("grid needs at least three points")


@dataclass(frozen=True)
class ConstrainedEquilibrium:
    pinned_player: int
    pinned_strategy: float
    profile: np.ndarray
    implied_alpha: float | None
    report: SolveReport


@dataclass(frozen=True)
class LeaderResult:
    x: float
    value: float
    profile: np.ndarray
    grid_best: float | None = None


@dataclass(frozen=True)
class Verdict:
    ok: bool
    worst_violation: float
    worst_player: int | None
    worst_alpha: float | None
    inconclusive: list = field(default_factory=list)
    checked: int = 0


@dataclass(frozen=True)
class NaeReport:
    alpha_star: np.ndarray
    x_star: np.ndarray
    demand: np.ndarray
    profit: np.ndarray
    slope_identity_residual: np.ndarray
    slope_identity_relative: np.ndarray
    response_slopes: np.ndarray
    stackelberg_x: np.ndarray
    stackelberg_gaps: np.ndarray
    x_nash: np.ndarray
    profit_nash: np.ndarray
    unbiased_reply: np.ndarray
    outer_iterations: int
    verdict: Verdict | None
    fixed_points: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _alpha_with(alpha_minus_i, i: int, n: int) -> np.ndarray:
    am = np.atleast_1d(np.asarray(alpha_minus_i, dtype=float))
    if am.shape == (n,):
        full = am.copy()
        full[i] = 1.0
        return full
    if am.shape != (n - 1,):
        raise InvalidParameters(f"expected {n - 1} opponent biases")
    return np.insert(am, i, 1.0)


def implied_alpha(game: GameSpec, x, i: int, bias: BiasFunction = MULTIPLICATIVE) -> float | None:
    """Bias under which ``x_i`` satisfies player ``i``'s perceived FOC at ``x``.

    ``None`` when the bias falls outside the feasible set or the perceived
    second derivative is not negative there.
    """
    x = np.asarray(x, dtype=float)
    h = first_step(x)
    xin = np.clip(x, game.lo + h, game.hi - h)
    _, dpx, dpq, own = marginal_terms(game, xin)
    denom = dpq[i] * own[i]
    if denom == 0:
        return None
    a = float(bias.invert(-dpx[i] / dpq[i], own[i]))
    if not math.isfinite(a) or not bias.contains(a):
        return None
    al = np.ones(game.n)
    al[i] = a
    if not perceived_second(game, al, xin, bias)[i] < 0:
        return None
    return a


def _raw_implied(game, x, i, bias) -> float:
    h = first_step(x)
    xin = np.clip(x, game.lo + h, game.hi - h)
    _, dpx, dpq, own = marginal_terms(game, xin)
    return float(bias.invert(-dpx[i] / dpq[i], own[i]))


def constrained_equilibrium(game: GameSpec, i: int, x_i: float, alpha_minus_i,
                            settings: SolverSettings = SolverSettings(), x0=None,
                            bias: BiasFunction = MULTIPLICATIVE) -> ConstrainedEquilibrium:
    """Equilibrium of the opponents of ``i`` when ``x_i`` is held fixed."""
    if not game.lower[i] <= x_i <= game.upper[i]:
        raise InvalidParameters(f"pinned strategy {x_i} outside player {i}'s interval")
    alpha = _alpha_with(alpha_minus_i, i, game.n)
    start = np.asarray(x0, dtype=float).copy() if x0 is not None else None
    if start is None:
        start = np.asarray(settings.x0, dtype=float).copy() if settings.x0 is not None else None
    if start is None:
        start = solve_profile(game, alpha, settings).x.copy()
    start[i] = x_i
    free = [j for j in range(game.n) if j != i]
    rep = solve_profile(game, alpha, settings, free=free, x0=start, bias=bias)
    x = rep.x.copy()
    x[i] = x_i
    return ConstrainedEquilibrium(i, float(x_i), x, implied_alpha(game, x, i, bias), rep)


class _Leader:
    """Player ``i``'s true payoff as a function of its pinned strategy."""

    def __init__(self, game, i, alpha, settings, bias, x_ref):
        self.game, self.i, self.alpha, self.settings, self.bias = game, i, alpha, settings, bias
        self.last = np.asarray(x_ref, dtype=float).copy()
        self.cache: dict[float, tuple[float, np.ndarray]] = {}

    def profile(self, t: float) -> np.ndarray:
        t = float(t)
        hit = self.cache.get(t)
        if hit is not None:
            return hit[1]
        start = self.last.copy()
        ce = constrained_equilibrium(self.game, self.i, t, self.alpha, self.settings, x0=start,
                                     bias=self.bias)
        self.last = ce.profile
        value = float(self.game.payoffs(ce.profile)[self.i])
        self.cache[t] = (value, ce.profile)
        return ce.profile

    def value(self, t: float) -> float:
        try:
            self.profile(t)
        except (NaeqError, ArithmeticError):
            return -math.inf
        return self.cache[float(t)][0]

    def slope(self, t: float) -> float:
        """Total derivative of the leader payoff, via the implicit-function theorem."""
        x = self.profile(t)
        game, i = self.game, self.i
        h = first_step(x)
        xin = np.clip(x, game.lo + h, game.hi - h)
        _, dpx, dpq, own = marginal_terms(game, xin)
        resp = follower_slopes(game, self.alpha, x, i, self.bias)
        cross = demand_jacobian(game, xin)[i]
        return float(dpx[i] + dpq[i] * (own[i] + resp @ cross))


def follower_slopes(game: GameSpec, alpha, x, i: int, bias: BiasFunction = MULTIPLICATIVE) -> np.ndarray:
    """``dx_j/dx_i`` of the opponents' equilibrium (zero for ``j = i`` and for cornered followers)."""
    n = game.n
    out = np.zeros(n)
    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    free = [j for j in range(n) if j != i and game.lower[j] + tol[j] < x[j] < game.upper[j] - tol[j]]
    if not free:
        return out
    jac = perceived_jacobian(game, alpha, x, bias)
    sub = jac[np.ix_(free, free)]
    out[free] = np.linalg.solve(sub, -jac[free, i])
    return out


def fd_follower_slopes(game: GameSpec, alpha_minus_i, x, i: int, step: float = 1e-4,
                       settings: SolverSettings = SolverSettings(tol=1e-12),
                       bias: BiasFunction = MULTIPLICATIVE) -> np.ndarray:
    """``dx_j/dx_i`` by central differences of constrained equilibria."""
    x = np.asarray(x, dtype=float)
    h = step * max(1.0, abs(x[i]))
    lo_t = max(x[i] - h, game.lower[i])
    hi_t = min(x[i] + h, game.upper[i])
    up = constrained_equilibrium(game, i, hi_t, alpha_minus_i, settings, x0=x, bias=bias).profile
    dn = constrained_equilibrium(game, i, lo_t, alpha_minus_i, settings, x0=x, bias=bias).profile
    slopes = (up - dn) / (hi_t - lo_t)
    slopes[i] = 0.0
    return slopes


def _search_range(game: GameSpec, i: int, ref: float) -> tuple[float, float]:
    lo, hi = game.lower[i], game.upper[i]
    span = 4.0 * max(1.0, abs(ref))
    a = lo if math.isfinite(lo) else ref - span
    b = hi if math.isfinite(hi) else max(ref, a) + span
    return a, b


def stackelberg_best(game: GameSpec, i: int, alpha_minus_i, settings: NaeSettings = NaeSettings(),
                     x_ref=None, around: float | None = None,
                     bias: BiasFunction = MULTIPLICATIVE) -> LeaderResult:
    """Strategy maximizing player ``i``'s true payoff when opponents re-equilibrate.

    A coarse grid locates the best cell, golden-section search refines it and
    a root of the leader's marginal payoff polishes the result.  With
    ``around`` the grid is skipped and the search starts from a local bracket.
    """
    alpha = _alpha_with(alpha_minus_i, i, game.n)
    inner = settings.inner
    if x_ref is None:
        x_ref = solve_profile(game, alpha, inner, bias=bias).x
    leader = _Leader(game, i, alpha, inner, bias, x_ref)

    if around is not None:
        local = _local_search(leader, around)
        if local is not None:
            return local

    a, b = _search_range(game, i, float(x_ref[i]))
    bounded_above = math.isfinite(game.upper[i])
    for _ in range(8):
        grid = np.linspace(a, b, settings.grid_points)
        vals = np.array([leader.value(t) for t in grid])
        if not np.any(np.isfinite(vals)):
            raise NonConvergence(f"no constrained equilibrium found for player {i}")
        k = int(np.argmax(vals))  # first maximum, so ties go to the smaller strategy
        if k < len(grid) - 1 or bounded_above:
            break
        a, b = b - (b - a) * 0.5, b + 2.0 * (b - a)
    else:
        raise UnboundedObjective(f"player {i}'s leader payoff keeps rising with the strategy")

    left = grid[max(k - 1, 0)]
    right = grid[min(k + 1, len(grid) - 1)]
    best_t, best_v = _refine(leader, left, grid[k], right)
    if vals[k] > best_v + 1e-12 * max(1.0, abs(best_v)):
        best_t, best_v = float(grid[k]), float(vals[k])
    return LeaderResult(best_t, best_v, leader.profile(best_t), float(grid[k]))


def _refine(leader: _Leader, left: float, mid: float, right: float) -> tuple[float, float]:
    scale = max(1.0, abs(mid))
    if left < mid < right:
        res = minimize_scalar(lambda t: -leader.value(t), bracket=(left, mid, right), method="golden",
                              options={"xtol": 1e-4})
        t = float(res.x)
    else:
        res = minimize_scalar(lambda t: -leader.value(t), bounds=(left, right), method="bounded",
                              options={"xatol": 1e-4 * scale})
        t = float(res.x)
    t = min(max(t, left), right)
    polished = _polish(leader, t, left, right)
    v = leader.value(t)
    if polished is not None:
        pv = leader.value(polished)
        # payoffs are flat at the optimum; only a clear loss rejects the root
        if pv >= v - 1e-12 * max(1.0, abs(v)):
            return float(polished), float(pv)
    return t, float(v)


def _polish(leader: _Leader, t: float, left: float, right: float) -> float | None:
    """Root of the leader's marginal payoff near ``t``, if it changes sign nearby."""
    try:
        width = 1e-3 * max(1.0, abs(t))
        a, b = max(left, t - width), min(right, t + width)
        fa, fb = leader.slope(a), leader.slope(b)
        while fa < 0 and a > left:
            a, fa = max(left, a - 4 * width), None
            fa = leader.slope(a)
            width *= 4
        width = 1e-3 * max(1.0, abs(t))
        while fb > 0 and b < right:
            b = min(right, b + 4 * width)
            fb = leader.slope(b)
            width *= 4
        if fa > 0 > fb:
            return float(brentq(leader.slope, a, b, xtol=1e-14 * max(1.0, abs(t)), rtol=1e-15))
    except (NaeqError, ArithmeticError, ValueError, np.linalg.LinAlgError):
        return None
    return None


def _local_search(leader: _Leader, around: float) -> LeaderResult | None:
    game, i = leader.game, leader.i
    lo, hi = game.lower[i], game.upper[i]
    try:
        width = 1e-2 * max(1.0, abs(around))
        a, b = max(lo, around - width), min(hi, around + width)
        fa, fb = leader.slope(a), leader.slope(b)
        for _ in range(30):
            if fa > 0 > fb:
                break
            if fa <= 0 and a > lo:
                a = max(lo, a - width)
                fa = leader.slope(a)
            if fb >= 0 and b < hi:
                b = min(hi, b + width)
                fb = leader.slope(b)
            width *= 2
            if (a <= lo and fa <= 0) or (b >= hi and fb >= 0):
                return None
        else:
            return None
        t = float(brentq(leader.slope, a, b, xtol=1e-14 * max(1.0, abs(around)), rtol=1e-15))
    except (NaeqError, ArithmeticError, ValueError, np.linalg.LinAlgError):
        return None
    return LeaderResult(t, leader.value(t), leader.profile(t))


def slope_identity_terms(game: GameSpec, alpha, x, i: int, settings: NaeSettings = NaeSettings(),
                 bias: BiasFunction = MULTIPLICATIVE) -> tuple[float, float, np.ndarray]:
    """Residual, relative residual and response slopes of the bias characterization."""
    x = np.asarray(x, dtype=float)
    slopes = fd_follower_slopes(game, np.delete(np.asarray(alpha, float), i), x, i, settings.slope_step,
                                replace(settings.inner, tol=min(settings.inner.tol, 1e-12)), bias)
    h = first_step(x)
    xin = np.clip(x, game.lo + h, game.hi - h)
    jac = demand_jacobian(game, xin)
    s = jac[i, i]
    res = float(bias(s, alpha[i]) - s - slopes @ jac[i])
    rel = abs(res) / max(abs(s), abs(bias(s, alpha[i])), 1e-300)
    return res, rel, slopes


def _slope_identity_update(game, alpha, x, bias):
    """Biases implied by the response-slope characterization at ``x``."""
    out = np.empty(game.n)
    h = first_step(x)
    xin = np.clip(x, game.lo + h, game.hi - h)
    jac = demand_jacobian(game, xin)
    for i in range(game.n):
        resp = follower_slopes(game, alpha, x, i, bias)
        s = jac[i, i]
        out[i] = float(bias.invert(s + resp @ jac[i], s))
    return out


def solve_nae(game: GameSpec, settings: NaeSettings = NaeSettings(),
              bias: BiasFunction = MULTIPLICATIVE) -> NaeReport:
    """Fixed point of "each player's bias makes its strategy a Stackelberg-leader strategy"."""
    n = game.n
    lo_a, hi_a = bias.solve_bounds
    alpha = np.ones(n) if settings.alpha0 is None else np.asarray(settings.alpha0, dtype=float)
    inner = settings.inner
    nash = solve_profile(game, np.ones(n), inner, bias=bias)
    x = nash.x.copy()
    notes: list[str] = []
    trajectory = [alpha.copy()]
    outer = 0

    if settings.warm_start and n > 1:
        for _ in range(settings.max_outer):
            outer += 1
            x = solve_profile(game, alpha, inner.with_x0(x), bias=bias).x
            target = np.clip(_slope_identity_update(game, alpha, x, bias), lo_a, hi_a)
            if np.max(np.abs(target - alpha)) <= settings.tol:
                alpha = target
                break
            alpha = alpha + settings.damping * (target - alpha)
            trajectory.append(alpha.copy())

    clipped_for = 0
    local = True
    leaders: list[LeaderResult | None] = [None] * n
    for _ in range(settings.max_outer):
        outer += 1
        x = solve_profile(game, alpha, inner.with_x0(x), bias=bias).x
        target = alpha.copy()
        clipped = False
        for i in range(n):
            res = stackelberg_best(game, i, np.delete(alpha, i), settings, x_ref=x,
                                   around=float(x[i]) if local else None, bias=bias)
            leaders[i] = res
            raw = _raw_implied(game, res.profile, i, bias)
            if not math.isfinite(raw) or raw < lo_a or raw > hi_a:
                clipped = True
                raw = hi_a if not math.isfinite(raw) or raw > hi_a else lo_a
            target[i] = raw
        gap = target - alpha
        clipped_for = clipped_for + 1 if clipped else 0
        if clipped_for >= settings.clip_patience:
            raise NoInteriorNAE(f"implied biases stayed at the bounds {bias.solve_bounds}")
        if np.max(np.abs(gap)) <= settings.tol:
            if local:
                # a global scan must agree before the fixed point is accepted
                local = False
                continue
            alpha = target
            break
        alpha = alpha + settings.damping * gap
        trajectory.append(alpha.copy())
    else:
        raise NonConvergence("bias fixed point did not settle", best=alpha,
                             residual=float(np.max(np.abs(gap))), trajectory=trajectory)

    eq = solve_profile(game, alpha, inner.with_x0(x), bias=bias)
    x = eq.x
    lead_x = np.array([r.x for r in leaders])
    gaps = np.array([r.value for r in leaders]) - eq.profit
    residuals = np.zeros(n)
    relative = np.zeros(n)
    slopes = np.zeros((n, n))
    if n > 1:
        for i in range(n):
            residuals[i], relative[i], slopes[i] = slope_identity_terms(game, alpha, x, i, settings, bias)
    reply = np.array([
        perceived_best_reply(game, 1.0, np.delete(x, i), i, bias, guess=x[i]) for i in range(n)
    ])
    verdict = verify_nae(game, alpha, x, settings.deviation_grid, settings, bias) if settings.verify else None
    if np.any(np.isclose(alpha, lo_a)) or np.any(np.isclose(alpha, hi_a)):
        notes.append("bias at the solver truncation bound")
    return NaeReport(
        alpha_star=alpha, x_star=x, demand=eq.demand, profit=eq.profit,
        slope_identity_residual=residuals, slope_identity_relative=relative, response_slopes=slopes,
        stackelberg_x=lead_x, stackelberg_gaps=gaps,
        x_nash=nash.x, profit_nash=nash.profit, unbiased_reply=reply,
        outer_iterations=outer, verdict=verdict, fixed_points=[alpha.copy()], notes=notes,
    )


def default_deviation_grid(bias: BiasFunction = MULTIPLICATIVE) -> np.ndarray:
    lo = bias.solve_bounds[0]
    hi = min(5.0, bias.solve_bounds[1])
    return np.append(np.geomspace(lo, hi, 101), 1.0)


def verify_nae(game: GameSpec, alpha, x, deviation_grid=None, settings: NaeSettings = NaeSettings(),
               bias: BiasFunction = MULTIPLICATIVE) -> Verdict:
    """Check that no single player gains by switching to another bias on the grid."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    grid = default_deviation_grid(bias) if deviation_grid is None else np.asarray(deviation_grid, float)
    base = game.payoffs(x)
    worst, who, which = -math.inf, None, None
    inconclusive = []
    checked = 0
    for i in range(game.n):
        warm = x
        for a in np.sort(grid):
            if not bias.contains(a):
                continue
            trial = alpha.copy()
            trial[i] = a
            try:
                rep = solve_profile(game, trial, settings.inner, x0=warm, bias=bias)
            except (NaeqError, ArithmeticError):
                inconclusive.append((i, float(a)))
                continue
            warm = rep.x
            checked += 1
            gain = rep.profit[i] - base[i]
            if gain > worst:
                worst, who, which = float(gain), i, float(a)
    tol = settings.verify_tol * max(1.0, float(np.max(np.abs(base))))
    return Verdict(worst <= tol, worst, who, which, inconclusive, checked)


@dataclass(frozen=True)
class Classification:
    predicted: dict
    observed: dict
    mismatches: list

    @property
    def consistent(self) -> bool:
        return not self.mismatches


def _sign(v: float, tol: float = 0.0) -> int:
    return 1 if v > tol else (-1 if v < -tol else 0)


def classify_directions(audit: AuditReport, nae: NaeReport, nash=None, margin: float = 1e-8) -> Classification:
    """Compare sign-level predictions with the computed NAE and Nash profiles.

    Predictions: ``sign(x* - BR(x*)) = comp * extr``;
    ``sign(alpha* - 1) = -(partial * extr * comp)``; complements make the NAE
    Pareto-dominate Nash, substitutes the reverse.
    """
    if not audit.definite:
        raise IndefiniteSigns("audit did not certify constant derivative signs")
    comp, extr, partial = audit.sign_comp, audit.sign_extr, audit.sign_partial
    profit_nash = nae.profit_nash
    predicted = {
        "strategy": comp * extr,
        "bias": -(partial * extr * comp),
        "pareto": "nae" if comp > 0 else "nash",
    }
    scale = lambda v: margin * max(1.0, abs(v))  # noqa: E731
    strat = [_sign(xs - br, scale(xs)) for xs, br in zip(nae.x_star, nae.unbiased_reply)]
    bias_dir = [_sign(a - 1.0, 1e-9) for a in nae.alpha_star]
    diff = nae.profit - profit_nash
    if np.all(diff > margin):
        pareto = "nae"
    elif np.all(diff < -margin):
        pareto = "nash"
    else:
        pareto = "neither"
    observed = {"strategy": strat, "bias": bias_dir, "pareto": pareto}
    mismatches = []
    if any(s != predicted["strategy"] for s in strat):
        mismatches.append("strategy")
    if any(s != predicted["bias"] for s in bias_dir):
        mismatches.append("bias")
    if pareto != predicted["pareto"]:
        mismatches.append("pareto")
    return Classification(predicted, observed, mismatches)
