"""Sampling audit of the structural sign and shape conditions.

Checks, by id:

* ``A1`` every payoff externality ``dpi_i/dx_j`` has one common strict sign;
* ``A2`` ``dpi_i/dx_i`` and ``dpi_i/dq_i * dq_i/dx_i`` each keep one sign;
* ``A3`` perceived own second derivatives are negative for every sampled bias;
* ``A4`` perceived cross second derivatives keep one common sign;
* ``A5`` perceived best replies map some box into itself;
* ``A6`` secondary adaptation moves followers in the same direction as the
  first adaptation after a unilateral deviation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import SolverSettings, perceived_best_reply, solve_alpha_equilibrium
from .errors import NaeqError, SampleFailure
from .game import (
    MULTIPLICATIVE,
    BiasFunction,
    GameSpec,
    externalities,
    marginal_terms,
    perceived_jacobian,
    strategy_box,
)

PASS, FAIL, VACUOUS, HEURISTIC = "pass", "fail", "vacuous", "heuristic-pass"
CHECKS = ("A1", "A2", "A3", "A4", "A5", "A6")


@dataclass(frozen=True)
class SamplingPlan:
    """Where and at which biases the audit evaluates derivatives.

    ``box`` defaults to the Nash profile widened by ``spread`` in each
    direction, clipped inside the strategy intervals.
    """

    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    spread: float = 0.25
    random_points: int = 100
    grid_per_axis: int = 3
    alpha_grid: tuple[float, ...] = (0.05, 0.25, 0.6, 1.0, 1.5, 3.0, 20.0)
    random_alphas: int = 5
    deviations: tuple[float, ...] = (-0.5, -0.2, -0.05, 0.05, 0.2, 0.5)
    equilibrium_alphas: int = 6
    seed: int = 0


@dataclass(frozen=True)
class AuditReport:
    sign_comp: int | None
    sign_extr: int | None
    sign_partial: int | None
    passed: dict[str, str]
    witnesses: dict[str, dict] = field(default_factory=dict)
    margins: dict[str, float] = field(default_factory=dict)
    points: int = 0
    failures: int = 0

    @property
    def definite(self) -> bool:
        return None not in (self.sign_comp, self.sign_extr, self.sign_partial)

    def ok(self, check: str) -> bool:
        return self.passed[check] in (PASS, VACUOUS, HEURISTIC)


def _common_sign(values: np.ndarray) -> int | None:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None
    if np.all(values > 0):
        return 1
    if np.all(values < 0):
        return -1
    return None


class _SignTracker:
    """Accumulates values and remembers the first point breaking the sign."""

    def __init__(self):
        self.sign = 0
        self.broken = False
        self.witness = None
        self.margin = math.inf

    def add(self, values, where: dict):
        values = np.ravel(np.asarray(values, dtype=float))
        if values.size == 0:
            return
        self.margin = min(self.margin, float(np.min(np.abs(values))))
        if self.broken:
            return
        s = _common_sign(values)
        if s is None or (self.sign and s != self.sign):
            self.broken = True
            self.witness = dict(where, values=values.tolist())
            return
        self.sign = s

    @property
    def result(self) -> int | None:
        return None if self.broken or self.sign == 0 else self.sign


def _sample_points(game: GameSpec, plan: SamplingPlan, center: np.ndarray) -> tuple[np.ndarray, np.ndarray, list]:
    if plan.box is not None:
        lo, hi = np.asarray(plan.box[0], float), np.asarray(plan.box[1], float)
    else:
        lo, hi = strategy_box(game, center, plan.spread)
    rng = np.random.default_rng(plan.seed)
    pts = []
    if plan.grid_per_axis > 1 and plan.grid_per_axis ** game.n <= 729:
        axes = [np.linspace(l, h, plan.grid_per_axis) for l, h in zip(lo, hi)]
        pts.extend(np.array(p) for p in itertools.product(*axes))
    pts.extend(rng.uniform(lo, hi) for _ in range(plan.random_points))
    return lo, hi, pts


def _alphas(plan: SamplingPlan, bias: BiasFunction) -> np.ndarray:
    lo, hi = bias.solve_bounds
    grid = [a for a in plan.alpha_grid if lo <= a <= hi]
    rng = np.random.default_rng(plan.seed + 1)
    draws = np.exp(rng.uniform(math.log(lo), math.log(hi), plan.random_alphas))
    return np.unique(np.concatenate([grid, draws]))


def audit_assumptions(game: GameSpec, bias: BiasFunction = MULTIPLICATIVE,
                      plan: SamplingPlan = SamplingPlan(),
                      settings: SolverSettings = SolverSettings()) -> AuditReport:
    """Check the six structural conditions on a seeded sample."""
    n = game.n
    nash = solve_alpha_equilibrium(game, np.ones(n), settings).x
    lo, hi, points = _sample_points(game, plan, nash)
    alphas = _alphas(plan, bias)
    off = ~np.eye(n, dtype=bool)

    extr, partial, indirect = _SignTracker(), _SignTracker(), _SignTracker()
    concave, comp, comp_true = _SignTracker(), _SignTracker(), _SignTracker()
    failures = 0
    for x in points:
        try:
            _, dpx, dpq, own = marginal_terms(game, x)
            ext = externalities(game, x)
            where = {"x": x.tolist()}
            extr.add(ext[off], where)
            partial.add(dpx, where)
            indirect.add(dpq * own, where)
            for a in alphas:
                al = np.full(n, a)
                jac = perceived_jacobian(game, al, x, bias)
                w = dict(where, alpha=float(a))
                concave.add(-np.diag(jac), w)  # positive when concave
                comp.add(jac[off], w)
                if a == 1.0:
                    comp_true.add(jac[off], w)
        except (NaeqError, ArithmeticError, ValueError):
            failures += 1
    if failures > 0.01 * len(points):
        raise SampleFailure(f"evaluators failed at {failures} of {len(points)} sampled points")

    passed: dict[str, str] = {}
    witnesses: dict[str, dict] = {}
    if n == 1:
        passed["A1"] = VACUOUS
        passed["A4"] = VACUOUS
    else:
        passed["A1"] = PASS if extr.result else FAIL
        passed["A4"] = PASS if comp.result else FAIL
    passed["A2"] = PASS if partial.result and indirect.result else FAIL
    passed["A3"] = PASS if concave.result == 1 else FAIL
    for key, tracker in (("A1", extr), ("A2", partial if partial.broken else indirect),
                         ("A3", concave), ("A4", comp)):
        if passed[key] == FAIL and tracker.witness is not None:
            witnesses[key] = tracker.witness
    if passed["A3"] == FAIL and concave.witness is None:
        witnesses["A3"] = {"reason": "perceived second derivative never negative"}

    passed["A5"], box = _bounded_replies(game, bias, nash)
    if passed["A5"] == FAIL:
        witnesses["A5"] = {"reason": "no self-mapping box found", "last_box": box}

    if n == 1:
        passed["A6"] = VACUOUS
    else:
        status, witness = _secondary_adaptation(game, plan, bias, settings, nash)
        passed["A6"] = status
        if witness is not None:
            witnesses["A6"] = witness

    margins = {
        "externality": extr.margin,
        "own_partial": partial.margin,
        "indirect": indirect.margin,
        "concavity": concave.margin,
        "cross_second": comp.margin,
    }
    return AuditReport(
        sign_comp=None if n == 1 else (comp_true.result if comp.result else None),
        sign_extr=None if n == 1 else extr.result,
        sign_partial=partial.result,
        passed=passed,
        witnesses=witnesses,
        margins=margins,
        points=len(points),
        failures=failures,
    )


def _bounded_replies(game: GameSpec, bias: BiasFunction, nash: np.ndarray):
    """Status and box for the bounded-reply condition."""
    amin, amax = bias.solve_bounds
    if game.kind == "linear-price" and np.all(np.asarray(game.params["c"]) >= 0):
        a = np.asarray(game.params["a"])
        b = np.asarray(game.params["b"])
        c = np.asarray(game.params["c"])
        w = np.asarray(game.params["w"])
        bt = b - c * w
        denom = (1 + amin) * bt - c * (1 - w)
        if np.all(denom > 0):
            upper = float(np.max(a / denom))
            return PASS, (0.0, upper)
        return FAIL, None
    if np.all(np.isfinite(game.lo)) and np.all(np.isfinite(game.hi)):
        return PASS, (game.lower, game.upper)
    # numeric: grow a box until extreme-bias replies to its corners stay inside
    lo = np.where(np.isfinite(game.lo), game.lo, nash - 4 * np.maximum(1.0, np.abs(nash)))
    hi = np.where(np.isfinite(game.hi), game.hi, nash + 4 * np.maximum(1.0, np.abs(nash)))
    for _ in range(8):
        ok = True
        try:
            for i in range(game.n):
                for corner in (lo, hi):
                    for a in (amin, amax):
                        r = perceived_best_reply(game, a, np.delete(corner, i), i, bias)
                        if not lo[i] <= r <= hi[i]:
                            ok = False
        except (NaeqError, ArithmeticError):
            ok = False
        if ok:
            return HEURISTIC, (lo.tolist(), hi.tolist())
        # square the scale so sublinear replies with large constants are caught
        width = hi - lo
        grow = np.maximum(2.0, width) * width
        lo, hi = (np.where(np.isfinite(game.lo), game.lo, hi - grow),
                  np.where(np.isfinite(game.hi), game.hi, lo + grow))
    return FAIL, (lo.tolist(), hi.tolist())


def _secondary_adaptation(game, plan, bias, settings, nash):
    rng = np.random.default_rng(plan.seed + 2)
    amin, amax = bias.solve_bounds
    profiles = [np.ones(game.n)]
    for _ in range(plan.equilibrium_alphas):
        profiles.append(np.exp(rng.uniform(math.log(max(amin, 0.2)), math.log(min(amax, 5.0)), game.n)))
    checked = 0
    for alpha in profiles:
        try:
            x = solve_alpha_equilibrium(game, alpha, settings.with_x0(nash)).x
        except NaeqError:
            continue
        for i in range(game.n):
            for d in plan.deviations:
                xi = x[i] + d * max(abs(x[i]), 1e-3)
                if not game.lower[i] <= xi <= game.upper[i]:
                    continue
                first = x.copy()
                first[i] = xi
                base = first.copy()
                for j in range(game.n):
                    if j != i:
                        first[j] = perceived_best_reply(game, alpha[j], np.delete(base, j), j, bias,
                                                        guess=x[j])
                second = first.copy()
                for j in range(game.n):
                    if j != i:
                        second[j] = perceived_best_reply(game, alpha[j], np.delete(first, j), j, bias,
                                                         guess=first[j])
                scale = 1e-9 * np.maximum(1.0, np.abs(x))
                for j in range(game.n):
                    if j == i:
                        continue
                    d1, d2 = first[j] - x[j], second[j] - x[j]
                    if abs(d1) <= scale[j] or abs(d2) <= scale[j]:
                        continue
                    checked += 1
                    if np.sign(d1) != np.sign(d2):
                        return FAIL, {"alpha": alpha.tolist(), "equilibrium": x.tolist(), "deviator": i,
                                      "deviation": float(xi), "follower": j,
                                      "first": float(first[j]), "second": float(second[j])}
    return (PASS if checked else VACUOUS), None
