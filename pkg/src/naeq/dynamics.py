"""Informal convergence stories as simulations.

``run_adjustment`` moves strategies step by step toward an alpha-equilibrium
while biases stay fixed.  ``run_replacement`` keeps strategies at the
alpha-equilibrium of the current bias profile and lets each firm fire its
analyst, more often after a bad review, drawing a replacement from a pool.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import SolverSettings, projected_residual, solve_alpha_equilibrium
from .errors import Divergence, InvalidParameters, NaeqError
from .game import MULTIPLICATIVE, BiasFunction, GameSpec, check_bias, marginal_terms, perceived_gradient
from .microfound import PRNG, rng_for

RULES = ("perceived-gradient", "elasticity-threshold")


# ---------------------------------------------------------------- adjustment


@dataclass(frozen=True)
class AdjustmentConfig:
    initial: tuple[float, ...]
    step: float = 0.1
    max_steps: int = 10_000
    tol: float = 1e-9
    rule: str = "perceived-gradient"
    bound: float = 1e8

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidParameters("step must be positive")
        if self.rule not in RULES:
            raise InvalidParameters(f"rule must be one of {RULES}")
        if self.max_steps < 1 or not self.tol > 0:
            raise InvalidParameters("need max_steps >= 1 and tol > 0")


@dataclass(frozen=True)
class AdjustmentResult:
    path: np.ndarray
    converged: bool
    steps: int
    residual: float
    equilibrium: np.ndarray | None
    distance: float


def _elasticity_step(game, alpha, x, step):
    """Raise price while perceived elasticity is below one, lower it while above."""
    q, _, _, own = marginal_terms(game, np.maximum(x, 1e-12))
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(q > 0, -x * alpha * own / q, np.inf)
    move = np.clip(1.0 - eta, -1.0, 1.0)
    return x + step * np.maximum(x, 1e-12) * move


def run_adjustment(game: GameSpec, alpha, cfg: AdjustmentConfig,
                   bias: BiasFunction = MULTIPLICATIVE,
                   settings: SolverSettings = SolverSettings()) -> AdjustmentResult:
    """Iterate the adjustment rule from ``cfg.initial`` with biases held at ``alpha``.

    Converged means the perceived first-order residual fell below ``tol``
    and the endpoint lies within ``sqrt(tol)`` (relative) of the
    alpha-equilibrium found by the solver from that endpoint.  Raises
    ``Divergence`` when the iterate leaves ``bound`` or when the residual
    ends above where it started.
    """
    alpha = check_bias(alpha, game.n, bias)
    if cfg.rule == "elasticity-threshold" and game.kind != "linear-price":
        raise InvalidParameters("the elasticity rule applies to price games only")
    x = game.clip(np.asarray(cfg.initial, dtype=float))
    if x.shape != (game.n,):
        raise InvalidParameters(f"initial profile needs {game.n} entries")
    path = [x.copy()]
    r0 = res = projected_residual(game, alpha, x, bias=bias)
    steps = 0
    while res > cfg.tol and steps < cfg.max_steps:
        if cfg.rule == "perceived-gradient":
            x = x + cfg.step * perceived_gradient(game, alpha, x, bias)
        else:
            x = _elasticity_step(game, alpha, x, cfg.step)
        x = game.clip(x)
        steps += 1
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > cfg.bound:
            raise Divergence(f"iterate left the bound {cfg.bound:g} after {steps} steps")
        path.append(x.copy())
        res = projected_residual(game, alpha, x, bias=bias)
    if res > cfg.tol and res >= r0:
        raise Divergence(f"residual grew from {r0:.3g} to {res:.3g}; step {cfg.step:g} is unstable")
    eq, dist = None, math.inf
    if res <= cfg.tol:
        try:
            eq = solve_alpha_equilibrium(game, alpha, settings.with_x0(x), bias).x
            dist = float(np.max(np.abs(eq - x) / np.maximum(1.0, np.abs(eq))))
        except NaeqError:
            eq = None
    converged = eq is not None and dist <= math.sqrt(cfg.tol)
    return AdjustmentResult(np.array(path), converged, steps, res, eq, dist)


# ---------------------------------------------------------------- replacement


@dataclass(frozen=True)
class ReplacementConfig:
    """Hire/fire process over analyst biases.

    ``pool`` is a finite set of biases, or an interval ``(lo, hi)`` when
    ``mutation_scale`` is given, in which case a new analyst's bias is the
    old one times a log-normal factor.  A firm replaces its analyst with
    probability ``p_max / (1 + exp(-(scale * shortfall + offset)))`` where
    ``shortfall`` is the relative gap between its trailing average profit
    and its current profit.
    """

    pool: tuple[float, ...] = (0.6, 1.0)
    horizon: int = 10_000
    seed: int = 0
    initial: tuple[float, ...] | None = None
    review_period: int = 1
    window: int = 10
    p_max: float = 0.2
    offset: float = -2.0
    scale: float = 50.0
    revert_on_worse: bool = True
    mutation_scale: float | None = None
    resolution: int = 6

    def __post_init__(self):
        if not 0 <= self.p_max <= 1:
            raise InvalidParameters("p_max must lie in [0, 1]")
        if self.scale < 0:
            raise InvalidParameters("scale must be non-negative so firing falls with profit")
        if self.review_period < 1 or self.horizon < self.review_period:
            raise InvalidParameters("horizon must cover at least one review period")
        if self.window < 1:
            raise InvalidParameters("window must be at least one review")
        if len(self.pool) < 1 or any(not a > 0 for a in self.pool):
            raise InvalidParameters("pool biases must be positive")
        if self.mutation_scale is not None:
            if len(self.pool) != 2 or not self.pool[0] < self.pool[1] or self.mutation_scale <= 0:
                raise InvalidParameters("mutation needs an interval pool (lo, hi) and a positive scale")

    @property
    def reviews(self) -> int:
        return self.horizon // self.review_period

    def probability(self, shortfall: float) -> float:
        z = self.scale * shortfall + self.offset
        return self.p_max / (1.0 + math.exp(-z)) if z > -700 else 0.0


@dataclass
class ReplacementResult:
    alpha_path: np.ndarray
    x_path: np.ndarray
    profit_path: np.ndarray
    valid: np.ndarray
    occupancy: dict[tuple[float, ...], float]
    modal_profile: tuple[float, ...]
    modal_share: float
    invalid_periods: int
    metadata: dict = field(default_factory=dict)

    def long_rows(self) -> list[tuple[int, int, float, float, float]]:
        """``(period, firm, alpha, x, profit)`` rows."""
        rows = []
        for t in range(self.alpha_path.shape[0]):
            for i in range(self.alpha_path.shape[1]):
                rows.append((t, i, float(self.alpha_path[t, i]), float(self.x_path[t, i]),
                             float(self.profit_path[t, i])))
        return rows


def run_replacement(game: GameSpec, cfg: ReplacementConfig, bias: BiasFunction = MULTIPLICATIVE,
                    settings: SolverSettings = SolverSettings()) -> ReplacementResult:
    """Simulate analyst replacement; one row per review period."""
    n = game.n
    rng = rng_for(cfg.seed)
    pool = np.asarray(cfg.pool, dtype=float)
    if cfg.initial is None:
        start = np.full(n, 1.0 if (cfg.mutation_scale is not None or 1.0 in cfg.pool) else pool[0])
    else:
        start = np.asarray(cfg.initial, dtype=float)
    alpha = check_bias(start, n, bias)
    if cfg.mutation_scale is None and not all(a in cfg.pool for a in alpha):
        raise InvalidParameters("initial biases must come from the pool")

    cache: dict[tuple, tuple[np.ndarray, np.ndarray] | None] = {}

    def play(profile):
        key = tuple(np.round(profile, cfg.resolution))
        if key not in cache:
            try:
                rep = solve_alpha_equilibrium(game, np.array(key), settings, bias)
                cache[key] = (rep.x, rep.profit)
            except NaeqError:
                cache[key] = None
        return cache[key]

    def draw(current):
        if cfg.mutation_scale is not None:
            new = current * math.exp(cfg.mutation_scale * rng.standard_normal())
            return float(min(max(new, pool[0]), pool[1]))
        others = pool[pool != current]
        return float(rng.choice(others)) if others.size else float(current)

    R = cfg.reviews
    alphas = np.empty((R, n))
    xs = np.full((R, n), np.nan)
    profits = np.full((R, n), np.nan)
    valid = np.zeros(R, dtype=bool)
    history: list[list[float]] = [[] for _ in range(n)]
    pending: list[tuple[float, float] | None] = [None] * n  # (old bias, profit before the switch)

    for t in range(R):
        alphas[t] = alpha
        out = play(alpha)
        if out is None:
            for i in range(n):
                if rng.random() < cfg.p_max:
                    alpha[i] = draw(alpha[i])
                pending[i] = None
            continue
        valid[t] = True
        xs[t], profits[t] = out
        new_alpha = alpha.copy()
        for i in range(n):
            pi = float(profits[t, i])
            if cfg.revert_on_worse and pending[i] is not None:
                old, before = pending[i]
                pending[i] = None
                if pi < before:
                    new_alpha[i] = old
                    history[i].append(pi)
                    continue
            past = history[i][-cfg.window:]
            if past:
                ref = sum(past) / len(past)
                shortfall = (ref - pi) / max(abs(ref), 1e-12)
            else:
                shortfall = 0.0
            history[i].append(pi)
            if rng.random() < cfg.probability(shortfall):
                new_alpha[i] = draw(alpha[i])
                if new_alpha[i] != alpha[i]:
                    pending[i] = (float(alpha[i]), pi)
        alpha = new_alpha

    counts = Counter(tuple(np.round(alphas[t], cfg.resolution).tolist()) for t in range(R) if valid[t])
    total = sum(counts.values())
    occupancy = {k: v / total for k, v in sorted(counts.items())} if total else {}
    if occupancy:
        modal = max(occupancy, key=lambda k: (occupancy[k], k))
        share = occupancy[modal]
    else:
        modal, share = tuple(alpha.tolist()), 0.0
    return ReplacementResult(alphas, xs, profits, valid, occupancy, modal, share, int(R - valid.sum()),
                             {"prng": PRNG, "seed": cfg.seed})
