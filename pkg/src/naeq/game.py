"""Games, bias functions and bias-distorted marginal profits.

A game is ``n`` players choosing real strategies from intervals.  Player
``i`` earns ``profit_i(x_i, q_i)`` where ``q = demand(x)``.  An analyst with
bias ``alpha_i`` reports the own demand sensitivity ``dq_i/dx_i`` through a
bias function ``f``; the firm then acts on the *perceived* marginal profit

    dpi_i/dx_i + dpi_i/dq_i * f(dq_i/dx_i, alpha_i).

All evaluators are vectorised over players: ``profit(x, q)`` returns the
vector ``(profit_i(x_i, q_i))_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidParameters, NonFiniteEvaluation, OutOfDomain

EPS = np.finfo(float).eps
FIRST_STEP = EPS ** (1.0 / 3.0)
SECOND_STEP = EPS ** 0.25

KINDS = ("linear-price", "advertising", "team-production", "circle-example", "custom")

Vector = np.ndarray
VectorFn = Callable[[Vector], Vector]
PairFn = Callable[[Vector, Vector], Vector]


@dataclass(frozen=True)
class BiasFunction:
    """Multiplicative analyst bias ``f(s, alpha) = alpha * s``.

    ``domain`` is the open interval A of feasible biases; ``solve_bounds`` is
    the closed truncation of A used by numerical solvers.
    """

    kind: str = "multiplicative"
    domain: tuple[float, float] = (0.0, math.inf)
    solve_bounds: tuple[float, float] = (0.05, 20.0)

    def __post_init__(self):
        if self.kind != "multiplicative":
            raise InvalidParameters(f"unsupported bias function kind {self.kind!r}")
        lo, hi = self.domain
        if not (0.0 <= lo < 1.0 < hi):
            raise InvalidParameters("bias domain must be a subset of (0, inf) containing 1")
        slo, shi = self.solve_bounds
        if not (lo <= slo < 1.0 < shi <= hi) or slo <= 0:
            raise InvalidParameters("solve_bounds must lie inside the domain and bracket 1")

    def __call__(self, s, alpha):
        return np.multiply(alpha, s)

    def invert(self, target, s):
        """Bias that maps sensitivity ``s`` to ``target``."""
        return np.divide(target, s)

    def contains(self, alpha) -> bool:
        a = np.asarray(alpha, dtype=float)
        lo, hi = self.domain
        return bool(np.all((a > lo) & (a < hi)))


MULTIPLICATIVE = BiasFunction()


@dataclass(frozen=True)
class GameSpec:
    """An n-player demand/profit game over real strategy intervals.

    ``demand_jacobian(x)[i, j]`` is ``dq_i/dx_j``.  Analytic derivative
    evaluators are optional; missing ones fall back to central differences.
    """

    n: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    demand: VectorFn
    profit: PairFn
    dprofit_dx: PairFn | None = None
    dprofit_dq: PairFn | None = None
    demand_jacobian: Callable[[Vector], np.ndarray] | None = None
    kind: str = "custom"
    params: Mapping = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameters("a game needs at least one player")
        if len(self.lower) != self.n or len(self.upper) != self.n:
            raise InvalidParameters("one interval per player is required")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise InvalidParameters(f"empty strategy interval [{lo}, {hi}]")
        if self.kind not in KINDS:
            raise InvalidParameters(f"unknown game kind {self.kind!r}")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))

    @property
    def analytic(self) -> bool:
        return None not in (self.dprofit_dx, self.dprofit_dq, self.demand_jacobian)

    @property
    def lo(self) -> Vector:
        return np.array(self.lower)

    @property
    def hi(self) -> Vector:
        return np.array(self.upper)

    def without_derivatives(self) -> "GameSpec":
        """Copy of the game that forces finite-difference derivatives."""
        return replace(self, dprofit_dx=None, dprofit_dq=None, demand_jacobian=None)

    def evaluate(self, x) -> tuple[Vector, Vector]:
        """Demands and profits at ``x``."""
        x = np.asarray(x, dtype=float)
        q = _finite(self.demand(x), "demand")
        return q, _finite(self.profit(x, q), "profit")

    def payoffs(self, x) -> Vector:
        return self.evaluate(x)[1]

    def clip(self, x) -> Vector:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


@dataclass(frozen=True)
class DerivativeReport:
    """First-order terms and cross effects for one player at one profile."""

    own_partial: float
    demand_margin: float
    own_sensitivity: float
    cross_sensitivity: Vector
    cross_second: Vector
    method: str
    step: float


def _finite(values, what: str) -> Vector:
    arr = np.asarray(values, dtype=float)
    if not np.isfinite(arr).all():
        raise NonFiniteEvaluation(f"{what} evaluator returned a non-finite value")
    return arr


def first_step(x) -> Vector:
    return FIRST_STEP * np.maximum(1.0, np.abs(x))


def inside(game: GameSpec, x) -> Vector:
    """Check ``x`` lies in the box and move boundary coordinates one step inside."""
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise OutOfDomain(f"expected {game.n} strategies, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise OutOfDomain("strategy profile is not finite")
    lo, hi = game.lo, game.hi
    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise OutOfDomain(f"profile {x} outside the strategy box")
    h = first_step(x)
    return np.clip(x, lo + h, hi - h)


def marginal_terms(game: GameSpec, x) -> tuple[Vector, Vector, Vector, Vector]:
    """``(q, dpi/dx_i, dpi/dq_i, dq_i/dx_i)`` for every player at an interior ``x``."""
    q = _finite(game.demand(x), "demand")
    if game.analytic:
        dpx = game.dprofit_dx(x, q)
        dpq = game.dprofit_dq(x, q)
        own = np.diagonal(game.demand_jacobian(x))
    else:
        dpx, dpq, own = _fd_terms(game, x, q)
    if not (np.isfinite(dpx).all() and np.isfinite(dpq).all() and np.isfinite(own).all()):
        raise NonFiniteEvaluation("a profit or demand derivative is not finite")
    return q, dpx, dpq, own


def _fd_terms(game: GameSpec, x, q):
    h = first_step(x)
    dpx = (game.profit(x + h, q) - game.profit(x - h, q)) / (2 * h)
    hq = first_step(q)
    dpq = (game.profit(x, q + hq) - game.profit(x, q - hq)) / (2 * hq)
    own = np.empty(game.n)
    for i in range(game.n):
        e = np.zeros(game.n)
        e[i] = h[i]
        own[i] = (game.demand(x + e)[i] - game.demand(x - e)[i]) / (2 * h[i])
    return dpx, dpq, own


def demand_jacobian(game: GameSpec, x) -> np.ndarray:
    """``J[i, j] = dq_i/dx_j``, analytic when available."""
    if game.demand_jacobian is not None:
        return _finite(game.demand_jacobian(x), "demand_jacobian")
    h = first_step(x)
    jac = np.empty((game.n, game.n))
    for j in range(game.n):
        e = np.zeros(game.n)
        e[j] = h[j]
        jac[:, j] = (game.demand(x + e) - game.demand(x - e)) / (2 * h[j])
    return _finite(jac, "demand")


def perceived_gradient(game: GameSpec, alpha, x, bias: BiasFunction = MULTIPLICATIVE) -> Vector:
    """Bias-distorted marginal profit of every player (no domain checks)."""
    _, dpx, dpq, own = marginal_terms(game, x)
    return dpx + dpq * bias(own, alpha)


def perceived_marginal_profit(game: GameSpec, alpha, x, i: int,
                              bias: BiasFunction = MULTIPLICATIVE) -> float:
    """Perceived marginal profit of player ``i`` at profile ``x``.

    ``alpha`` may be the full bias profile or player ``i``'s scalar bias.
    """
    alpha = np.asarray(alpha, dtype=float)
    a_i = float(alpha) if alpha.ndim == 0 else float(alpha[i])
    if not bias.contains(a_i):
        raise InvalidParameters(f"bias {a_i} outside the feasible set")
    xin = inside(game, x)
    full = np.ones(game.n)
    full[i] = a_i
    return float(perceived_gradient(game, full, xin, bias)[i])


def _stencil(game: GameSpec, x, step: Vector | None = None) -> tuple[Vector, Vector]:
    """Centre and step for differencing perceived gradients, kept inside the box."""
    x = np.asarray(x, dtype=float)
    if step is not None:
        h = np.asarray(step, dtype=float)
    elif game.analytic:
        h = first_step(x)
    else:
        h = SECOND_STEP * np.maximum(1.0, np.abs(x))
    h = np.minimum(h, (game.hi - game.lo) / 8)
    return np.clip(x, game.lo + 2 * h, game.hi - 2 * h), h


def perceived_jacobian(game: GameSpec, alpha, x, bias: BiasFunction = MULTIPLICATIVE,
                       step: Vector | None = None) -> np.ndarray:
    """``H[i, j] = d/dx_j`` of player i's perceived marginal profit."""
    x, h = _stencil(game, x, step)
    jac = np.empty((game.n, game.n))
    for j in range(game.n):
        e = np.zeros(game.n)
        e[j] = h[j]
        jac[:, j] = (perceived_gradient(game, alpha, x + e, bias)
                     - perceived_gradient(game, alpha, x - e, bias)) / (2 * h[j])
    return jac


def perceived_second(game: GameSpec, alpha, x, bias: BiasFunction = MULTIPLICATIVE) -> Vector:
    """Own perceived second derivative of every player."""
    x, h = _stencil(game, x)
    out = np.empty(game.n)
    for i in range(game.n):
        e = np.zeros(game.n)
        e[i] = h[i]
        out[i] = (perceived_gradient(game, alpha, x + e, bias)[i]
                  - perceived_gradient(game, alpha, x - e, bias)[i]) / (2 * h[i])
    return out


def derivative_report(game: GameSpec, x, i: int, method: str = "auto") -> DerivativeReport:
    """Terms of player ``i``'s unbiased first-order condition plus cross effects."""
    xin = inside(game, x)
    g = game if method in ("auto", "analytic") else game.without_derivatives()
    if method == "analytic" and not game.analytic:
        raise InvalidParameters("game has no analytic derivatives")
    _, dpx, dpq, own = marginal_terms(g, xin)
    jac = demand_jacobian(g, xin)
    ones = np.ones(game.n)
    cross2 = perceived_jacobian(g, ones, xin)[i]
    mask = np.arange(game.n) != i
    used = "analytic" if g.analytic else "central-difference"
    step = FIRST_STEP * max(1.0, abs(xin[i])) if g.analytic else SECOND_STEP * max(1.0, abs(xin[i]))
    return DerivativeReport(
        own_partial=float(dpx[i]),
        demand_margin=float(dpq[i]),
        own_sensitivity=float(own[i]),
        cross_sensitivity=jac[i, mask],
        cross_second=cross2[mask],
        method=used,
        step=float(step),
    )


def externalities(game: GameSpec, x) -> np.ndarray:
    """``E[i, j] = dpi_i/dx_j`` (total effect through demand), zero diagonal."""
    q = _finite(game.demand(x), "demand")
    dpq = game.dprofit_dq(x, q) if game.dprofit_dq is not None else _fd_terms(game, x, q)[1]
    ext = dpq[:, None] * demand_jacobian(game, x)
    np.fill_diagonal(ext, 0.0)
    return ext


def check_bias(alpha, n: int, bias: BiasFunction = MULTIPLICATIVE) -> Vector:
    """Validate a bias profile and return it as an array."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape == (1,) and n > 1:
        a = np.full(n, a[0])
    if a.shape != (n,):
        raise InvalidParameters(f"expected {n} biases, got {a.shape}")
    if not np.all(np.isfinite(a)) or not bias.contains(a):
        raise InvalidParameters(f"bias profile {a} outside the feasible set")
    return a


def negate_relabel(game: GameSpec) -> GameSpec:
    """The same game with every strategy relabelled ``x_i -> -x_i``."""
    demand, profit = game.demand, game.profit
    dpx, dpq, jac = game.dprofit_dx, game.dprofit_dq, game.demand_jacobian
    name = game.name[:-len("~negated")] if game.name.endswith("~negated") else game.name + "~negated"
    return GameSpec(
        n=game.n,
        lower=tuple(-v for v in game.upper),
        upper=tuple(-v for v in game.lower),
        demand=lambda x: demand(-x),
        profit=lambda x, q: profit(-x, q),
        dprofit_dx=None if dpx is None else (lambda x, q: -dpx(-x, q)),
        dprofit_dq=None if dpq is None else (lambda x, q: dpq(-x, q)),
        demand_jacobian=None if jac is None else (lambda x: -jac(-x)),
        kind="custom",
        params=dict(game.params, relabelled_from=game.kind),
        name=name,
    )


def strategy_box(game: GameSpec, center: Sequence[float], spread: float) -> tuple[Vector, Vector]:
    """Box ``center +- spread*|center|`` clipped strictly inside the game's intervals."""
    c = np.asarray(center, dtype=float)
    half = spread * np.maximum(np.abs(c), 1e-3)
    h = first_step(c)
    lo = np.maximum(c - half, game.lo + 2 * h)
    hi = np.minimum(c + half, game.hi - 2 * h)
    return lo, hi
