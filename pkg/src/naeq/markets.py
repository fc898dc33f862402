"""Closed-form applications: linear price competition, advertising, team production.

Each market type builds a :class:`~naeq.game.GameSpec` with analytic
derivatives so the generic solvers can be cross-checked against the
closed forms below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ComplexRoot, DegenerateDenominator, InvalidParameters
from .game import MULTIPLICATIVE, BiasFunction, GameSpec, check_bias


def _vec(values, n=None, name="parameter") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if n is not None and arr.shape == (1,):
        arr = np.full(n, arr[0])
    if n is not None and arr.shape != (n,):
        raise InvalidParameters(f"{name} needs {n} entries, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameters(f"{name} must be finite")
    return arr


# ---------------------------------------------------------------- price


@dataclass(frozen=True)
class LinearPriceMarket:
    """Demand ``q_i = a_i - b_i x_i + c_i * sum_j w_j x_j`` with profit ``x_i q_i``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    w: np.ndarray
    b_tilde: np.ndarray = field(init=False, repr=False)
    c_tilde: np.ndarray | None = field(init=False, repr=False)

    def __init__(self, a, b, c, w=None):
        b = _vec(b, name="b")
        n = b.size
        a, c = _vec(a, n, "a"), _vec(c, n, "c")
        w = np.full(n, 1.0 / n) if w is None else _vec(w, n, "w")
        if np.any(a <= 0) or np.any(b <= 0):
            raise InvalidParameters("intercepts and own slopes must be positive")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameters("weights must be positive and sum to 1")
        if not (np.all(c > 0) or np.all(c < 0) or np.all(c == 0)):
            raise InvalidParameters("cross slopes must share one strict sign")
        if np.any(np.abs(c) >= b):
            raise InvalidParameters("need |c_i| < b_i")
        if np.any(c < 0):
            ratio = np.abs(c) / b
            for i in range(n):
                if ratio.sum() - ratio[i] >= 1.0 / w[i]:
                    raise InvalidParameters("complement cross effects too strong for firm %d" % i)
        for name, val in (("a", a), ("b", b), ("c", c), ("w", w)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        bt = b - c * w
        bt.setflags(write=False)
        object.__setattr__(self, "b_tilde", bt)
        if n == 2:
            ct = c * w[::-1]
            ct.setflags(write=False)
        else:
            ct = None
        object.__setattr__(self, "c_tilde", ct)

    @classmethod
    def from_duopoly(cls, a, b_tilde, c_tilde) -> "LinearPriceMarket":
        """Duopoly written as ``q_i = a_i - b~_i x_i + c~_i x_j`` (equal weights)."""
        bt, ct = _vec(b_tilde, 2, "b_tilde"), _vec(c_tilde, 2, "c_tilde")
        return cls(a, bt + ct, 2.0 * ct, (0.5, 0.5))

    @classmethod
    def symmetric(cls, n: int, a: float, b: float, c: float) -> "LinearPriceMarket":
        if n < 1:
            raise InvalidParameters("need at least one firm")
        return cls(np.full(n, a), np.full(n, b), np.full(n, c))

    @property
    def n(self) -> int:
        return self.b.size

    def demand(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a - self.b * x + self.c * (self.w @ x)

    def jacobian(self, x=None) -> np.ndarray:
        return -np.diag(self.b) + np.outer(self.c, self.w)

    def upper_bounds(self) -> np.ndarray:
        return np.full(self.n, math.inf) if np.all(self.c >= 0) else self.a / self.b

    def game(self) -> GameSpec:
        jac = self.jacobian()
        return GameSpec(
            n=self.n,
            lower=(0.0,) * self.n,
            upper=tuple(self.upper_bounds()),
            demand=self.demand,
            profit=lambda x, q: x * q,
            dprofit_dx=lambda x, q: q,
            dprofit_dq=lambda x, q: np.asarray(x, dtype=float),
            demand_jacobian=lambda x: jac,
            kind="linear-price",
            params={"a": self.a.tolist(), "b": self.b.tolist(), "c": self.c.tolist(),
                    "w": self.w.tolist()},
            name="linear-price",
        )


def motivating_example() -> LinearPriceMarket:
    """Duopoly ``q_i = 20 - x_i + 0.8 x_j``."""
    return LinearPriceMarket.from_duopoly((20.0, 20.0), (1.0, 1.0), (0.8, 0.8))


def price_alpha_equilibrium(m: LinearPriceMarket, alpha) -> np.ndarray:
    """Prices of the alpha-equilibrium via the mean-price fixed point."""
    alpha = check_bias(alpha, m.n)
    denom = m.b + alpha * m.b_tilde
    if np.any(denom <= 0):
        raise DegenerateDenominator("non-positive price denominator")
    coef = 1.0 - np.sum(m.w * m.c / denom)
    if abs(coef) < 1e-14:
        raise DegenerateDenominator("mean-price equation has a vanishing coefficient")
    xbar = np.sum(m.w * m.a / denom) / coef
    return (m.a + m.c * xbar) / denom


def price_nash(m: LinearPriceMarket) -> np.ndarray:
    return price_alpha_equilibrium(m, np.ones(m.n))


def biased_best_reply(m: LinearPriceMarket, alpha_i: float, x, i: int) -> float:
    """Closed-form perceived best reply of firm ``i`` to the others' prices in ``x``."""
    x = np.asarray(x, dtype=float)
    others = m.w @ x - m.w[i] * x[i]
    return float((m.a[i] + m.c[i] * others) / ((1.0 + alpha_i) * m.b_tilde[i]))


def duopoly_alpha(m: LinearPriceMarket) -> float:
    if m.n != 2:
        raise InvalidParameters("duopoly formula needs two firms")
    ratio = m.c_tilde[0] * m.c_tilde[1] / (m.b_tilde[0] * m.b_tilde[1])
    if ratio > 1.0:
        raise ComplexRoot("cross effects exceed own effects")
    return math.sqrt(1.0 - ratio)


def symmetric_alpha(n: int, b: float, c: float) -> float:
    """Symmetric-oligopoly NAE bias for ``n`` firms with slopes ``b`` and ``c``.

    Solves ``s a^2 - (n-2) a + (n-1)/s + n - 2 - s = 0`` for
    ``s = b~/c~`` (signed), keeping the root in ``(0, 1]``.
    """
    if n < 1:
        raise InvalidParameters("need at least one firm")
    if n == 1 or c == 0:
        return 1.0
    bt, ct = b - c / n, c / n
    s = bt / ct
    disc = (n - 2) ** 2 - 4.0 * s * ((n - 1) / s + n - 2 - s)
    if disc < 0:
        raise ComplexRoot(f"negative discriminant {disc:g}")
    root = math.sqrt(disc)
    cands = [((n - 2) + sgn * root) / (2.0 * s) for sgn in (1.0, -1.0)]
    ok = [r for r in cands if 0.0 < r <= 1.0]
    if not ok:
        raise ComplexRoot(f"no admissible root among {cands}")
    return max(ok)


def symmetric_alpha_positive(n: int, r: float) -> float:
    """Substitutes-case form in ``r = |b~/c~|``; valid for ``c > 0``."""
    if n == 1:
        return 1.0
    disc = (n - 2) ** 2 - 4 * (n - 1) - 4 * r * (n - 2 - r)
    if disc < 0:
        raise ComplexRoot(f"negative discriminant {disc:g}")
    return (n - 2 + math.sqrt(disc)) / (2 * r)


def symmetric_prices(n: int, a: float, b: float, c: float, alpha: float | None = None) -> tuple[float, float]:
    """``(x*, x^NE)`` in a symmetric oligopoly."""
    if alpha is None:
        alpha = symmetric_alpha(n, b, c)
    x_star = a / ((1 + alpha) * b - c * (1 + alpha / n))
    x_ne = a / (2 * b - (1 + 1 / n) * c)
    return x_star, x_ne


@dataclass(frozen=True)
class ClosedFormNae:
    """Closed-form NAE with Nash reference values."""

    alpha: np.ndarray
    x: np.ndarray
    demand: np.ndarray
    profit: np.ndarray
    x_nash: np.ndarray
    profit_nash: np.ndarray


def _price_report(m: LinearPriceMarket, alpha) -> ClosedFormNae:
    x = price_alpha_equilibrium(m, alpha)
    q = m.demand(x)
    if np.any(q <= 0):
        raise InvalidParameters(f"non-positive equilibrium demand {q}")
    xn = price_nash(m)
    qn = m.demand(xn)
    return ClosedFormNae(np.asarray(alpha, dtype=float), x, q, x * q, xn, xn * qn)


def price_duopoly_nae(m: LinearPriceMarket) -> ClosedFormNae:
    return _price_report(m, np.full(2, duopoly_alpha(m)))


def price_symmetric_nae(m: LinearPriceMarket) -> ClosedFormNae:
    if not (np.all(m.a == m.a[0]) and np.all(m.b == m.b[0]) and np.all(m.c == m.c[0])
            and np.allclose(m.w, 1.0 / m.n, rtol=0, atol=1e-15)):
        raise InvalidParameters("symmetric formula needs identical firms and equal weights")
    return _price_report(m, np.full(m.n, symmetric_alpha(m.n, m.b[0], m.c[0])))


# ---------------------------------------------------------------- advertising


@dataclass(frozen=True)
class AdvertisingMarket:
    """Two firms with demand ``a_i + b_i sqrt(x_i) + c_i sqrt(x_i x_j)`` and profit ``p_i q_i - x_i``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: np.ndarray

    def __init__(self, a, b, c, p):
        a, b, c, p = (_vec(v, 2, nm) for v, nm in ((a, "a"), (b, "b"), (c, "c"), (p, "p")))
        if np.any(a <= 0) or np.any(b <= 0) or np.any(p <= 0):
            raise InvalidParameters("a, b and p must be positive")
        if not (np.all(c > 0) or np.all(c < 0) or np.all(c == 0)):
            raise InvalidParameters("interaction terms must share one strict sign")
        if np.any(np.abs(c) >= 1.0 / p):
            raise InvalidParameters("need |c_i| < 1/p_i")
        if np.any(c < 0) and np.any(np.abs(c) >= b / (b[::-1] * p[::-1])):
            raise InvalidParameters("need |c_i| < b_i / (b_j p_j) for negative interaction")
        for name, val in (("a", a), ("b", b), ("c", c), ("p", p)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    n = 2

    @property
    def caps(self) -> np.ndarray:
        """Budget caps keeping each rival's own effect non-negative."""
        if np.all(self.c >= 0):
            return np.full(2, math.inf)
        other = (self.b / np.abs(self.c))[::-1]
        return other ** 2

    def bias_domain(self) -> BiasFunction:
        """Biases for which perceived best replies stay bounded (``alpha^2 c1 c2 p1 p2 < 4``)."""
        k = float(self.c[0] * self.c[1] * self.p[0] * self.p[1])
        if k <= 0:
            return MULTIPLICATIVE
        top = 2.0 / math.sqrt(k)
        return BiasFunction(domain=(0.0, top), solve_bounds=(0.05, min(20.0, 0.95 * top)))

    def demand(self, x) -> np.ndarray:
        r = np.sqrt(np.asarray(x, dtype=float))
        return self.a + self.b * r + self.c * r * r[::-1]

    def jacobian(self, x) -> np.ndarray:
        r = np.sqrt(np.asarray(x, dtype=float))
        own = (self.b + self.c * r[::-1]) / (2 * r)
        cross = self.c * r / (2 * r[::-1])
        return np.array([[own[0], cross[0]], [cross[1], own[1]]])

    def game(self) -> GameSpec:
        p = self.p
        return GameSpec(
            n=2,
            lower=(0.0, 0.0),
            upper=tuple(self.caps),
            demand=self.demand,
            profit=lambda x, q: p * q - x,
            dprofit_dx=lambda x, q: -np.ones(2),
            dprofit_dq=lambda x, q: p.copy(),
            demand_jacobian=self.jacobian,
            kind="advertising",
            params={"a": self.a.tolist(), "b": self.b.tolist(), "c": self.c.tolist(),
                    "p": self.p.tolist()},
            name="advertising",
        )

    def profit(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.p * self.demand(x) - x


def advertising_equilibrium(m: AdvertisingMarket, alpha) -> np.ndarray:
    """Budgets of the alpha-equilibrium."""
    al = check_bias(alpha, 2)
    p, b, c = m.p, m.b, m.c
    denom = 4.0 - p[0] * p[1] * al[0] * al[1] * c[0] * c[1]
    if denom <= 0:
        raise DegenerateDenominator("advertising denominator is non-positive")
    root = p * al * (2 * b + c * (p * al * b)[::-1]) / denom
    if np.any(root < 0):
        raise DegenerateDenominator("negative square-root budget")
    return root ** 2


def advertising_alpha(m: AdvertisingMarket) -> float:
    k = m.c[0] * m.c[1] * m.p[0] * m.p[1]
    return 2.0 / (1.0 + math.sqrt(1.0 - k))


def advertising_nae(m: AdvertisingMarket) -> ClosedFormNae:
    alpha = np.full(2, advertising_alpha(m))
    x = advertising_equilibrium(m, alpha)
    xn = advertising_equilibrium(m, np.ones(2))
    return ClosedFormNae(alpha, x, m.demand(x), m.profit(x), xn, m.profit(xn))


# ---------------------------------------------------------------- team production


@dataclass(frozen=True)
class TeamProductionSpec:
    """Joint benefit ``q = theta * (prod_j x_j)^gamma`` with payoff ``q - x_i``."""

    n: int = 2
    theta: float = 10.0
    gamma: float = 0.3

    def __post_init__(self):
        if self.n < 1 or self.theta <= 0 or self.gamma <= 0:
            raise InvalidParameters("need n >= 1, theta > 0 and gamma > 0")
        if self.n * self.gamma >= 1:
            raise InvalidParameters("need n * gamma < 1")

    def demand(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.full(self.n, self.theta * np.prod(x) ** self.gamma)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = self.theta * np.prod(x) ** self.gamma
        return np.tile(self.gamma * q / x, (self.n, 1))

    def game(self) -> GameSpec:
        n = self.n
        return GameSpec(
            n=n,
            lower=(0.0,) * n,
            upper=(math.inf,) * n,
            demand=self.demand,
            profit=lambda x, q: q - x,
            dprofit_dx=lambda x, q: -np.ones(n),
            dprofit_dq=lambda x, q: np.ones(n),
            demand_jacobian=self.jacobian,
            kind="team-production",
            params={"n": n, "theta": self.theta, "gamma": self.gamma},
            name="team-production",
        )

    def payoffs(self, x) -> np.ndarray:
        return self.demand(x) - np.asarray(x, dtype=float)


def team_alpha_equilibrium(t: TeamProductionSpec, alpha) -> np.ndarray:
    """Interior alpha-equilibrium; linear in log-efforts."""
    al = check_bias(alpha, t.n)
    g = t.gamma
    mat = np.full((t.n, t.n), -g) + np.eye(t.n)
    rhs = np.log(al * g * t.theta)
    return np.exp(np.linalg.solve(mat, rhs))


def team_alpha(t: TeamProductionSpec) -> float:
    return 1.0 / (1.0 - (t.n - 1) * t.gamma)


def team_lowest_nash(t: TeamProductionSpec, start: float = 1e-6, tol: float = 1e-13,
                     max_iter: int = 100_000) -> np.ndarray:
    """Interior Nash equilibrium reached by best replies from a near-zero profile.

    Best replies are increasing, so iteration from below rises monotonically
    to the lowest interior equilibrium.
    """
    g, th = t.gamma, t.theta
    x = np.full(t.n, start)
    for _ in range(max_iter):
        others = np.prod(x) / x
        new = (g * th * others ** g) ** (1.0 / (1.0 - g))
        if np.max(np.abs(new - x)) <= tol * max(1.0, float(np.max(new))):
            return new
        x = new
    return x


def team_production_nae(t: TeamProductionSpec) -> ClosedFormNae:
    alpha = np.full(t.n, team_alpha(t))
    x = team_alpha_equilibrium(t, alpha)
    xn = team_lowest_nash(t)
    return ClosedFormNae(alpha, x, t.demand(x), t.payoffs(x), xn, t.payoffs(xn))


# ---------------------------------------------------------------- circle game


def circle_game(eps: float = 0.01, intercept: float = 120.0) -> GameSpec:
    """Three firms on a circle, each hurt mostly by its clockwise neighbour's price."""
    if not 0 <= eps < 1:
        raise InvalidParameters("need 0 <= eps < 1")
    jac = -np.array([[1.0, 1.0, eps], [eps, 1.0, 1.0], [1.0, eps, 1.0]])

    def demand(x):
        return intercept + jac @ np.asarray(x, dtype=float)

    return GameSpec(
        n=3,
        lower=(0.0,) * 3,
        upper=(intercept,) * 3,
        demand=demand,
        profit=lambda x, q: x * q,
        dprofit_dx=lambda x, q: q,
        dprofit_dq=lambda x, q: np.asarray(x, dtype=float),
        demand_jacobian=lambda x: jac,
        kind="circle-example",
        params={"eps": eps, "intercept": intercept},
        name="circle",
    )
