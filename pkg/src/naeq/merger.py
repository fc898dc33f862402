"""Merger counterfactual for a symmetric three-firm price market.

Before the merger the three firms play the symmetric NAE with zero costs.
An outside economist who believes prices are an unbiased Nash equilibrium
backs out a marginal cost ``mc`` from them and predicts post-merger prices
with firms 2 and 3 pricing jointly.  The actual post-merger prices follow
from the biased equilibrium of the two-player market (firm 1 and merged
firm 23, weights 1/3 and 2/3), with biases frozen at their pre-merger level
in the short run and re-optimized in the long run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import DegenerateDenominator, InvalidParameters
from .markets import (
    LinearPriceMarket,
    duopoly_alpha,
    price_alpha_equilibrium,
    symmetric_alpha,
    symmetric_prices,
)

PRICE_COLUMNS = ("pre", "nash", "post_mc", "post_alpha_pre", "post_alpha_post")


@dataclass
class MergerScenario:
    """Symmetric three-firm market ``q_i = a - b x_i + c * mean(x)`` before the merger."""

    a: float = 20.0
    b: float = 1.0
    c: float = 0.5
    merged_weights: tuple[float, float] = (1 / 3, 2 / 3)
    mc: float | None = None
    alpha_pre: float | None = None
    alpha_post: float | None = None
    price_table: dict[str, tuple[float, float]] = field(default_factory=dict)
    ordering_holds: bool | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > self.c > 0):
            raise InvalidParameters("need a > 0 and b > c > 0")

    @property
    def root(self) -> float:
        return math.sqrt(36 * self.b ** 2 - 36 * self.b * self.c + self.c ** 2)

    def pre_market(self) -> LinearPriceMarket:
        return LinearPriceMarket.symmetric(3, self.a, self.b, self.c)

    def post_market(self) -> LinearPriceMarket:
        """Firm 1 and the merged firm, which charges one price for goods 2 and 3."""
        return LinearPriceMarket((self.a, self.a), (self.b, self.b), (self.c, self.c), self.merged_weights)


def alpha_pre(s: MergerScenario) -> float:
    return (s.c + s.root) / (6 * s.b - 2 * s.c)


def alpha_post(s: MergerScenario) -> float:
    b, c = s.b, s.c
    return math.sqrt(1 - 2 * c ** 2 / ((3 * b - c) * (3 * b - 2 * c)))


def price_pre(s: MergerScenario) -> float:
    return 6 * s.a / (s.root + 6 * s.b - 5 * s.c)


def estimate_marginal_cost(s: MergerScenario) -> float:
    """Cost that makes pre-merger NAE prices an unbiased Nash equilibrium."""
    a, b, c, r = s.a, s.b, s.c, s.root
    return 3 * a * (6 * b - 3 * c - r) / ((3 * b - c) * (r + 6 * b - 5 * c))


def invert_marginal_cost(s: MergerScenario, observed: float | None = None) -> float:
    """Numeric inversion of the symmetric Nash-with-cost mean price."""
    n = 3
    bt, ct = s.b - s.c / n, s.c / n
    target = price_pre(s) if observed is None else observed

    def gap(mc):
        return (s.a + bt * mc) / (2 * bt - (n - 1) * ct) - target

    hi = max(1.0, target)
    while gap(hi) < 0:
        hi *= 2
    return brentq(gap, -hi, hi, xtol=1e-14, rtol=1e-15)


def nash_with_cost(m: LinearPriceMarket, mc) -> np.ndarray:
    """Unbiased Nash prices when firm ``i`` earns ``(x_i - mc_i) q_i``."""
    mc = np.broadcast_to(np.asarray(mc, dtype=float), (m.n,))
    # a_i + c_i xbar - b_i x_i - b~_i (x_i - mc_i) = 0
    mat = np.diag(m.b + m.b_tilde) - np.outer(m.c, m.w)
    return np.linalg.solve(mat, m.a + m.b_tilde * mc)


def economist_prediction(s: MergerScenario) -> tuple[float, float]:
    """Closed-form post-merger prices ``(x_1, x_23)`` under the cost-based model."""
    a, b, c, r = s.a, s.b, s.c, s.root
    quad = 6 * b ** 2 - 6 * b * c + c ** 2
    if quad == 0:
        raise DegenerateDenominator("6b^2 - 6bc + c^2 vanishes")
    tail = r + 6 * b - 5 * c
    x1 = a * (c ** 2 * (r - 5 * c) - 144 * b ** 2 * c + 108 * b ** 3 + 54 * b * c ** 2) / (
        (3 * b - c) * quad * tail)
    x23 = a * (c * (r + 7 * c) + 36 * b ** 2 - 36 * b * c) / (quad * tail)
    return x1, x23


def economist_prediction_numeric(s: MergerScenario) -> tuple[float, float]:
    x = nash_with_cost(s.post_market(), estimate_marginal_cost(s))
    return float(x[0]), float(x[1])


def joint_pricing_check(s: MergerScenario, x1: float | None = None) -> tuple[float, float]:
    """Merged firm's two-good optimum against firm 1's price, by direct 2-D maximization.

    Returns the two optimal prices, which should coincide with the
    common-price prediction.
    """
    mc = estimate_marginal_cost(s)
    if x1 is None:
        x1 = economist_prediction(s)[0]
    a, b, c = s.a, s.b, s.c

    def neg_joint(p):
        x = np.array([x1, p[0], p[1]])
        q = a - b * x + c * x.mean()
        return -float(np.sum((x[1:] - mc) * q[1:]))

    def grad(p):
        x = np.array([x1, p[0], p[1]])
        q = a - b * x + c * x.mean()
        g = q[1:] - b * (x[1:] - mc) + (c / 3) * np.sum(x[1:] - mc)
        return -g

    start = np.full(2, economist_prediction(s)[1] * 0.9)
    res = minimize(neg_joint, start, jac=grad, method="BFGS", options={"gtol": 1e-12})
    return float(res.x[0]), float(res.x[1])


def postmerger_outcomes(s: MergerScenario) -> MergerScenario:
    """Fill biases, cost estimate, the five-column price table and the ordering verdict."""
    s.alpha_pre = alpha_pre(s)
    post = s.post_market()
    s.alpha_post = duopoly_alpha(post)
    s.mc = estimate_marginal_cost(s)
    pre, nash = symmetric_prices(3, s.a, s.b, s.c, s.alpha_pre)
    x_mc = economist_prediction(s)
    short = price_alpha_equilibrium(post, np.full(2, s.alpha_pre))
    long = price_alpha_equilibrium(post, np.full(2, s.alpha_post))
    s.price_table = {
        "pre": (pre, pre),
        "nash": (nash, nash),
        "post_mc": (float(x_mc[0]), float(x_mc[1])),
        "post_alpha_pre": (float(short[0]), float(short[1])),
        "post_alpha_post": (float(long[0]), float(long[1])),
    }
    s.ordering_holds = all(
        s.price_table["post_mc"][k] < s.price_table["post_alpha_pre"][k] < s.price_table["post_alpha_post"][k]
        for k in (0, 1)
    )
    return s


def short_run_gap_firm1(s: MergerScenario) -> float:
    """Closed form of firm 1's short-run price minus the economist's prediction."""
    a, b, c, r = s.a, s.b, s.c, s.root
    num = a * (3 * b - 2 * c) * (594 * b ** 2 * c ** 2
                                 + (126 * b ** 2 * c - 108 * b ** 3 - 48 * b * c ** 2 + 7 * c ** 3) * r
                                 - 1080 * b ** 3 * c + 648 * b ** 4 - 138 * b * c ** 3 + 13 * c ** 4)
    den = ((3 * b - c) * (6 * b ** 2 - 6 * b * c + c ** 2) * (18 * b ** 2 - 18 * b * c + 5 * c ** 2)
           * (r + 6 * b - 5 * c))
    return num / den


def short_run_gap_merged(s: MergerScenario) -> float:
    """Closed form of the merged firm's short-run price minus the economist's prediction."""
    a, b, c, r = s.a, s.b, s.c, s.root
    num = 2 * a * c * ((17 * c ** 3 - 144 * b ** 2 * c + 108 * b ** 3 + 15 * b * c ** 2)
                       - (18 * b ** 2 - 15 * b * c + c ** 2) * r)
    den = ((6 * b ** 2 - 6 * b * c + c ** 2) * (r + 6 * b - 5 * c)
           * ((7 * c - 12 * b) * r - 72 * b ** 2 + 90 * b * c - 23 * c ** 2))
    return num / den


def merger_rows(a: float, b: float, cs) -> list[dict]:
    """One row per cross slope with every panel's series."""
    rows = []
    for c in cs:
        s = postmerger_outcomes(MergerScenario(a, b, float(c)))
        t = s.price_table
        rows.append({
            "c": float(c),
            "mc": s.mc,
            "alpha_pre": s.alpha_pre,
            "alpha_post": s.alpha_post,
            **{f"x1_{k}": t[k][0] for k in PRICE_COLUMNS},
            **{f"x23_{k}": t[k][1] for k in PRICE_COLUMNS},
            "ordering": s.ordering_holds,
        })
    return rows


def check_alpha_pre(s: MergerScenario) -> float:
    """Difference between the three-firm closed form and the general symmetric root."""
    return alpha_pre(s) - symmetric_alpha(3, s.b, s.c)
