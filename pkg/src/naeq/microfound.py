"""Mechanisms that make analysts report biased demand sensitivities.

* Discount experiments whose timing correlates across rivals understate the
  price elasticity (biases below one).
* Advertising raised after weak sales and cut after strong sales overstates
  its effect through regression to the mean (biases above one).
* A discount run while a demand shock hits understates the elasticity by
  ``(dx - 2 eps) / dx``.

Every simulation draws from ``numpy.random.Generator(PCG64(seed))`` so equal
seeds give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import log_ndtr

from .errors import InsufficientVariation, InvalidParameters, NonPositiveAlpha, NoSwitches

PRNG = "PCG64"


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def mills(x: float) -> float:
    """``phi(x) / Phi(x)`` evaluated in log space for accuracy in the tails."""
    log_phi = -0.5 * x * x - 0.5 * math.log(2 * math.pi)
    return math.exp(log_phi - float(log_ndtr(x)))


# ---------------------------------------------------------------- discounts


@dataclass(frozen=True)
class DiscountExperiment:
    a: float = 20.0
    b: float = 1.0
    c: float = 0.8
    p_low: float = 20.0
    p_high: float = 24.0
    mu_low: float = 0.5
    gamma1: float = 1.0
    gamma2: float = 1.0
    rho: float = 0.5
    T: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not self.p_low < self.p_high:
            raise InvalidParameters("need p_low < p_high")
        if not 0 < self.mu_low < 1:
            raise InvalidParameters("discount share must lie in (0, 1)")
        if not (0 <= self.gamma1 <= 1 and 0 <= self.gamma2 <= 1 and -1 <= self.rho <= 1):
            raise InvalidParameters("need gammas in [0, 1] and rho in [-1, 1]")
        if self.T < 2:
            raise InvalidParameters("need at least two periods")
        cells = self.cells()
        if np.any(cells < 0) or np.any(cells > 1):
            raise InvalidParameters(f"cell probabilities {cells} outside [0, 1]")

    @property
    def k(self) -> float:
        return self.gamma1 * self.gamma2 * self.rho

    @property
    def mean_price(self) -> float:
        return self.mu_low * self.p_low + (1 - self.mu_low) * self.p_high

    def cells(self) -> np.ndarray:
        """Probabilities of (L, L), (L, H), (H, L), (H, H) for (own, rival) prices."""
        m, k = self.mu_low, self.k
        mix = m * (1 - m)
        return np.array([m * m + mix * k, mix * (1 - k), mix * (1 - k), (1 - m) ** 2 + mix * k])


def cell_probabilities_exact(mu_low, gamma1, gamma2, rho) -> tuple[Fraction, ...]:
    """Joint cell probabilities in rational arithmetic."""
    m, k = Fraction(mu_low), Fraction(gamma1) * Fraction(gamma2) * Fraction(rho)
    mix = m * (1 - m)
    return (m * m + mix * k, mix * (1 - k), mix * (1 - k), (1 - m) ** 2 + mix * k)


@dataclass(frozen=True)
class ElasticityResult:
    eta_hat: float
    eta_true_printed: float
    eta_true_derived: float
    implied_alpha: float
    se: float | None = None
    mode: str = "analytic"
    prng: str | None = None


def discount_elasticity(e: DiscountExperiment, mode: str = "analytic") -> ElasticityResult:
    """Estimated elasticity, both true-elasticity variants and the implied bias.

    ``eta_true_printed`` uses the denominator ``a - (b + c) P``;
    ``eta_true_derived`` uses ``a - (b - c) P``, the average-demand value.
    """
    P = e.mean_price
    eta_printed = e.b * P / (e.a - (e.b + e.c) * P)
    eta_derived = e.b * P / (e.a - (e.b - e.c) * P)
    alpha = (e.b - e.c * e.k) / e.b
    if mode == "analytic":
        eta = (e.b - e.c * e.k) * P / (e.a - (e.b - e.c) * P)
        return ElasticityResult(eta, eta_printed, eta_derived, alpha)
    if mode != "monte-carlo":
        raise InvalidParameters(f"unknown mode {mode!r}")
    draws = rng_for(e.seed).choice(4, size=e.T, p=e.cells())
    freq = np.bincount(draws, minlength=4) / e.T
    if freq[0] + freq[1] == 0 or freq[2] + freq[3] == 0:
        raise InsufficientVariation("a price arm received no periods")
    eta = _eta_from_freq(e, freq)
    grad = np.empty(4)
    for j in range(4):
        h = 1e-7
        up, dn = freq.copy(), freq.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (_eta_from_freq(e, up) - _eta_from_freq(e, dn)) / (2 * h)
    cov = (np.diag(freq) - np.outer(freq, freq)) / e.T
    se = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return ElasticityResult(eta, eta_printed, eta_derived, alpha, se, mode, PRNG)


def _eta_from_freq(e: DiscountExperiment, f: np.ndarray) -> float:
    """Difference-in-means elasticity from (own, rival) cell frequencies."""
    own = np.array([e.p_low, e.p_low, e.p_high, e.p_high])
    rival = np.array([e.p_low, e.p_high, e.p_low, e.p_high])
    q = e.a - e.b * own + e.c * rival
    low, high = f[:2].sum(), f[2:].sum()
    dq = (f[2:] @ q[2:]) / high - (f[:2] @ q[:2]) / low
    total = f.sum()
    q_bar = (f @ q) / total
    p_bar = (f @ own) / total
    return float(-(dq / q_bar) / ((e.p_high - e.p_low) / p_bar))


# ---------------------------------------------------------------- advertising


@dataclass(frozen=True)
class AdTargetingExperiment:
    mu: float = 0.0
    x_low: float = 0.0
    x_high: float = 1.0
    T: int = 1_000_000
    seed: int = 0
    policy: str = "threshold"
    batches: int = 100

    def __post_init__(self):
        if not self.x_high > self.x_low >= 0:
            raise InvalidParameters("need x_high > x_low >= 0")
        if self.policy not in ("threshold", "random"):
            raise InvalidParameters("policy must be 'threshold' or 'random'")
        if self.T < 2 * self.batches:
            raise InvalidParameters("horizon too short for the batch count")


@dataclass(frozen=True)
class AdEffectResult:
    value: float
    rising: float
    falling: float
    printed: float | None = None
    se: float | None = None
    switches: int | None = None
    mode: str = "analytic"
    prng: str | None = None


def ad_targeting_bias(e: AdTargetingExperiment, mode: str = "analytic") -> AdEffectResult:
    """Estimated advertising effect (true effect is one) from switch-conditioned sales changes.

    In analytic mode ``value`` averages the raise-side term
    ``1 + phi(x_L)/Phi(-x_L)/dx`` and the cut-side term
    ``1 + phi(x_H)/Phi(x_H)/dx``.  ``printed`` reports the variant with a
    minus sign on the cut-side correction.
    """
    dx = e.x_high - e.x_low
    if mode == "analytic":
        if e.policy == "random":
            return AdEffectResult(1.0, 1.0, 1.0, 1.0)
        rising = 1.0 + mills(-e.x_low) / dx
        falling = 1.0 + mills(e.x_high) / dx
        printed = 0.5 * (rising + 1.0 - mills(e.x_high) / dx)
        return AdEffectResult(0.5 * (rising + falling), rising, falling, printed)
    if mode != "monte-carlo":
        raise InvalidParameters(f"unknown mode {mode!r}")
    high, eps = _simulate_budget(e)
    x = np.where(high, e.x_high, e.x_low)
    sales = e.mu + x + eps
    diff = np.diff(sales)
    up = ~high[:-1] & high[1:]
    down = high[:-1] & ~high[1:]
    if not up.any() or not down.any():
        raise NoSwitches("budget never alternated")
    est = _switch_estimate(diff, up, down, dx)
    per = np.array_split(np.arange(e.T), e.batches)
    batch = []
    for idx in per:
        u, d = up[idx], down[idx]
        if u.any() and d.any():
            batch.append(_switch_estimate(diff[idx], u, d, dx))
    se = float(np.std(batch, ddof=1) / math.sqrt(len(batch))) if len(batch) > 1 else math.nan
    rising = float(diff[up].mean() / dx)
    falling = float(diff[down].mean() / -dx)
    return AdEffectResult(est, rising, falling, None, se, int(up.sum() + down.sum()), mode, PRNG)


def _switch_estimate(diff, up, down, dx) -> float:
    return float(0.5 * (diff[up].mean() / dx + diff[down].mean() / -dx))


def _simulate_budget(e: AdTargetingExperiment) -> tuple[np.ndarray, np.ndarray]:
    """Budget state (True = high) and sales shocks for periods 0..T, starting low.

    Under the threshold rule the next state is high when both thresholds
    are crossed, low when neither is, and flips when the shock lands
    between them; the recursion is resolved with cumulative counts.
    """
    rng = rng_for(e.seed)
    eps = rng.standard_normal(e.T + 1)
    if e.policy == "random":
        return rng.random(e.T + 1) < 0.5, eps
    below_low = eps[:-1] < -e.x_low    # weak sales when budget is low
    below_high = eps[:-1] < -e.x_high  # weak sales when budget is high
    fixed = below_low == below_high
    flips = np.cumsum(~fixed)
    t = np.arange(e.T)
    last = np.maximum.accumulate(np.where(fixed, t, -1))
    base = np.where(last >= 0, below_low[np.maximum(last, 0)], False)
    since = flips - np.where(last >= 0, flips[np.maximum(last, 0)], 0)
    nxt = base ^ (since % 2 == 1)
    return np.concatenate([[False], nxt]), eps


# ---------------------------------------------------------------- shock story


@dataclass(frozen=True)
class ShockDiscountSpec:
    discount: float
    shock: float

    def __post_init__(self):
        if self.discount <= 0 or self.shock < 0:
            raise InvalidParameters("need a positive discount and a non-negative shock")


def shock_discount_alpha(s: ShockDiscountSpec) -> float:
    """Bias of an elasticity estimate taken while a shock of size ``shock`` hits."""
    if 2 * s.shock >= s.discount:
        raise NonPositiveAlpha("shock at least half the discount leaves no positive bias")
    return (s.discount - 2 * s.shock) / s.discount
