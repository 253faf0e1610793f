"""Portfolio-style baseline test statistics.

Both baselines penalize the best fixed bet in hindsight: each round they
maximize the empirical log wealth over the full decision space and
subtract a regret-style penalty. The maximization runs from scratch on
the whole history every round (cost O(t)), which is exactly the
per-iteration expense the runtime benchmarks are meant to expose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import engine
from .errors import ConfigError, NumericalSafetyError

LN_PI = math.log(math.pi)
LN2 = math.log(2.0)

# Log terms must keep their argument above this margin; the search
# interval is shrunk so every 1 - c*theta clears it.
FEASIBILITY_EPS = 1e-12
THETA_TOL = 1e-10

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class HistoryBuffer:
    """Ordered payoffs (plus raw samples) seen so far by one test.

    ``raw_samples`` mirrors payoffs in length; for one-sided testing it
    holds the underlying x_t (recovered as mu0 - g when not supplied),
    which is what the one-sided empirical wealth is defined over. For
    difference-in-means it is unused and padded with NaN.
    """

    scenario: engine.Scenario
    payoffs: list[float] = field(default_factory=list)
    raw_samples: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.scenario.is_one_sided and self.scenario.mu0 == 0.0:
            raise ConfigError("portfolio statistics for one-sided testing require mu0 > 0")
        self._coeffs = np.empty(256)

    def __len__(self) -> int:
        return len(self.payoffs)

    def append(self, g: float, x: Optional[float] = None) -> None:
        if not -1.0 <= g <= 1.0:
            raise ValueError(f"payoff g={g} is outside [-1, 1]")
        if self.scenario.is_one_sided:
            coeff = g / self.scenario.mu0
            if x is None:
                x = self.scenario.mu0 - g
        else:
            coeff = g
            if x is None:
                x = math.nan
        n = len(self.payoffs)
        if n == self._coeffs.shape[0]:
            grown = np.empty(2 * n)
            grown[:n] = self._coeffs
            self._coeffs = grown
        self._coeffs[n] = coeff
        self.payoffs.append(g)
        self.raw_samples.append(x)

    def coefficients(self) -> np.ndarray:
        """Per-round coefficients of the empirical log-wealth objective."""
        return self._coeffs[: len(self.payoffs)]

    @property
    def space(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.scenario.is_one_sided else (-1.0, 1.0)

    @property
    def neutral(self) -> float:
        # Tie-break target when the objective is flat (all payoffs zero).
        return 0.5 if self.scenario.is_one_sided else 0.0


@dataclass(frozen=True)
class PortfolioStat:
    theta_max: float
    log_wealth_hat: float
    statistic: float


def maximize_log_wealth(
    coeffs: np.ndarray,
    lo: float,
    hi: float,
    *,
    weights: Optional[np.ndarray] = None,
    neutral: Optional[float] = None,
    theta_tol: float = THETA_TOL,
) -> tuple[float, float]:
    """Maximize sum_i w_i * ln(1 - c_i * theta) over [lo, hi].

    The objective is concave. The interval is first shrunk to where
    every log argument exceeds the feasibility margin; boundary maxima
    are detected from the one-sided derivative, interior maxima located
    by golden-section search refined by bisection on the derivative to
    ``theta_tol``.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    if coeffs.size == 0:
        raise ValueError("cannot maximize over an empty history")
    if weights is not None:
        weights = np.ascontiguousarray(weights, dtype=float)

    cmax = float(coeffs.max())
    cmin = float(coeffs.min())
    if cmax > 0.0:
        hi = min(hi, (1.0 - FEASIBILITY_EPS) / cmax)
    if cmin < 0.0:
        lo = max(lo, (1.0 - FEASIBILITY_EPS) / cmin)
    if not lo < hi:
        raise NumericalSafetyError(f"empty feasible interval [{lo}, {hi}] for the wealth objective")

    def value(theta: float) -> float:
        terms = np.log(1.0 - coeffs * theta)
        if weights is not None:
            terms = terms * weights
        return float(terms.sum())

    def slope(theta: float) -> float:
        terms = coeffs / (1.0 - coeffs * theta)
        if weights is not None:
            terms = terms * weights
        return -float(terms.sum())

    if cmax == 0.0 and cmin == 0.0:
        theta = neutral if neutral is not None else 0.5 * (lo + hi)
        return float(min(max(theta, lo), hi)), 0.0

    if slope(lo) <= 0.0:
        return lo, value(lo)
    if slope(hi) >= 0.0:
        return hi, value(hi)

    # Golden-section narrows the bracket; the maximizer stays inside it.
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = value(c), value(d)
    while (b - a) > 1e-3:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = value(d)

    # Bisection on the (strictly decreasing) derivative pins theta down.
    if slope(a) < 0.0 or slope(b) > 0.0:
        # The maximum sits within a golden-section step of the bracket
        # edge; fall back to the full feasible interval.
        a, b = lo, hi
    while (b - a) > theta_tol:
        mid = 0.5 * (a + b)
        if slope(mid) > 0.0:
            a = mid
        else:
            b = mid
    theta = 0.5 * (a + b)
    return theta, value(theta)


def max_log_wealth(history: HistoryBuffer) -> tuple[float, float]:
    """Best fixed bet in hindsight and its empirical log wealth."""
    if len(history) == 0:
        raise ValueError("max_log_wealth requires a nonempty history")
    lo, hi = history.space
    return maximize_log_wealth(history.coefficients(), lo, hi, neutral=history.neutral)


def co96(history: HistoryBuffer) -> PortfolioStat:
    """Cover-Ordentlich universal-portfolio statistic.

    exp{ ln W_hat(theta_max) - ln(t+1)/2 - ln 2 }.
    """
    theta, value = max_log_wealth(history)
    t = len(history)
    stat = math.exp(value - 0.5 * math.log(t + 1.0) - LN2)
    return PortfolioStat(theta_max=theta, log_wealth_hat=value, statistic=stat)


_lgamma_int = np.zeros(1)  # lgamma(k + 1) for k = 0..n
_lgamma_half = np.array([math.lgamma(0.5)])  # lgamma(k + 1/2) for k = 0..n


def _lgamma_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached lgamma(k+1) and lgamma(k+1/2) for k = 0..n."""
    global _lgamma_int, _lgamma_half
    if n >= _lgamma_int.shape[0]:
        size = max(n + 1, 2 * _lgamma_int.shape[0])
        ints = np.empty(size)
        halves = np.empty(size)
        for k in range(size):
            ints[k] = math.lgamma(k + 1.0)
            halves[k] = math.lgamma(k + 0.5)
        _lgamma_int, _lgamma_half = ints, halves
    return _lgamma_int, _lgamma_half


def oj23_penalty(lam: float, t: int) -> float:
    """max_j ln( pi * lam^j (1-lam)^(t-j) Gamma(t+1) / (Gamma(j+1/2)Gamma(t-j+1/2)) ).

    Computed exactly by sweeping j = 0..t in log space. lam^0 and
    (1-lam)^0 follow the 0^0 := 1 convention, so lam at 0 or 1 keeps
    exactly one finite term.
    """
    ints, halves = _lgamma_tables(t)
    j = np.arange(t + 1)
    if lam == 0.0:
        pow_term = np.where(j == 0, 0.0, -np.inf)
    elif lam == 1.0:
        pow_term = np.where(j == t, 0.0, -np.inf)
    else:
        pow_term = j * math.log(lam) + (t - j) * math.log1p(-lam)
    terms = LN_PI + pow_term + ints[t] - halves[j] - halves[t - j]
    return float(terms.max())


def oj23(history: HistoryBuffer) -> PortfolioStat:
    """Orabona-Jun statistic: exp{ ln W_hat(theta_max) - penalty(lam_max) }.

    lam_max is the two-asset weight of the maximizer: theta_max itself
    for one-sided testing (its objective is already in weight form), and
    (1 + theta_max)/2 for difference-in-means, which is the weight
    satisfying 1 - g*theta = lam*(1-g) + (1-lam)*(1+g).
    """
    theta, value = max_log_wealth(history)
    lam = theta if history.scenario.is_one_sided else 0.5 * (1.0 + theta)
    lam = min(max(lam, 0.0), 1.0)
    stat = math.exp(value - oj23_penalty(lam, len(history)))
    return PortfolioStat(theta_max=theta, log_wealth_hat=value, statistic=stat)


_STAT_FNS = {"co96": co96, "oj23": oj23}


def run_portfolio_test(
    stream: Iterable[float],
    config: engine.TestConfig,
    scenario: engine.Scenario,
    *,
    rng: Optional[np.random.Generator] = None,
) -> engine.TestResult:
    """Run a baseline statistic as a sequential test over a payoff stream.

    The statistic plays the wealth role: reject once it reaches 1/alpha,
    and apply the same randomized check at a completed finite budget as
    the betting loop does, for comparability.
    """
    try:
        stat_fn = _STAT_FNS[config.learner]
    except KeyError:
        raise ConfigError(f"unknown portfolio method {config.learner!r}; expected one of {sorted(_STAT_FNS)}") from None
    if rng is None:
        rng = engine.rng_from_seed(config.seed)

    history = HistoryBuffer(scenario)
    stat_value = 0.0
    traj: Optional[list[float]] = [] if config.record_trajectory else None
    theta_traj: Optional[list[float]] = [] if config.record_trajectory else None

    completed_budget = False
    rounds = 0
    it = iter(stream)
    while True:
        if config.budget is not None and rounds >= config.budget:
            completed_budget = True
            break
        try:
            g = next(it)
        except StopIteration:
            break
        history.append(g)
        rounds += 1
        stat = stat_fn(history)
        stat_value = stat.statistic
        if traj is not None:
            traj.append(stat.statistic)
            theta_traj.append(stat.theta_max)
        if engine.ville_reject(stat.statistic, config.alpha):
            return engine.TestResult(
                verdict=engine.REJECTED,
                rejection_time=rounds,
                final_wealth=stat.statistic,
                rounds=rounds,
                wealth_trajectory=tuple(traj) if traj is not None else None,
                theta_trajectory=tuple(theta_traj) if theta_traj is not None else None,
            )

    if completed_budget and engine.randomized_budget_verdict(stat_value, config.alpha, rng):
        verdict, rejection_time = engine.REJECTED, rounds
    else:
        verdict, rejection_time = engine.NOT_REJECTED, None
    return engine.TestResult(
        verdict=verdict,
        rejection_time=rejection_time,
        final_wealth=stat_value,
        rounds=rounds,
        wealth_trajectory=tuple(traj) if traj is not None else None,
        theta_trajectory=tuple(theta_traj) if theta_traj is not None else None,
    )
