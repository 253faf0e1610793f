"""Betting-game state machine.

Owns payoff construction for both testing scenarios, the multiplicative
wealth update, the two stopping rules (threshold crossing and the
randomized check at a finite budget), and the meta test loop that wires
a streaming bettor to a payoff source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from . import learners
from .errors import ConfigError, DataError, NumericalSafetyError
from .learners import DecisionSpace  # re-exported: part of the engine's surface

__all__ = [
    "DIFF_MEANS",
    "ONE_SIDED",
    "Scenario",
    "DecisionSpace",
    "WealthState",
    "TestConfig",
    "TestResult",
    "diff_means",
    "one_sided",
    "payoff_diff_means",
    "payoff_one_sided",
    "wealth_step",
    "ville_reject",
    "randomized_budget_verdict",
    "run_betting_test",
]

DIFF_MEANS = "diff-means"
ONE_SIDED = "one-sided"

REJECTED = "REJECTED"
NOT_REJECTED = "NOT_REJECTED"
RUNNING = "RUNNING"

# wealth_step refuses any update that would leave less than this much
# margin before ruin. A trip here is a learner bug, never valid play.
RUIN_GUARD = 1e-12

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Scenario:
    """Which test is being run. One-sided testing carries its threshold mu0."""

    kind: str
    mu0: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in (DIFF_MEANS, ONE_SIDED):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.kind == ONE_SIDED:
            if self.mu0 is None:
                raise ConfigError("one-sided testing requires mu0")
            if not 0.0 <= self.mu0 <= 1.0:
                raise ConfigError(f"mu0 must be in [0, 1], got {self.mu0}")
        elif self.mu0 is not None:
            raise ConfigError("difference-in-means testing takes no mu0")

    @property
    def is_one_sided(self) -> bool:
        return self.kind == ONE_SIDED


def diff_means() -> Scenario:
    return Scenario(DIFF_MEANS)


def one_sided(mu0: float) -> Scenario:
    return Scenario(ONE_SIDED, mu0=mu0)


def payoff_diff_means(x: float, y: float) -> float:
    """Payoff g = x - y from a paired sample, both sides in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise DataError(f"sample x={x} is outside [0, 1]")
    if not 0.0 <= y <= 1.0:
        raise DataError(f"sample y={y} is outside [0, 1]")
    return x - y


def payoff_one_sided(mu0: float, x: float) -> float:
    """Payoff g = mu0 - x from a single sample in [0, 1]."""
    if not 0.0 <= mu0 <= 1.0:
        raise DataError(f"mu0={mu0} is outside [0, 1]")
    if not 0.0 <= x <= 1.0:
        raise DataError(f"sample x={x} is outside [0, 1]")
    return mu0 - x


@dataclass(frozen=True)
class WealthState:
    """One e-process's position: wealth, its log, and stop status."""

    wealth: float = 1.0
    log_wealth: float = 0.0
    round: int = 0
    stopped: bool = False
    verdict: str = RUNNING


def wealth_step(state: WealthState, theta: float, g: float) -> WealthState:
    """Advance one round: wealth *= (1 - theta*g).

    Stopped states are immutable; operating on one is an error.
    """
    if state.stopped:
        raise ValueError("wealth state is stopped; no further steps are allowed")
    if not -1.0 <= g <= 1.0:
        raise DataError(f"payoff g={g} is outside [-1, 1]")
    factor = 1.0 - theta * g
    if factor < RUIN_GUARD:
        raise NumericalSafetyError(
            f"wealth factor 1 - theta*g = {factor} below safety floor {RUIN_GUARD} "
            f"(theta={theta}, g={g}); this indicates a learner bug"
        )
    return replace(
        state,
        wealth=state.wealth * factor,
        log_wealth=state.log_wealth + math.log1p(-theta * g),
        round=state.round + 1,
    )


def ville_reject(wealth: float, alpha: float) -> bool:
    """Threshold rule: reject once wealth reaches 1/alpha."""
    return wealth >= 1.0 / alpha


def randomized_budget_verdict(final_wealth: float, alpha: float, rng: np.random.Generator) -> bool:
    """Randomized check applied once, at budget exhaustion.

    Draws nu ~ Uniform[0, 1] and rejects iff final_wealth >= nu/alpha.
    Consumes exactly one draw from ``rng``.
    """
    nu = float(rng.random())
    return final_wealth >= nu / alpha


@dataclass(frozen=True)
class TestConfig:
    """Parameters of one betting test run.

    ``budget=None`` means unbounded play; the randomized budget check
    only applies to finite budgets. ``seed`` feeds the single uniform
    draw of that check (and nothing else; data streams are seeded by
    their producers).
    """

    __test__ = False  # keep pytest from collecting this as a test class

    alpha: float
    budget: Optional[int] = None
    eta: float = 1.0
    learner: str = "ftrl"
    seed: int = 0
    hint: str = learners.HINT_LAST_GRAD
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.budget is not None and self.budget < 1:
            raise ConfigError(f"budget must be a positive integer or None, got {self.budget}")
        if self.eta <= 0.0:
            raise ConfigError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one run.

    ``rejection_time`` is present iff the verdict is REJECTED; a
    rejection produced by the randomized budget check reports the budget
    itself. Trajectories are recorded only when asked for and have one
    entry per executed round.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    verdict: str
    rejection_time: Optional[int]
    final_wealth: float
    rounds: int
    wealth_trajectory: Optional[tuple[float, ...]] = None
    theta_trajectory: Optional[tuple[float, ...]] = None


def rng_from_seed(seed) -> np.random.Generator:
    """Accept an int, SeedSequence, or Generator and hand back a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _SEED_MASK))


def run_betting_test(
    stream: Iterable[float],
    config: TestConfig,
    scenario: Scenario,
    *,
    bettor=None,
    rng: Optional[np.random.Generator] = None,
) -> TestResult:
    """Run the betting test loop over a payoff stream.

    Each round: play the bettor's theta, observe the next payoff, apply
    the wealth update, check the threshold on the post-update wealth,
    then feed the loss back to the bettor. (Checking wealth before
    betting round t instead is the same test shifted by one round; this
    implementation commits to the post-update check.) Stops at the
    first crossing or at the budget, where the randomized check
    decides. If the stream dries up before a finite budget is met (or
    under unbounded play), the run ends NOT_REJECTED with the consumed
    rounds recorded; the randomized check is tied to completing a
    declared budget.

    Identical (stream, config) inputs produce bit-identical results.
    """
    if bettor is None:
        bettor = learners.make_bettor(config.learner, scenario.is_one_sided, config.eta, hint=config.hint)
    if rng is None:
        rng = rng_from_seed(config.seed)

    state = WealthState()
    wealth_traj: Optional[list[float]] = [] if config.record_trajectory else None
    theta_traj: Optional[list[float]] = [] if config.record_trajectory else None

    completed_budget = False
    it = iter(stream)
    while True:
        if config.budget is not None and state.round >= config.budget:
            completed_budget = True
            break
        try:
            g = next(it)
        except StopIteration:
            break
        theta = bettor.theta
        state = wealth_step(state, theta, g)
        if wealth_traj is not None:
            wealth_traj.append(state.wealth)
            theta_traj.append(theta)
        if ville_reject(state.wealth, config.alpha):
            return TestResult(
                verdict=REJECTED,
                rejection_time=state.round,
                final_wealth=state.wealth,
                rounds=state.round,
                wealth_trajectory=tuple(wealth_traj) if wealth_traj is not None else None,
                theta_trajectory=tuple(theta_traj) if theta_traj is not None else None,
            )
        bettor.observe(g)

    if completed_budget and randomized_budget_verdict(state.wealth, config.alpha, rng):
        verdict, rejection_time = REJECTED, state.round
    else:
        verdict, rejection_time = NOT_REJECTED, None
    return TestResult(
        verdict=verdict,
        rejection_time=rejection_time,
        final_wealth=state.wealth,
        rounds=state.round,
        wealth_trajectory=tuple(wealth_traj) if wealth_traj is not None else None,
        theta_trajectory=tuple(theta_traj) if theta_traj is not None else None,
    )
