"""Streaming bettors for the testing-by-betting game.

Three online learners share the log-loss machinery defined here:

* ``ons``   - Online Newton Step on a halved decision space.
* ``ftrl``  - follow-the-regularized-leader with a log-barrier
  regularizer, updated in closed form over the full interior.
* ``oftrl`` - the optimistic variant, which folds a guess of the next
  gradient into the same closed-form update.

Every learner plays a bet ``theta``, observes a payoff ``g`` in [-1, 1],
and suffers the exp-concave loss ``-ln(1 - g*theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ConfigError, NumericalSafetyError

# Step scale of the Online Newton update, 2 / (2 - ln 3).
ONS_STEP_SCALE = 2.0 / (2.0 - math.log(3.0))

# Closed-form iterates are clamped this far inside the barrier domain.
# The clamp absorbs floating-point rounding of the closed form only; the
# exact expressions already land strictly interior.
EDGE_CLAMP = 1e-12


def _clamp_bounds(lo: float, hi: float, margin: float = EDGE_CLAMP) -> tuple[float, float]:
    # Nudge until the rounded bounds really keep the promised distance.
    lo_c = lo + margin
    while lo_c - lo < margin:
        lo_c = math.nextafter(lo_c, math.inf)
    hi_c = hi - margin
    while hi - hi_c < margin:
        hi_c = math.nextafter(hi_c, -math.inf)
    return lo_c, hi_c


_SYMMETRIC_BOUNDS = _clamp_bounds(-1.0, 1.0)
_UNIT_BOUNDS = _clamp_bounds(0.0, 1.0)


class BarrierKind(Enum):
    """Log-barrier flavors, one per decision space.

    SYMMETRIC is -ln(1-theta) - ln(1+theta) on (-1, 1), used for
    difference-in-means betting. UNIT_INTERVAL is -ln(theta) - ln(1-theta)
    on (0, 1), used for one-sided betting.
    """

    SYMMETRIC = "symmetric"
    UNIT_INTERVAL = "unit-interval"


@dataclass(frozen=True)
class DecisionSpace:
    """Closed interval of admissible bets.

    ``open_interior`` marks spaces whose learners must stay strictly
    inside (the barrier learners); ONS may sit on the boundary.
    """

    lo: float
    hi: float
    open_interior: bool = False

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ConfigError(f"decision space requires lo < hi, got [{self.lo}, {self.hi}]")

    def clip(self, theta: float) -> float:
        return min(max(theta, self.lo), self.hi)

    def contains(self, theta: float) -> bool:
        return self.lo <= theta <= self.hi


def barrier_space(kind: BarrierKind) -> DecisionSpace:
    if kind is BarrierKind.SYMMETRIC:
        return DecisionSpace(-1.0, 1.0, open_interior=True)
    return DecisionSpace(0.0, 1.0, open_interior=True)


def ons_space(one_sided: bool) -> DecisionSpace:
    """Halved decision space used by ONS to keep 1 - g*theta >= 1/2."""
    if one_sided:
        return DecisionSpace(0.0, 0.5)
    return DecisionSpace(-0.5, 0.5)


def loss(g: float, theta: float) -> float:
    """Per-round log loss -ln(1 - g*theta)."""
    arg = 1.0 - g * theta
    if arg <= 0.0:
        raise NumericalSafetyError(f"loss undefined: 1 - g*theta = {arg} for g={g}, theta={theta}")
    return -math.log(arg)


def grad(g: float, theta: float) -> float:
    """Gradient of the log loss, g / (1 - g*theta)."""
    arg = 1.0 - g * theta
    if arg <= 0.0:
        raise NumericalSafetyError(f"gradient undefined: 1 - g*theta = {arg} for g={g}, theta={theta}")
    return g / arg


def barrier_value(theta: float, kind: BarrierKind) -> float:
    if kind is BarrierKind.SYMMETRIC:
        if not -1.0 < theta < 1.0:
            raise ValueError(f"theta={theta} is outside the open interval (-1, 1)")
        return -math.log(1.0 - theta) - math.log(1.0 + theta)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta={theta} is outside the open interval (0, 1)")
    return -math.log(theta) - math.log(1.0 - theta)


def barrier_hessian(theta: float, kind: BarrierKind) -> float:
    if kind is BarrierKind.SYMMETRIC:
        if not -1.0 < theta < 1.0:
            raise ValueError(f"theta={theta} is outside the open interval (-1, 1)")
        return (2.0 + 2.0 * theta * theta) / (1.0 - theta * theta) ** 2
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta={theta} is outside the open interval (0, 1)")
    return 1.0 / theta**2 + 1.0 / (1.0 - theta) ** 2


def dual_norm_sq(g: float, theta: float, kind: BarrierKind) -> float:
    """Squared local dual norm of the loss gradient, (grad)^2 / R''(theta).

    The barrier Hessian blows up exactly where the gradient does, which
    is what keeps this quantity bounded even for bets near the boundary.
    """
    d = grad(g, theta)
    return d * d / barrier_hessian(theta, kind)


def ftrl_closed_form(a: float, kind: BarrierKind) -> float:
    """Minimizer of a*theta + R(theta) over the barrier's domain.

    ``a`` is the scaled cumulative gradient: eta*G for FTRL, and
    eta*(G + hint) for the optimistic variant. Both branches use
    rationalized forms that stay accurate for large |a|; the naive
    (1 - sqrt(1 + a^2))/a loses every significant digit once |a| >> 1.
    """
    if not math.isfinite(a):
        raise ValueError(f"cumulative gradient scale must be finite, got {a}")
    if kind is BarrierKind.SYMMETRIC:
        theta = -a / (1.0 + math.hypot(1.0, a))
        lo, hi = _SYMMETRIC_BOUNDS
    else:
        # theta = (2 + a - sqrt(4 + a^2)) / (2a) with the cancellation
        # removed; s = sqrt(4 + a^2) + |a| is safe for either sign of a.
        s = math.hypot(2.0, a) + abs(a)
        theta = s / (s + 2.0) if a <= 0.0 else 2.0 / (2.0 + s)
        lo, hi = _UNIT_BOUNDS
    return min(max(theta, lo), hi)


@dataclass(frozen=True)
class FtrlState:
    """FTRL bookkeeping: running gradient sum and the bet it implies."""

    eta: float
    cum_grad: float
    barrier: BarrierKind
    current_theta: float


def ftrl_start(eta: float, barrier: BarrierKind) -> FtrlState:
    """Initial state; theta_1 is the barrier minimizer (closed form at 0)."""
    if eta <= 0.0:
        raise ConfigError(f"eta must be positive, got {eta}")
    return FtrlState(eta=eta, cum_grad=0.0, barrier=barrier, current_theta=ftrl_closed_form(0.0, barrier))


def ftrl_update(state: FtrlState, g: float) -> tuple[FtrlState, float]:
    """Fold payoff g into the gradient sum and emit the next bet."""
    cum = state.cum_grad + grad(g, state.current_theta)
    theta = ftrl_closed_form(state.eta * cum, state.barrier)
    return replace(state, cum_grad=cum, current_theta=theta), theta


HINT_LAST_GRAD = "last-grad"
HINT_ZERO = "zero"
HINT_POLICIES = (HINT_LAST_GRAD, HINT_ZERO)


@dataclass(frozen=True)
class OftrlState:
    """Optimistic FTRL: base state plus the current gradient guess.

    With the zero policy the hint never moves off 0 and the trajectory
    is bit-identical to plain FTRL.
    """

    base: FtrlState
    hint: float
    policy: str = HINT_LAST_GRAD


def hint_policy(state: OftrlState, g: float) -> float:
    """Guess for the next gradient. Default: replay the one just seen."""
    if state.policy == HINT_ZERO:
        return 0.0
    return grad(g, state.base.current_theta)


def oftrl_start(eta: float, barrier: BarrierKind, policy: str = HINT_LAST_GRAD) -> OftrlState:
    if policy not in HINT_POLICIES:
        raise ConfigError(f"unknown hint policy {policy!r}; expected one of {HINT_POLICIES}")
    return OftrlState(base=ftrl_start(eta, barrier), hint=0.0, policy=policy)


def oftrl_update(state: OftrlState, g: float) -> tuple[OftrlState, float]:
    base = state.base
    cum = base.cum_grad + grad(g, base.current_theta)
    hint = hint_policy(state, g)
    theta = ftrl_closed_form(base.eta * (cum + hint), base.barrier)
    new_base = replace(base, cum_grad=cum, current_theta=theta)
    return OftrlState(base=new_base, hint=hint, policy=state.policy), theta


@dataclass(frozen=True)
class OnsState:
    """Online Newton Step state: bet, curvature accumulator, and space."""

    current_theta: float
    accumulator: float
    space: DecisionSpace


def ons_start(one_sided: bool) -> OnsState:
    # The no-bet start theta_1 = 0 is admissible in both halved spaces.
    return OnsState(current_theta=0.0, accumulator=1.0, space=ons_space(one_sided))


def ons_update(state: OnsState, g: float) -> tuple[OnsState, float]:
    b = grad(g, state.current_theta)
    acc = state.accumulator + b * b
    theta = state.space.clip(state.current_theta - ONS_STEP_SCALE * b / acc)
    return OnsState(current_theta=theta, accumulator=acc, space=state.space), theta


class FtrlBettor:
    """Streaming FTRL bettor.

    Keeps plain float state updated in place: the betting loop runs one
    of these per round, so the wrapper avoids per-step allocation. The
    arithmetic is the same operation sequence as :func:`ftrl_update`,
    which the test suite holds it bit-identical to.
    """

    name = "ftrl"
    __slots__ = ("eta", "barrier", "cum_grad", "theta")

    def __init__(self, eta: float, one_sided: bool):
        if eta <= 0.0:
            raise ConfigError(f"eta must be positive, got {eta}")
        self.eta = eta
        self.barrier = BarrierKind.UNIT_INTERVAL if one_sided else BarrierKind.SYMMETRIC
        self.cum_grad = 0.0
        self.theta = ftrl_closed_form(0.0, self.barrier)

    def observe(self, g: float) -> float:
        self.cum_grad += grad(g, self.theta)
        self.theta = ftrl_closed_form(self.eta * self.cum_grad, self.barrier)
        return self.theta

    def state(self) -> FtrlState:
        return FtrlState(eta=self.eta, cum_grad=self.cum_grad, barrier=self.barrier, current_theta=self.theta)


class OftrlBettor:
    name = "oftrl"
    __slots__ = ("eta", "barrier", "policy", "cum_grad", "hint", "theta")

    def __init__(self, eta: float, one_sided: bool, hint: str = HINT_LAST_GRAD):
        if eta <= 0.0:
            raise ConfigError(f"eta must be positive, got {eta}")
        if hint not in HINT_POLICIES:
            raise ConfigError(f"unknown hint policy {hint!r}; expected one of {HINT_POLICIES}")
        self.eta = eta
        self.barrier = BarrierKind.UNIT_INTERVAL if one_sided else BarrierKind.SYMMETRIC
        self.policy = hint
        self.cum_grad = 0.0
        self.hint = 0.0
        self.theta = ftrl_closed_form(0.0, self.barrier)

    def observe(self, g: float) -> float:
        d = grad(g, self.theta)
        self.cum_grad += d
        self.hint = d if self.policy == HINT_LAST_GRAD else 0.0
        self.theta = ftrl_closed_form(self.eta * (self.cum_grad + self.hint), self.barrier)
        return self.theta

    def state(self) -> OftrlState:
        base = FtrlState(eta=self.eta, cum_grad=self.cum_grad, barrier=self.barrier, current_theta=self.theta)
        return OftrlState(base=base, hint=self.hint, policy=self.policy)


class OnsBettor:
    name = "ons"
    __slots__ = ("space", "accumulator", "theta")

    def __init__(self, eta: float, one_sided: bool):
        # eta is accepted for interface uniformity; ONS has no step size knob.
        self.space = ons_space(one_sided)
        self.accumulator = 1.0
        self.theta = 0.0

    def observe(self, g: float) -> float:
        b = grad(g, self.theta)
        self.accumulator += b * b
        raw = self.theta - ONS_STEP_SCALE * b / self.accumulator
        self.theta = min(max(raw, self.space.lo), self.space.hi)
        return self.theta

    def state(self) -> OnsState:
        return OnsState(current_theta=self.theta, accumulator=self.accumulator, space=self.space)


_BETTORS = {"ftrl": FtrlBettor, "oftrl": OftrlBettor, "ons": OnsBettor}


def make_bettor(method: str, one_sided: bool, eta: float, hint: str = HINT_LAST_GRAD):
    """Build a streaming bettor by name ('ons', 'ftrl', 'oftrl')."""
    try:
        cls = _BETTORS[method]
    except KeyError:
        raise ConfigError(f"unknown streaming method {method!r}; expected one of {sorted(_BETTORS)}") from None
    if cls is OftrlBettor:
        return cls(eta, one_sided, hint=hint)
    return cls(eta, one_sided)
