"""Analysis oracle tests.

Population comparators are cross-checked against closed-form Kelly
optima for two-outcome laws and against grid search; the wealth-regret
identity is verified on real engine runs.
"""

import itertools
import math

import numpy as np
import pytest

from seqbet import analysis, baselines, datagen, engine, learners
from seqbet.analysis import (
    GrowthFit,
    best_fixed_empirical,
    cumulative_gradients,
    feasible_comparator,
    growth_fit,
    local_norm_audit,
    payoff_atoms,
    play_sequence,
    regret_trace,
    rejection_lower_reference,
    theta_star_from_atoms,
    theta_star_oracle,
)
from seqbet.errors import ConfigError


def kelly_two_outcome(p, g1, g2):
    """Closed-form maximizer of p*ln(1-g1*t) + (1-p)*ln(1-g2*t)."""
    q = 1.0 - p
    return (p * g1 + q * g2) / (g1 * g2)


def history_of(payoffs, scenario=None):
    h = baselines.HistoryBuffer(scenario or engine.diff_means())
    for g in payoffs:
        h.append(g)
    return h


# ---------------------------------------------------------------------------
# regret traces
# ---------------------------------------------------------------------------

def test_constant_theta_zero_regret_against_itself():
    thetas = [0.3] * 20
    payoffs = list(np.random.default_rng(0).uniform(-0.5, 0.5, 20))
    trace = regret_trace(thetas, payoffs, comparator=0.3)
    assert np.allclose(trace.cumulative_regret, 0.0, atol=1e-12)


def test_regret_hand_value_constant_payoffs():
    # theta_t = 0, comparator -1, g = 0.5: regret at T is T*ln(1.5).
    T = 17
    trace = regret_trace([0.0] * T, [0.5] * T, comparator=-1.0)
    assert trace.cumulative_regret[-1] == pytest.approx(T * math.log(1.5), rel=1e-12)
    assert trace.per_round_loss == pytest.approx([0.0] * T)


def test_regret_rejects_infeasible_comparator():
    # comparator +1 against payoff g = 1 makes 1 - g*theta = 0
    with pytest.raises(ValueError, match="infeasible"):
        regret_trace([0.0, 0.0], [1.0, 0.5], comparator=1.0)


def test_wealth_regret_identity_on_engine_run():
    # ln W_T = sum ln(1 - g theta*) - Regret_T(theta*) for any feasible theta*.
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.8), datagen.Uniform(0.3, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 4), 400))
    for method in ("ftrl", "oftrl", "ons"):
        bettor = learners.make_bettor(method, False, 1.0)
        thetas = play_sequence(bettor, payoffs)
        log_wealth = float(np.log1p(-np.asarray(payoffs) * thetas).sum())
        for comparator in (0.0, 0.3, -0.6):
            trace = regret_trace(thetas, payoffs, comparator)
            benchmark_log_wealth = float(np.log(1.0 - np.asarray(payoffs) * comparator).sum())
            lhs = log_wealth
            rhs = benchmark_log_wealth - trace.cumulative_regret[-1]
            assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(lhs))


def test_misaligned_sequences_rejected():
    with pytest.raises(ValueError):
        regret_trace([0.1], [0.1, 0.2], comparator=0.0)


# ---------------------------------------------------------------------------
# comparators
# ---------------------------------------------------------------------------

def test_feasible_comparator_pulls_boundary_inward():
    adjusted, was_adjusted = feasible_comparator(1.0, [1.0, 0.5])
    assert was_adjusted
    assert adjusted == pytest.approx(1.0 - 1e-9)
    assert min(1.0 - g * adjusted for g in [1.0, 0.5]) > 0.0
    adjusted, was_adjusted = feasible_comparator(-1.0, [-1.0, -0.2])
    assert was_adjusted
    assert adjusted == pytest.approx(-(1.0 - 1e-9))
    # negative payoffs keep the +1 boundary feasible: no adjustment
    same, was_adjusted = feasible_comparator(1.0, [-0.5, -0.3])
    assert not was_adjusted and same == 1.0


def test_best_fixed_empirical_examples():
    space = learners.DecisionSpace(-1.0, 1.0)
    assert best_fixed_empirical(history_of([0.5, -0.5]), space) == pytest.approx(0.0, abs=1e-9)
    # all payoffs positive: monotone decreasing objective, lower boundary
    assert best_fixed_empirical(history_of([0.3, 0.3, 0.3]), space) == pytest.approx(-1.0, abs=1e-12)


def test_best_fixed_empirical_matches_grid():
    rng = np.random.default_rng(3)
    space = learners.DecisionSpace(-1.0, 1.0)
    for _ in range(25):
        payoffs = [float(g) for g in rng.uniform(-0.9, 0.9, size=int(rng.integers(1, 12)))]
        got = best_fixed_empirical(history_of(payoffs), space)
        grid = np.arange(-1.0, 1.0 + 5e-6, 1e-5)
        vals = np.log(1.0 - np.outer(grid, payoffs)).sum(axis=1)
        want = float(grid[int(np.argmax(vals))])
        assert got == pytest.approx(want, abs=1e-4)


def test_best_fixed_empirical_respects_halved_space():
    space = learners.ons_space(one_sided=False)
    theta = best_fixed_empirical(history_of([-0.4, -0.5, -0.6]), space)
    assert theta == pytest.approx(0.5, abs=1e-12)


# ---------------------------------------------------------------------------
# population oracle
# ---------------------------------------------------------------------------

def test_oracle_degenerate_payoff():
    # g identically 0.5: maximizer is the -1 boundary, omega* = ln 1.5.
    res = theta_star_from_atoms(np.array([0.5]), np.array([1.0]), -1.0, 1.0)
    assert res.theta_star == pytest.approx(-1.0, abs=1e-9)
    assert res.omega_star == pytest.approx(math.log(1.5), abs=1e-9)


def test_oracle_symmetric_two_point_law():
    res = theta_star_from_atoms(np.array([0.5, -0.5]), np.array([0.5, 0.5]), -1.0, 1.0)
    assert res.theta_star == pytest.approx(0.0, abs=1e-9)
    assert res.omega_star == pytest.approx(0.0, abs=1e-12)


def test_oracle_one_sided_bernoulli_matches_kelly():
    res = theta_star_oracle(engine.one_sided(0.3), datagen.Bernoulli(0.4))
    # atoms: g = -0.7 w.p. 0.4 and g = 0.3 w.p. 0.6
    kelly = kelly_two_outcome(0.4, -0.7, 0.3)
    omega = 0.4 * math.log(1.0 + 0.7 * kelly) + 0.6 * math.log(1.0 - 0.3 * kelly)
    assert res.theta_star == pytest.approx(kelly, abs=1e-8)
    assert res.omega_star == pytest.approx(omega, abs=1e-10)


def test_oracle_uniform_easy_setting():
    # Disjoint supports: every payoff is negative, so the best bet is the
    # +1 boundary and omega* = E[ln(1 + |g|)] with |g| = y - x.
    res = theta_star_oracle(engine.diff_means(), datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    assert res.theta_star == pytest.approx(1.0, abs=1e-9)
    # E[ln(1 + y - x)] for x~U(.2,.4), y~U(.7,.9) via high-res midpoint rule
    xs = np.linspace(0.2, 0.4, 4001)[:-1] + 0.05 / 1000
    ys = np.linspace(0.7, 0.9, 4001)[:-1] + 0.05 / 1000
    ref = float(np.log(1.0 + (ys[None, :] - xs[:, None])).mean())
    assert res.omega_star == pytest.approx(ref, abs=1e-6)


def test_oracle_quadrature_consistency_under_node_doubling():
    for nodes in ((120, 240),):
        a = theta_star_oracle(engine.diff_means(), datagen.Uniform(0.2, 0.8), datagen.Uniform(0.3, 0.9), n_nodes=nodes[0])
        b = theta_star_oracle(engine.diff_means(), datagen.Uniform(0.2, 0.8), datagen.Uniform(0.3, 0.9), n_nodes=nodes[1])
        assert abs(a.omega_star - b.omega_star) <= 1e-4
        assert abs(a.theta_star - b.theta_star) <= 1e-3


def test_oracle_trunc_normal_scenario_runs():
    res = theta_star_oracle(engine.diff_means(), datagen.TruncNormal(0.5, 0.15), datagen.TruncNormal(0.65, 0.15))
    assert 0.0 < -res.theta_star or res.theta_star > 0.0  # nonzero bet
    assert res.omega_star > 0.0


def test_oracle_rejects_external_specs():
    with pytest.raises(ConfigError):
        theta_star_oracle(engine.diff_means(), datagen.External("x.csv"), datagen.Uniform(0.1, 0.9))


def test_payoff_atoms_weights_sum_to_one():
    atoms, weights = payoff_atoms(engine.diff_means(), datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert atoms.min() >= -0.7 - 1e-12 and atoms.max() <= -0.3 + 1e-12
    atoms, weights = payoff_atoms(engine.one_sided(0.3), datagen.Bernoulli(0.4))
    assert sorted(atoms) == pytest.approx([-0.7, 0.3])
    assert weights.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# growth fit
# ---------------------------------------------------------------------------

def test_growth_fit_exact_linear():
    G = 0.4 * np.arange(1, 201)
    fit = growth_fit(G)
    assert fit.satisfied
    assert fit.t0 == 1
    assert fit.c >= 0.4 * (1.0 - 1e-9)


def test_growth_fit_alternating_is_unsatisfied():
    G = np.tile([1.0, 0.0], 100).cumsum() * 0  # zeros
    G = np.array([1.0, 0.0] * 100)  # |G_t| alternates 1, 0
    fit = growth_fit(G)
    assert not fit.satisfied
    assert fit.c == 0.0


def test_growth_fit_easy_setting_ftrl_run():
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 6), 2000))
    thetas = play_sequence(learners.make_bettor("ftrl", False, 0.25), payoffs)
    fit = growth_fit(cumulative_gradients(thetas, payoffs))
    assert fit.satisfied
    # slope on the scale of the support gap (a - n = 0.3)
    assert 0.1 <= fit.c <= 1.0
    assert fit.t0 == 1


def test_growth_fit_empty_and_threshold():
    assert growth_fit([]) == GrowthFit(t0=1, c=0.0, satisfied=False)
    # below the minimum slope threshold
    G = 1e-4 * np.arange(1, 101)
    assert not growth_fit(G).satisfied


# ---------------------------------------------------------------------------
# local norm audit
# ---------------------------------------------------------------------------

def test_local_norm_audit_zero_payoffs():
    assert local_norm_audit([0.0] * 10, [0.0] * 10, 0.25, learners.BarrierKind.SYMMETRIC) == 0.0
    assert local_norm_audit([], [], 0.25, learners.BarrierKind.SYMMETRIC) == 0.0


def test_local_norm_audit_small_eta_bound():
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.8), datagen.Uniform(0.3, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 8), 3000))
    thetas = play_sequence(learners.make_bettor("ftrl", False, 0.25), payoffs)
    audit = local_norm_audit(thetas, payoffs, 0.25, learners.BarrierKind.SYMMETRIC)
    assert audit <= 0.25 + 1e-12


def test_local_norm_audit_matches_scalar_dual_norm():
    thetas = [0.0, 0.4, -0.7]
    payoffs = [1.0, -0.5, 0.2]
    audit = local_norm_audit(thetas, payoffs, 1.0, learners.BarrierKind.SYMMETRIC)
    worst = max(math.sqrt(learners.dual_norm_sq(g, t, learners.BarrierKind.SYMMETRIC))
                for t, g in zip(thetas, payoffs))
    assert audit == pytest.approx(worst, rel=1e-12)


def test_local_norm_audit_large_eta_reports_without_bound():
    # eta = 1 may exceed 1/4; the audit just reports the maximum.
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 9), 500))
    thetas = play_sequence(learners.make_bettor("ftrl", False, 1.0), payoffs)
    audit = local_norm_audit(thetas, payoffs, 1.0, learners.BarrierKind.SYMMETRIC)
    assert math.isfinite(audit) and audit > 0.0


# ---------------------------------------------------------------------------
# reference rejection time
# ---------------------------------------------------------------------------

def test_reference_time_hand_values():
    assert rejection_lower_reference(0.05, math.log(1.5)) == pytest.approx(
        math.log(20.0) / math.log(1.5), rel=1e-12
    )
    assert rejection_lower_reference(1.0 / math.e, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_reference_time_scales_with_log_inverse_alpha():
    r1 = rejection_lower_reference(0.1, 0.5)
    r2 = rejection_lower_reference(0.01, 0.5)
    assert r2 == pytest.approx(2.0 * r1, rel=1e-12)


def test_reference_time_requires_positive_omega():
    with pytest.raises(ValueError):
        rejection_lower_reference(0.05, 0.0)
    with pytest.raises(ValueError):
        rejection_lower_reference(0.05, -0.2)


def test_regret_report_carries_both_comparators():
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 12), 500))
    thetas = analysis.play_sequence(learners.make_bettor("ftrl", False, 1.0), payoffs)
    oracle = theta_star_oracle(engine.diff_means(), datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    report = analysis.regret_report(thetas, payoffs, oracle.theta_star, learners.DecisionSpace(-1.0, 1.0))
    # disjoint supports: both comparators sit at the +1 boundary, which
    # stays feasible because every payoff is negative
    assert report.population_comparator == pytest.approx(1.0, abs=1e-8)
    assert report.empirical_comparator == pytest.approx(1.0, abs=1e-8)
    assert not report.population_adjusted and not report.empirical_adjusted
    assert report.population_regret == pytest.approx(report.empirical_regret, abs=1e-3)
    assert report.population_regret > 0.0


# ---------------------------------------------------------------------------
# regret growth consequences (reduced-size versions of the acceptance runs)
# ---------------------------------------------------------------------------

def test_ftrl_regret_plateaus_and_ons_gap_grows_easy_setting():
    scen = engine.diff_means()
    spec = datagen.StreamSpec(scen, datagen.H1, datagen.Uniform(0.2, 0.4), datagen.Uniform(0.7, 0.9))
    payoffs = list(itertools.islice(datagen.make_h1_stream(spec, 10), 2000))
    space = learners.DecisionSpace(-1.0, 1.0)
    history = history_of(payoffs)
    comparator, _ = feasible_comparator(best_fixed_empirical(history, space), payoffs)

    ftrl_thetas = play_sequence(learners.make_bettor("ftrl", False, 0.25), payoffs)
    ons_thetas = play_sequence(learners.make_bettor("ons", False, 0.25), payoffs)
    ftrl_trace = regret_trace(ftrl_thetas, payoffs, comparator)
    ons_trace = regret_trace(ons_thetas, payoffs, comparator)

    # ONS is capped at theta = 1/2, so against the full-space comparator
    # its regret grows linearly while FTRL's grows at most like log t.
    assert ons_trace.cumulative_regret[-1] > ftrl_trace.cumulative_regret[-1]
    late_growth = ftrl_trace.cumulative_regret[-1] - ftrl_trace.cumulative_regret[999]
    assert late_growth < 5.0
