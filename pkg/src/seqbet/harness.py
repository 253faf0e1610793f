"""Experiment orchestration: repeated trials, alpha sweeps, benchmarks.

Trials are independent and may run across processes; records come back
in a canonical order (method, alpha, hypothesis, seed index) regardless
of scheduling. Timing is opt-in because wall clocks are not
deterministic and the default contract is byte-identical output for
identical master seeds; per-iteration cost tables come from
:func:`bench_per_iteration`, which pre-materializes payoffs so it times
the method update alone rather than the sample generator.
"""

from __future__ import annotations

import concurrent.futures
import math
import statistics
import time
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from . import baselines, datagen, engine
from .errors import ConfigError

try:
    import tomllib as _toml
except ModuleNotFoundError:  # python < 3.11
    import tomli as _toml

STREAMING_METHODS = ("ons", "ftrl", "oftrl")
PORTFOLIO_METHODS = ("co96", "oj23")
ALL_METHODS = STREAMING_METHODS + PORTFOLIO_METHODS
_METHOD_CODE = {m: i for i, m in enumerate(ALL_METHODS)}
_HYP_CODE = {datagen.H1: 0, datagen.H0: 1}

# The published sweep: 20 uniformly spaced significance levels.
DEFAULT_ALPHAS = tuple(float(a) for a in np.linspace(0.005, 0.1, 20))


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...]
    alphas: tuple[float, ...]
    h1: Optional[datagen.StreamSpec] = None
    h0: Optional[datagen.StreamSpec] = None
    runs: int = 300
    budget: int = 500
    master_seed: int = 0
    eta: float = 1.0

    def __post_init__(self) -> None:
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {ALL_METHODS}")
        if not self.alphas:
            raise ConfigError("alphas must be nonempty")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha must be in (0, 1), got {a}")
        if self.h1 is None and self.h0 is None:
            raise ConfigError("at least one of h1/h0 stream specs is required")
        if self.h1 is not None and self.h1.hypothesis != datagen.H1:
            raise ConfigError("h1 spec must carry hypothesis H1")
        if self.h0 is not None and self.h0.hypothesis != datagen.H0:
            raise ConfigError("h0 spec must carry hypothesis H0")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class TrialRecord:
    method: str
    alpha: float
    hypothesis: str
    seed_index: int
    verdict: str
    rejection_time: Optional[int]
    final_log_wealth: float
    per_iter_nanos: Optional[float]


@dataclass(frozen=True)
class AggregateRow:
    method: str
    alpha: float
    mean_rejection_time: Optional[float]
    censored_runs: Optional[int]
    empirical_fpr: Optional[float]
    mean_per_iter_nanos: Optional[float]
    std_per_iter_nanos: Optional[float]


@dataclass(frozen=True)
class BenchRecord:
    method: str
    mean_nanos: float
    std_nanos: float
    iters: int


def run_single_test(
    stream: Iterable[float],
    method: str,
    config: engine.TestConfig,
    scenario: engine.Scenario,
    *,
    rng: Optional[np.random.Generator] = None,
) -> engine.TestResult:
    """Run one test with any of the five methods over a payoff stream."""
    if method in PORTFOLIO_METHODS:
        return baselines.run_portfolio_test(stream, config, scenario, rng=rng)
    if method not in STREAMING_METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    return engine.run_betting_test(stream, config, scenario, rng=rng)


def _trial(args) -> TrialRecord:
    config, method, alpha_idx, hypothesis, k, measure_timing = args
    alpha = config.alphas[alpha_idx]
    spec = config.h1 if hypothesis == datagen.H1 else config.h0
    stream = datagen.make_stream(spec, datagen.substream_seed(config.master_seed, _HYP_CODE[hypothesis], k))
    nu_rng = engine.rng_from_seed(
        datagen.substream_seed(config.master_seed, 7, _METHOD_CODE[method], alpha_idx, _HYP_CODE[hypothesis], k)
    )
    test_config = engine.TestConfig(alpha=alpha, budget=config.budget, eta=config.eta, learner=method)
    started = time.perf_counter_ns()
    result = run_single_test(stream, method, test_config, spec.scenario, rng=nu_rng)
    elapsed = time.perf_counter_ns() - started
    per_iter = elapsed / result.rounds if (measure_timing and result.rounds) else None
    return TrialRecord(
        method=method,
        alpha=alpha,
        hypothesis=hypothesis,
        seed_index=k,
        verdict=result.verdict,
        rejection_time=result.rejection_time,
        final_log_wealth=math.log(result.final_wealth) if result.final_wealth > 0.0 else -math.inf,
        per_iter_nanos=per_iter,
    )


def _validate_streams(config: ExperimentConfig) -> None:
    # Building one stream per hypothesis runs the H0 calibration window
    # eagerly, so shift-out-of-range configurations fail here, before
    # any trial has executed.
    for hyp, spec in ((datagen.H1, config.h1), (datagen.H0, config.h0)):
        if spec is not None:
            datagen.make_stream(spec, datagen.substream_seed(config.master_seed, _HYP_CODE[hyp], 0))


def run_trials(config: ExperimentConfig, *, workers: int = 1, measure_timing: bool = False) -> list[TrialRecord]:
    """Run every (method, alpha, hypothesis, trial) combination.

    Trial k always sees the data substream derived from (master_seed,
    hypothesis, k), so methods and alphas are compared on paired data.
    Configuration problems (including H0 shift violations) surface
    before any trial runs.
    """
    _validate_streams(config)
    hypotheses = [h for h, spec in ((datagen.H1, config.h1), (datagen.H0, config.h0)) if spec is not None]
    tasks = [
        (config, method, alpha_idx, hyp, k, measure_timing)
        for method in config.methods
        for alpha_idx in range(len(config.alphas))
        for hyp in hypotheses
        for k in range(config.runs)
    ]
    if workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (workers * 8))
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial, tasks, chunksize=chunk))
    else:
        records = [_trial(t) for t in tasks]
    records.sort(key=lambda r: (r.method, r.alpha, r.hypothesis, r.seed_index))
    return records


def aggregate(records: Sequence[TrialRecord], budget: int) -> list[AggregateRow]:
    """Fold trial records into one row per (method, alpha).

    H1 runs contribute the mean rejection time, with budget-censored
    runs (no rejection) counted at the budget and their count reported.
    H0 runs contribute the empirical false-positive rate within the
    budget, counting randomized budget rejections as rejections.
    """
    groups: dict[tuple[str, float], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.alpha), []).append(r)
    rows = []
    for (method, alpha), recs in sorted(groups.items()):
        h1 = [r for r in recs if r.hypothesis == datagen.H1]
        h0 = [r for r in recs if r.hypothesis == datagen.H0]
        if h1:
            times = [r.rejection_time if r.rejection_time is not None else budget for r in h1]
            mean_tau: Optional[float] = sum(times) / len(times)
            censored: Optional[int] = sum(1 for r in h1 if r.verdict == engine.NOT_REJECTED)
        else:
            mean_tau, censored = None, None
        fpr = sum(1 for r in h0 if r.verdict == engine.REJECTED) / len(h0) if h0 else None
        timing = [r.per_iter_nanos for r in recs if r.per_iter_nanos is not None]
        mean_ns = sum(timing) / len(timing) if timing else None
        std_ns = statistics.pstdev(timing) if len(timing) > 1 else (0.0 if timing else None)
        rows.append(
            AggregateRow(
                method=method,
                alpha=alpha,
                mean_rejection_time=mean_tau,
                censored_runs=censored,
                empirical_fpr=fpr,
                mean_per_iter_nanos=mean_ns,
                std_per_iter_nanos=std_ns,
            )
        )
    return rows


def alpha_sweep(config: ExperimentConfig, *, workers: int = 1, measure_timing: bool = False) -> list[AggregateRow]:
    """One aggregate row per (method, alpha) over the configured sweep."""
    return aggregate(run_trials(config, workers=workers, measure_timing=measure_timing), config.budget)


def bench_per_iteration(
    config: ExperimentConfig,
    warmup_iters: int,
    measure_iters: int,
    *,
    portfolio_measure_iters: Optional[int] = None,
    history_length: int = 500,
) -> list[BenchRecord]:
    """Wall-clock cost per betting round, method by method.

    Streaming methods are timed over ``measure_iters`` rounds after a
    warmup; the portfolio baselines are timed per round with the history
    pre-grown to ``history_length`` entries, since their per-round cost
    scales with the history. Payoffs are pre-materialized so generator
    cost never leaks into the measurement.
    """
    if measure_iters < 1:
        raise ConfigError(f"measure_iters must be >= 1, got {measure_iters}")
    if warmup_iters < 0:
        raise ConfigError(f"warmup_iters must be >= 0, got {warmup_iters}")
    if portfolio_measure_iters is None:
        portfolio_measure_iters = max(100, measure_iters // 100)
    if portfolio_measure_iters < 1:
        raise ConfigError(f"portfolio_measure_iters must be >= 1, got {portfolio_measure_iters}")
    spec = config.h1 if config.h1 is not None else config.h0
    scenario = spec.scenario

    records = []
    for method in config.methods:
        if method in STREAMING_METHODS:
            stream = datagen.make_stream(spec, datagen.substream_seed(config.master_seed, 11))
            payoffs = [next(stream) for _ in range(warmup_iters + measure_iters)]
            from . import learners

            bettor = learners.make_bettor(method, scenario.is_one_sided, config.eta)
            for g in payoffs[:warmup_iters]:
                bettor.observe(g)
            samples = np.empty(measure_iters)
            for i, g in enumerate(payoffs[warmup_iters:]):
                t0 = time.perf_counter_ns()
                bettor.observe(g)
                samples[i] = time.perf_counter_ns() - t0
        else:
            stream = datagen.make_stream(spec, datagen.substream_seed(config.master_seed, 11))
            n_total = history_length + portfolio_measure_iters
            payoffs = [next(stream) for _ in range(n_total)]
            history = baselines.HistoryBuffer(scenario)
            for g in payoffs[:history_length]:
                history.append(g)
            stat_fn = baselines.co96 if method == "co96" else baselines.oj23
            stat_fn(history)  # warm caches (lgamma tables, numpy paths)
            samples = np.empty(portfolio_measure_iters)
            for i, g in enumerate(payoffs[history_length:]):
                t0 = time.perf_counter_ns()
                history.append(g)
                stat_fn(history)
                samples[i] = time.perf_counter_ns() - t0
        records.append(
            BenchRecord(
                method=method,
                mean_nanos=float(samples.mean()),
                std_nanos=float(samples.std()),
                iters=int(samples.shape[0]),
            )
        )
    return records


def _format_float(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"refusing to serialize non-finite value {v}")
    return format(v, ".17g")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return _format_float(v)
    return str(v)


def _json_scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return _format_float(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit(records: Sequence, fmt: str, path: str) -> None:
    """Serialize records (csv or json) with 17-significant-digit floats.

    The column set mirrors the record dataclass field names; a missing
    rejection time serializes as an empty csv cell / json null.
    Emitting, reloading, and emitting again is byte-stable.
    """
    if not records:
        raise ConfigError("no records to emit")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}; expected csv or json")
    names = [f.name for f in fields(records[0])]
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    with fh:
        if fmt == "csv":
            fh.write(",".join(names) + "\n")
            for r in records:
                fh.write(",".join(_cell(getattr(r, n)) for n in names) + "\n")
        else:
            lines = []
            for r in records:
                body = ", ".join(f'"{n}": {_json_scalar(getattr(r, n))}' for n in names)
                lines.append("  {" + body + "}")
            fh.write("[\n" + ",\n".join(lines) + "\n]\n")


def _parse_dist_entry(entry) -> datagen.DistributionSpec:
    if isinstance(entry, str):
        return datagen.parse_distribution(entry)
    raise ConfigError(f"distribution entries must be strings like 'uniform:0.2,0.4', got {entry!r}")


def _parse_stream_table(table: dict, scenario: engine.Scenario, hypothesis: str) -> datagen.StreamSpec:
    kwargs = {}
    if "calibration_length" in table:
        kwargs["calibration_length"] = int(table["calibration_length"])
    return datagen.StreamSpec(
        scenario=scenario,
        hypothesis=hypothesis,
        dist_x=_parse_dist_entry(table["dist_x"]),
        dist_y=_parse_dist_entry(table["dist_y"]) if "dist_y" in table else None,
        **kwargs,
    )


def load_config(path: str) -> ExperimentConfig:
    """Read an ExperimentConfig from a toml file mirroring its field names."""
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"bad toml in {path}: {exc}") from None
    try:
        sc = data["scenario"]
        scenario = engine.Scenario(sc["kind"], mu0=sc.get("mu0"))
        alphas = data.get("alphas", DEFAULT_ALPHAS)
        if isinstance(alphas, dict):
            alphas = tuple(float(a) for a in np.linspace(alphas["lo"], alphas["hi"], int(alphas["n"])))
        else:
            alphas = tuple(float(a) for a in alphas)
        return ExperimentConfig(
            methods=tuple(data.get("methods", ALL_METHODS)),
            alphas=alphas,
            h1=_parse_stream_table(data["h1"], scenario, datagen.H1) if "h1" in data else None,
            h0=_parse_stream_table(data["h0"], scenario, datagen.H0) if "h0" in data else None,
            runs=int(data.get("runs", 300)),
            budget=int(data.get("budget", 500)),
            master_seed=int(data.get("master_seed", 0)),
            eta=float(data.get("eta", 1.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"config {path} is missing required key {exc}") from None
