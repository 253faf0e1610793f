"""Command-line front end: simulate / test / sweep / bench / oracle.

Exit codes: 0 success, 2 configuration error, 3 data error. A test
verdict is data, not an error, so ``test`` exits 0 either way.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional

from . import __version__, analysis, datagen, engine, harness
from .errors import ConfigError, DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=[engine.DIFF_MEANS, engine.ONE_SIDED], default=engine.DIFF_MEANS,
                   help="testing scenario (default: diff-means)")
    p.add_argument("--mu0", type=float, default=None, help="one-sided null threshold in [0, 1]")


def _add_dist_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist-x", default=None, metavar="SPEC",
                   help="H1 sample distribution, e.g. uniform:0.2,0.4 | trunc-normal:0.5,0.15 | bernoulli:0.4")
    p.add_argument("--dist-y", default=None, metavar="SPEC", help="H1 y-side distribution (diff-means only)")
    p.add_argument("--h0-dist-x", default=None, metavar="SPEC",
                   help="one-sided H0 sample distribution (diff-means H0 streams reuse --dist-x/--dist-y shifted)")
    p.add_argument("--calibration", type=int, default=500,
                   help="calibration window for the diff-means H0 shift (default: 500)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="output path (default: stdout summary only)")
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="output format (default: csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqbet", description="Sequential hypothesis testing by betting")
    parser.add_argument("--version", action="version", version=f"seqbet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run repeated synthetic trials of one method")
    _add_scenario_flags(sim)
    _add_dist_flags(sim)
    sim.add_argument("--method", choices=harness.ALL_METHODS, default="ftrl")
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--runs", type=int, default=300)
    sim.add_argument("--budget", type=int, default=500)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--eta", type=float, default=1.0)
    sim.add_argument("--hypothesis", choices=[datagen.H1, datagen.H0], default=datagen.H1)
    _add_output_flags(sim)

    tst = sub.add_parser("test", help="run one sequential test over an external sample stream")
    _add_scenario_flags(tst)
    tst.add_argument("--input", required=True, help="sample file path, or - for stdin")
    tst.add_argument("--input-format", choices=["csv", "jsonl"], default="csv")
    tst.add_argument("--method", choices=harness.ALL_METHODS, default="ftrl")
    tst.add_argument("--alpha", type=float, default=0.05)
    tst.add_argument("--budget", type=int, default=None, help="optional round budget (default: run the whole file)")
    tst.add_argument("--eta", type=float, default=1.0)
    tst.add_argument("--seed", type=int, default=0)

    swp = sub.add_parser("sweep", help="alpha sweep with H1 rejection times and H0 false-positive rates")
    _add_scenario_flags(swp)
    _add_dist_flags(swp)
    swp.add_argument("--config", default=None, help="toml experiment config (overrides distribution flags)")
    swp.add_argument("--methods", default="all", help="comma-separated methods or 'all'")
    swp.add_argument("--alphas", default="0.005:0.1:20", metavar="LO:HI:N|a,b,...",
                     help="sweep grid (default: 0.005:0.1:20)")
    swp.add_argument("--runs", type=int, default=300)
    swp.add_argument("--budget", type=int, default=500)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--eta", type=float, default=1.0)
    swp.add_argument("--workers", type=int, default=1)
    _add_output_flags(swp)

    ben = sub.add_parser("bench", help="per-iteration runtime of each method")
    _add_scenario_flags(ben)
    _add_dist_flags(ben)
    ben.add_argument("--methods", default="all")
    ben.add_argument("--warmup", type=int, default=1000)
    ben.add_argument("--measure-iters", type=int, default=10000)
    ben.add_argument("--portfolio-measure-iters", type=int, default=None)
    ben.add_argument("--history-length", type=int, default=500)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--eta", type=float, default=1.0)
    _add_output_flags(ben)

    orc = sub.add_parser("oracle", help="population best bet, its growth rate, and the reference rejection time")
    _add_scenario_flags(orc)
    orc.add_argument("--dist-x", required=True, metavar="SPEC")
    orc.add_argument("--dist-y", default=None, metavar="SPEC")
    orc.add_argument("--alpha", type=float, default=0.05)
    orc.add_argument("--grid-resolution", type=float, default=1e-4)

    return parser


def _scenario_from(args) -> engine.Scenario:
    if args.scenario == engine.ONE_SIDED:
        if args.mu0 is None:
            raise ConfigError("one-sided testing requires --mu0")
        return engine.one_sided(args.mu0)
    if args.mu0 is not None:
        raise ConfigError("--mu0 only applies to one-sided testing")
    return engine.diff_means()


def _stream_specs_from(args, scenario: engine.Scenario, need_h0: bool) -> tuple[Optional[datagen.StreamSpec], Optional[datagen.StreamSpec]]:
    if args.dist_x is None:
        raise ConfigError("--dist-x is required")
    dist_x = datagen.parse_distribution(args.dist_x)
    dist_y = datagen.parse_distribution(args.dist_y) if args.dist_y else None
    h1 = datagen.StreamSpec(scenario, datagen.H1, dist_x, dist_y, calibration_length=args.calibration)
    h0 = None
    if need_h0:
        if scenario.is_one_sided:
            if args.h0_dist_x is None:
                raise ConfigError("one-sided sweeps need --h0-dist-x for the null stream")
            h0 = datagen.StreamSpec(scenario, datagen.H0, datagen.parse_distribution(args.h0_dist_x),
                                    calibration_length=args.calibration)
        else:
            h0 = datagen.StreamSpec(scenario, datagen.H0, dist_x, dist_y, calibration_length=args.calibration)
    return h1, h0


def _parse_methods(text: str) -> tuple[str, ...]:
    if text.strip().lower() == "all":
        return harness.ALL_METHODS
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    if not methods:
        raise ConfigError("no methods given")
    return methods


def _parse_alphas(text: str) -> tuple[float, ...]:
    import numpy as np

    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"alpha grid must be LO:HI:N, got {text!r}")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return tuple(float(a) for a in np.linspace(lo, hi, n))
    return tuple(float(a) for a in text.split(","))


def cmd_simulate(args) -> int:
    scenario = _scenario_from(args)
    need_h0 = args.hypothesis == datagen.H0
    h1, h0 = _stream_specs_from(args, scenario, need_h0=need_h0)
    if need_h0 and scenario.is_one_sided and h0 is None:
        raise ConfigError("one-sided H0 simulation needs --h0-dist-x")
    if need_h0 and not scenario.is_one_sided:
        h1 = None
    elif not need_h0:
        h0 = None
    else:  # one-sided H0
        h1 = None
    config = harness.ExperimentConfig(
        methods=(args.method,),
        alphas=(args.alpha,),
        h1=h1,
        h0=h0,
        runs=args.runs,
        budget=args.budget,
        master_seed=args.seed,
        eta=args.eta,
    )
    records = harness.run_trials(config)
    if args.out:
        harness.emit(records, args.format, args.out)
    rejected = sum(1 for r in records if r.verdict == engine.REJECTED)
    times = [r.rejection_time if r.rejection_time is not None else args.budget for r in records]
    print(
        f"method={args.method} alpha={args.alpha:g} hypothesis={args.hypothesis} runs={len(records)} "
        f"rejected={rejected} mean_time={sum(times) / len(times):g}"
    )
    return EXIT_OK


def cmd_test(args) -> int:
    scenario = _scenario_from(args)
    source = sys.stdin if args.input == "-" else args.input
    if isinstance(source, str):
        try:
            open(source, "r").close()
        except OSError as exc:
            raise DataError(f"cannot read input {source}: {exc}") from None
    stream = datagen.read_stream(source, args.input_format, scenario)
    config = engine.TestConfig(alpha=args.alpha, budget=args.budget, eta=args.eta,
                               learner=args.method, seed=args.seed)
    result = harness.run_single_test(stream, args.method, config, scenario)
    t = result.rejection_time if result.rejection_time is not None else "-"
    logw = math.log(result.final_wealth) if result.final_wealth > 0 else -math.inf
    print(f"verdict={result.verdict} time={t} final_log_wealth={logw:.17g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        config = harness.load_config(args.config)
    else:
        scenario = _scenario_from(args)
        h1, h0 = _stream_specs_from(args, scenario, need_h0=True)
        config = harness.ExperimentConfig(
            methods=_parse_methods(args.methods),
            alphas=_parse_alphas(args.alphas),
            h1=h1,
            h0=h0,
            runs=args.runs,
            budget=args.budget,
            master_seed=args.seed,
            eta=args.eta,
        )
    rows = harness.alpha_sweep(config, workers=args.workers)
    if args.out:
        harness.emit(rows, args.format, args.out)
    for row in rows:
        tau = f"{row.mean_rejection_time:g}" if row.mean_rejection_time is not None else "-"
        fpr = f"{row.empirical_fpr:g}" if row.empirical_fpr is not None else "-"
        print(f"method={row.method} alpha={row.alpha:g} mean_time={tau} fpr={fpr}")
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = _scenario_from(args)
    h1, _ = _stream_specs_from(args, scenario, need_h0=False)
    config = harness.ExperimentConfig(
        methods=_parse_methods(args.methods),
        alphas=(0.05,),
        h1=h1,
        runs=1,
        budget=500,
        master_seed=args.seed,
        eta=args.eta,
    )
    records = harness.bench_per_iteration(
        config,
        args.warmup,
        args.measure_iters,
        portfolio_measure_iters=args.portfolio_measure_iters,
        history_length=args.history_length,
    )
    if args.out:
        harness.emit(records, args.format, args.out)
    for r in records:
        print(f"method={r.method} mean_ms={r.mean_nanos / 1e6:.6f} std_ms={r.std_nanos / 1e6:.6f} iters={r.iters}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _scenario_from(args)
    dist_x = datagen.parse_distribution(args.dist_x)
    dist_y = datagen.parse_distribution(args.dist_y) if args.dist_y else None
    oracle = analysis.theta_star_oracle(scenario, dist_x, dist_y, grid_resolution=args.grid_resolution)
    # omega* at quadrature-noise scale means a null-like regime: no
    # finite reference rejection time to report.
    if oracle.omega_star > 1e-12:
        ref = analysis.rejection_lower_reference(args.alpha, oracle.omega_star)
        ref_text = f"{ref:.17g}"
    else:
        ref_text = "-"
    print(f"theta_star={oracle.theta_star:.17g} omega_star={oracle.omega_star:.17g} reference_time={ref_text}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "test": cmd_test,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"seqbet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"seqbet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
