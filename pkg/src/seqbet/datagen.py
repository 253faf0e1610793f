"""Seeded sample generators and external stream ingestion.

All generators emit samples in [0, 1] and payoffs in [-1, 1], and are
fully determined by (spec, seed). Truncated normals are drawn through
the inverse CDF rather than rejection so that the draw count per round
is fixed, which keeps parallel substreams reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterator, Optional, TextIO, Union

import numpy as np

from . import engine
from .errors import ConfigError, DataError

H0 = "H0"
H1 = "H1"

_STD_NORMAL = NormalDist()
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.a < self.b <= 1.0:
            raise ConfigError(f"uniform bounds must satisfy 0 <= a < b <= 1, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class TruncNormal:
    """Normal(mu, sigma) truncated to [lo, hi]; sigma is a standard deviation."""

    mu: float
    sigma: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ConfigError(f"truncation bounds must satisfy 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class External:
    """Samples read from a file instead of a synthetic distribution."""

    path: str
    fmt: str = "csv"

    def __post_init__(self) -> None:
        if self.fmt not in ("csv", "jsonl"):
            raise ConfigError(f"unknown external format {self.fmt!r}; expected csv or jsonl")


DistributionSpec = Union[Uniform, TruncNormal, Bernoulli, External]


def sample(dist: DistributionSpec, rng: np.random.Generator) -> float:
    """One draw in [0, 1]. Consumes exactly one uniform from ``rng``."""
    u = float(rng.random())
    if isinstance(dist, Uniform):
        return dist.a + (dist.b - dist.a) * u
    if isinstance(dist, Bernoulli):
        return 1.0 if u < dist.p else 0.0
    if isinstance(dist, TruncNormal):
        p_lo = _STD_NORMAL.cdf((dist.lo - dist.mu) / dist.sigma)
        p_hi = _STD_NORMAL.cdf((dist.hi - dist.mu) / dist.sigma)
        # inv_cdf needs p strictly inside (0, 1); clamp against underflow.
        p = min(max(p_lo + u * (p_hi - p_lo), 1e-300), 1.0 - 1e-16)
        x = dist.mu + dist.sigma * _STD_NORMAL.inv_cdf(p)
        return min(max(x, dist.lo), dist.hi)
    raise ConfigError(f"cannot sample from {dist!r}; external streams are file-backed")


def parse_distribution(text: str) -> DistributionSpec:
    """Parse the CLI mini-language, e.g. 'uniform:0.2,0.4' or 'bernoulli:0.4'."""
    name, sep, argtext = text.partition(":")
    name = name.strip().lower()
    if not sep:
        raise ConfigError(f"distribution spec {text!r} is missing ':' arguments")
    try:
        args = [float(v) for v in argtext.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad distribution arguments in {text!r}: {exc}") from None
    if name == "uniform" and len(args) == 2:
        return Uniform(*args)
    if name in ("trunc-normal", "truncnormal") and len(args) in (2, 4):
        return TruncNormal(*args)
    if name == "bernoulli" and len(args) == 1:
        return Bernoulli(args[0])
    raise ConfigError(
        f"cannot parse distribution {text!r}; expected uniform:a,b | trunc-normal:mu,sigma[,lo,hi] | bernoulli:p"
    )


def format_distribution(dist: DistributionSpec) -> str:
    if isinstance(dist, Uniform):
        return f"uniform:{dist.a:g},{dist.b:g}"
    if isinstance(dist, TruncNormal):
        return f"trunc-normal:{dist.mu:g},{dist.sigma:g},{dist.lo:g},{dist.hi:g}"
    if isinstance(dist, Bernoulli):
        return f"bernoulli:{dist.p:g}"
    return f"external:{dist.path}"


@dataclass(frozen=True)
class StreamSpec:
    """Scenario plus the distributions feeding it.

    ``dist_y`` is present only for difference-in-means. For H0
    difference-in-means streams, the y side is shifted by one constant
    so the first ``calibration_length`` pairs share their empirical mean.
    """

    scenario: engine.Scenario
    hypothesis: str
    dist_x: DistributionSpec
    dist_y: Optional[DistributionSpec] = None
    calibration_length: int = 500

    def __post_init__(self) -> None:
        if self.hypothesis not in (H0, H1):
            raise ConfigError(f"hypothesis must be {H0!r} or {H1!r}, got {self.hypothesis!r}")
        if self.scenario.is_one_sided:
            if self.dist_y is not None:
                raise ConfigError("one-sided testing takes a single sample stream; drop dist_y")
        elif self.dist_y is None:
            raise ConfigError("difference-in-means testing requires dist_y")
        if self.calibration_length < 1:
            raise ConfigError(f"calibration_length must be positive, got {self.calibration_length}")


def make_rng(seed) -> np.random.Generator:
    return engine.rng_from_seed(seed)


def substream_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Derive an independent substream for (master_seed, key).

    SeedSequence's spawn-key mixing is avalanche-quality, so trial
    substreams are statistically independent of one another.
    """
    return np.random.SeedSequence(int(master_seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))


def _one_sided_payoffs(dist: DistributionSpec, mu0: float, rng: np.random.Generator) -> Iterator[float]:
    while True:
        yield engine.payoff_one_sided(mu0, sample(dist, rng))


def make_h1_stream(spec: StreamSpec, seed) -> Iterator[float]:
    """Lazy payoff source for an alternative-hypothesis scenario."""
    if spec.hypothesis != H1:
        raise ConfigError(f"make_h1_stream got a {spec.hypothesis} spec")
    rng = make_rng(seed)
    if spec.scenario.is_one_sided:
        return _one_sided_payoffs(spec.dist_x, spec.scenario.mu0, rng)

    def gen() -> Iterator[float]:
        while True:
            x = sample(spec.dist_x, rng)
            y = sample(spec.dist_y, rng)
            yield engine.payoff_diff_means(x, y)

    return gen()


def make_h0_stream(spec: StreamSpec, seed) -> Iterator[float]:
    """Lazy payoff source for a null-hypothesis scenario.

    Difference-in-means: draws both raw streams, computes the shift
    delta = mean(x) - mean(y) over the calibration window, and emits
    (x_t, y_t + delta) pairs; the same delta applies past the window. A
    shifted value outside [0, 1] is a configuration error naming the
    offending index, never a clamp, since clamping would move the mean
    and quietly break the construction.
    """
    if spec.hypothesis != H0:
        raise ConfigError(f"make_h0_stream got a {spec.hypothesis} spec")
    rng = make_rng(seed)
    if spec.scenario.is_one_sided:
        return _one_sided_payoffs(spec.dist_x, spec.scenario.mu0, rng)

    n = spec.calibration_length
    xs = []
    ys = []
    for _ in range(n):
        xs.append(sample(spec.dist_x, rng))
        ys.append(sample(spec.dist_y, rng))
    delta = math.fsum(xs) / n - math.fsum(ys) / n

    def shift(y: float, index: int) -> float:
        shifted = y + delta
        if not 0.0 <= shifted <= 1.0:
            raise ConfigError(
                f"H0 shift pushes sample index {index} out of range: y={y} + delta={delta} = {shifted}; "
                "choose distributions whose shifted support stays inside [0, 1]"
            )
        return shifted

    # Validate the whole calibration window up front so configuration
    # problems surface before any trial consumes the stream.
    shifted_ys = [shift(y, i) for i, y in enumerate(ys)]

    def gen() -> Iterator[float]:
        for i in range(n):
            yield engine.payoff_diff_means(xs[i], shifted_ys[i])
        i = n
        while True:
            x = sample(spec.dist_x, rng)
            y = sample(spec.dist_y, rng)
            yield engine.payoff_diff_means(x, shift(y, i))
            i += 1

    return gen()


def make_stream(spec: StreamSpec, seed) -> Iterator[float]:
    if spec.hypothesis == H1:
        return make_h1_stream(spec, seed)
    return make_h0_stream(spec, seed)


def read_stream(source: Union[str, TextIO], fmt: str, scenario: engine.Scenario) -> Iterator[float]:
    """Yield payoffs from a csv or jsonl file in file order.

    csv carries a header ``x`` or ``x,y``; jsonl carries objects with
    key ``x`` and, for difference-in-means, ``y``. Every malformed or
    out-of-range row raises a DataError naming its line number.
    """
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown stream format {fmt!r}; expected csv or jsonl")

    def gen() -> Iterator[float]:
        if isinstance(source, str):
            fh: TextIO = open(source, "r", encoding="utf-8", newline="")
            close = True
        else:
            fh, close = source, False
        try:
            if fmt == "csv":
                yield from _read_csv(fh, scenario)
            else:
                yield from _read_jsonl(fh, scenario)
        finally:
            if close:
                fh.close()

    return gen()


def _row_payoff(scenario: engine.Scenario, line: int, x: float, y: Optional[float]) -> float:
    if scenario.is_one_sided:
        if not 0.0 <= x <= 1.0:
            raise DataError(f"line {line}: sample x={x} is outside [0, 1]")
        return engine.payoff_one_sided(scenario.mu0, x)
    if y is None:
        raise DataError(f"line {line}: difference-in-means rows need both x and y")
    if not 0.0 <= x <= 1.0:
        raise DataError(f"line {line}: sample x={x} is outside [0, 1]")
    if not 0.0 <= y <= 1.0:
        raise DataError(f"line {line}: sample y={y} is outside [0, 1]")
    return engine.payoff_diff_means(x, y)


def _read_csv(fh: TextIO, scenario: engine.Scenario) -> Iterator[float]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        return
    cols = [c.strip().lower() for c in header]
    if "x" not in cols:
        raise DataError("line 1: csv header must carry an 'x' column")
    xi = cols.index("x")
    yi = cols.index("y") if "y" in cols else None
    for line, row in enumerate(reader, start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        try:
            x = float(row[xi])
            y = float(row[yi]) if yi is not None else None
        except (ValueError, IndexError):
            raise DataError(f"line {line}: malformed csv row {row!r}") from None
        yield _row_payoff(scenario, line, x, y)


def _read_jsonl(fh: TextIO, scenario: engine.Scenario) -> Iterator[float]:
    for line, raw in enumerate(fh, start=1):
        if raw.strip() == "":
            continue
        try:
            obj = json.loads(raw)
            x = float(obj["x"])
            y = float(obj["y"]) if "y" in obj else None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DataError(f"line {line}: malformed jsonl row {raw.strip()!r}") from None
        yield _row_payoff(scenario, line, x, y)
