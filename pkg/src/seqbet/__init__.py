"""Sequential hypothesis testing by betting.

A wealth process bets on streaming payoffs; crossing 1/alpha rejects
the null at anytime-valid level alpha. The package provides the betting
engine, three streaming bettors (ONS, FTRL+Barrier, Optimistic
FTRL+Barrier), two portfolio baselines (CO96, OJ23), synthetic and
file-backed payoff streams, analysis oracles, and a simulation harness.
"""

__version__ = "0.1.0"

from . import analysis, baselines, datagen, engine, harness, learners
from .errors import ConfigError, DataError, NumericalSafetyError, SeqbetError

__all__ = [
    "__version__",
    "analysis",
    "baselines",
    "datagen",
    "engine",
    "harness",
    "learners",
    "ConfigError",
    "DataError",
    "NumericalSafetyError",
    "SeqbetError",
]
