"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, data problems exit 3.
"""


class SeqbetError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SeqbetError):
    """Invalid configuration: bad parameter ranges, inconsistent specs."""


class DataError(SeqbetError):
    """Bad input data: out-of-range samples, malformed stream rows."""


class NumericalSafetyError(SeqbetError):
    """The wealth factor 1 - theta*g collapsed to <= 0.

    This is never a valid state: barrier learners keep theta strictly
    interior and ONS plays a halved space, so a trigger indicates a
    learner bug rather than bad data. We raise instead of clamping
    because clamping would silently break the supermartingale property.
    """
