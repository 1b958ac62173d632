"""Exception hierarchy shared by the library and the command line tool.

The CLI maps each class to a distinct process exit code, so errors raised
anywhere in the library should use (or subclass) one of these.
"""


class RtChangePointError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RtChangePointError):
    """An input file could not be parsed (malformed CSV, wrong field count)."""


class ConfigError(RtChangePointError, ValueError):
    """Invalid configuration: boundary/item counts, quadrature size, ranges."""


class DataError(RtChangePointError, ValueError):
    """Data violates model requirements (non-finite entries, shape mismatch)."""


class DegenerateDataError(DataError):
    """Data admits no meaningful fit, e.g. a zero-variance item column."""


class EstimationError(RtChangePointError):
    """Numerical failure during likelihood evaluation or optimization."""


class InitializationError(EstimationError):
    """The objective is not finite at the starting parameter vector."""
