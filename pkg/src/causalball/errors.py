"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class CBSError(Exception):
    """Base class for all causal ball screening errors."""


class SchemaError(CBSError, ValueError):
    """Malformed input: bad shapes, non-finite values, missing or bad columns."""


class DegenerateDataError(CBSError, ValueError):
    """Data on which the statistic or model is undefined (e.g. an empty arm)."""


class ConvergenceError(CBSError, RuntimeError):
    """Raised only when a non-converged fit is escalated (strict mode)."""
