"""Exception hierarchy.

Everything raised on purpose derives from SastabError so callers can catch
package failures without swallowing genuine bugs.
"""


class SastabError(Exception):
    """Base class for all package errors."""


class ConfigError(SastabError):
    """Invalid experiment configuration (bad key, bad value, unknown problem)."""


class ScheduleExhaustedError(SastabError):
    """A table-backed step schedule was asked for an index past its end."""


class InvalidRegionError(SastabError):
    """A sampling region is degenerate or could not be constructed."""


class EmptyRegionError(SastabError):
    """Rejection sampling found no points in the target region within budget."""


class NumericOverflowError(SastabError):
    """A numeric evaluation produced a non-finite intermediate."""


class IntegrationError(SastabError):
    """The o.d.e. integrator could not reach the requested time.

    The partial result accumulated before the failure is attached as
    ``.partial`` (a FlowResult covering the integrated prefix).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class IncompleteTraceError(SastabError):
    """A trajectory lacks a record (noise draws) the requested analysis needs."""


class ExpressionError(SastabError):
    """Expression parse or compile failure, with a character offset when known."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ExpressionEvalError(SastabError):
    """Expression evaluation hit a domain error (sqrt of negative, x/0, ...)."""
