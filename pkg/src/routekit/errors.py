"""Exception types shared across the package.

Argument errors (bad shapes, out-of-range hyperparameters) raise the builtin
ValueError; the classes here cover data-level failures that callers and the
CLI need to tell apart.
"""


class RoutekitError(Exception):
    """Base class for data and training failures raised by this package."""


class ParseError(RoutekitError):
    """A file could not be parsed; the message names the line and field."""


class ValidationError(RoutekitError):
    """Parsed values violate a documented invariant (range, sign, enum)."""


class ConsistencyError(RoutekitError):
    """Cross-file references disagree (unknown ids, duplicate ids, dims)."""


class InsufficientDataError(RoutekitError):
    """A required statistic has no observations to average over."""


class TrainingError(RoutekitError):
    """Optimization diverged; the message names the epoch and batch."""
