"""Exception hierarchy shared across the package.

The CLI maps ValidationError (and subclasses) to exit code 2 and
NumericalError to exit code 3.
"""


class ValidationError(ValueError):
    """Bad inputs: invariant violations, malformed files, dimension mismatches."""


class FlowDomainError(ValidationError):
    """A point lies outside the image of an invertible flow (e.g. |theta| >= 1 for tanh)."""


class CheckpointError(ValidationError):
    """Checkpoint file is truncated, malformed, or belongs to a different run."""


class NumericalError(RuntimeError):
    """Numerical failure: ill-conditioned solve, non-finite update, failed retraction."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number
