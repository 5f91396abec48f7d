"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation failures exit 2,
missing upstream artifacts exit 3, numerical failures exit 4.
"""


class EndotransError(Exception):
    """Base class for all package errors."""


class ValidationError(EndotransError):
    """Invalid input, configuration, or violated precondition."""


class ManifestError(ValidationError):
    """Malformed manifest file; the message names the offending row or file."""


class LeakageError(ValidationError):
    """A test-fold patient contributed samples to a training batch."""


class DependencyError(EndotransError):
    """A required upstream artifact (checkpoint, fake dataset, ...) is missing."""


class NumericalError(EndotransError):
    """Non-finite loss or other numerical breakdown during training.

    ``snapshot`` carries the loss components observed at the point of failure.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = dict(snapshot or {})


class InternalError(EndotransError):
    """Invariant broken inside the package; indicates a wiring bug."""
