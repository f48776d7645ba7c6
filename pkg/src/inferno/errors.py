"""Exception hierarchy shared by every inferno module."""


class InfernoError(Exception):
    """Base class for all inferno errors."""


class InvalidDistributionError(InfernoError, ValueError):
    pass


class ShapeError(InfernoError, ValueError):
    pass


class DomainError(InfernoError, ValueError):
    pass


class NumericError(InfernoError, ValueError):
    pass


class ValidationError(InfernoError, ValueError):
    """Raised when a structure or model violates its invariants.

    The ``problems`` attribute lists every violated invariant.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) or "invalid")


class ModelFormatError(InfernoError, ValueError):
    """Malformed model file. ``location`` holds a line number or field path."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class OracleTooLargeError(InfernoError, ValueError):
    pass


class ImpossibleObservationError(InfernoError, ValueError):
    pass


class PlannerTooLargeError(InfernoError, ValueError):
    pass


class EmptyPosteriorError(InfernoError, ValueError):
    pass


class InconsistencyError(InfernoError, ValueError):
    pass


class ConfigurationError(InfernoError, ValueError):
    pass
