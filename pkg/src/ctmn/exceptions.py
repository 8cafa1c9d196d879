"""Exception and warning classes raised by :mod:`ctmn`."""


class CtmnError(Exception):
    """Base class for all errors raised by this package."""


class StateSpaceTooLargeError(CtmnError, ValueError):
    """The joint state space exceeds the exact-enumeration limit."""


class ModelValidationError(CtmnError, ValueError):
    """A model is malformed (see :func:`ctmn.model.validate_model`)."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations) or "invalid model"
        super().__init__(msg)


class TrajectoryError(CtmnError, ValueError):
    """A trajectory is inconsistent with the model or with itself."""


class NullSpaceError(CtmnError, ValueError):
    """The stationary null space of a rate matrix is not one-dimensional."""


class OptimizationError(CtmnError, RuntimeError):
    """The objective is not finite at the starting point of an optimizer."""


class DocumentError(CtmnError, ValueError):
    """A persisted document could not be parsed.

    ``location`` names the offending line or field, e.g. ``"line 3"`` or
    ``"features[2].table"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class DegenerateDataWarning(UserWarning):
    """Data carry no evidence for some parameter; a fallback value was used."""


class ConvergenceWarning(UserWarning):
    """An iterative procedure stopped at its iteration cap."""
