"""Exception types shared across the package."""


class MgplanError(Exception):
    """Base class for all package errors."""


class GenerationFailed(MgplanError):
    pass


class SamplingFailed(MgplanError):
    pass


class ParseError(MgplanError):
    """Malformed input file. ``where`` names the line or field at fault."""

    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"{where}: {message}"
        super().__init__(message)


class ValidationError(MgplanError):
    pass


class SizeLimit(MgplanError):
    pass


class InvalidOrder(MgplanError):
    pass


class ArityMismatch(MgplanError):
    pass


class IncompleteSolution(MgplanError):
    pass


class MissingModel(MgplanError):
    pass


class DegenerateDatasetWarning(UserWarning):
    """All regression targets are equal; the fitted model is constant."""
