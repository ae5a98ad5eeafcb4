"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class PliksError(Exception):
    """Base class for all library errors."""


class InputError(PliksError, ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class ModelFormatError(InputError):
    pass


class InvariantError(InputError):
    pass


class CameraError(InputError):
    pass


class SolverError(PliksError):
    """Numerical failure inside the solve pipeline (exit code 1)."""


class DegenerateError(SolverError):
    """Rotation is underdetermined for the given point set."""

    def __init__(self, message, segment=None):
        if segment is not None:
            message = f"segment {segment}: {message}"
        super().__init__(message)
        self.segment = segment
