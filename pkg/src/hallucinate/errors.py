"""Exception types shared across the package."""


class HallucinateError(Exception):
    """Base class for pipeline failures."""


class NoSamplesError(HallucinateError):
    """No usable sample images could be loaded."""


class InputTooSmallError(HallucinateError):
    """Input image is too small for the requested magnification."""


class SolverError(HallucinateError):
    """Iterative solver failed to reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
