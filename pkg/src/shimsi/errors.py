"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ShimError(Exception):
    exit_code = 1


class InputError(ShimError, ValueError):
    """Malformed or out-of-range user input."""

    exit_code = 2


class EmptyModelError(InputError):
    """No pattern has a nonzero correlation with the response."""


class DegeneracyError(ShimError):
    """Active Gram matrix is singular or numerically rank deficient."""

    exit_code = 3

    def __init__(self, message, pattern=None, param=None):
        super().__init__(message)
        self.pattern = pattern
        self.param = param


class NumericalDegeneracyError(ShimError):
    """A probability or root computation lost all precision."""

    exit_code = 3


class CapRefusalError(ShimError):
    """A dense oracle was asked to materialize too many columns."""

    exit_code = 4


class ConsistencyError(ShimError):
    """Internal invariant violated (indicates a path bug, not bad input)."""

    exit_code = 3
