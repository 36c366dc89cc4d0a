"""Exception types shared across the package."""


class FastridgeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FastridgeError, ValueError):
    """Invalid input data: parse failures, shape mismatches, empty/constant inputs."""


class DegenerateProblemError(FastridgeError, ArithmeticError):
    """A solver hit a numerically degenerate state (zero variance, saturated
    leverage, vanishing E-step statistics)."""
