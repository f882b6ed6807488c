"""Exception hierarchy shared by every afmloc module."""


class AfmError(Exception):
    """Base class for all afmloc errors."""


class ArgumentError(AfmError, ValueError):
    """An argument is non-finite, out of range or otherwise malformed."""


class DomainError(AfmError, ValueError):
    """A coordinate lies outside the region where a quantity is defined."""


class GridFormatError(AfmError, ValueError):
    """A gridded velocity file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int
        1-based line number of the offending line.
    """

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PlacementError(AfmError, ValueError):
    """A point-source stencil would cross an absorbing or reflecting edge."""


class ConfigError(AfmError, ValueError):
    """Inconsistent simulation or experiment configuration (e.g. CFL violation)."""


class NumericalBlowupError(AfmError, ArithmeticError):
    """Non-finite values appeared while time stepping."""

    def __init__(self, step):
        super().__init__(f"non-finite wavefield detected at step {step}")
        self.step = step


class DegenerateTraceError(AfmError, ValueError):
    """An observed trace carries zero energy inside its window."""

    def __init__(self, receiver):
        super().__init__(f"observed trace for receiver {receiver} has zero energy")
        self.receiver = receiver


class ConsistencyError(AfmError, ValueError):
    """Inputs that must describe the same grid or time axis disagree."""
