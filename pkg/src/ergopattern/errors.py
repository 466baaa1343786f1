"""Exception types raised across the package."""


class ErgoPatternError(Exception):
    """Base class for all package errors."""


class DomainViolationError(ErgoPatternError, ValueError):
    """A point lies outside the rectangular workspace."""


class NormalizationError(ErgoPatternError, ValueError):
    """A density does not carry unit mass, or carries no mass at all."""


class DimensionMismatchError(ErgoPatternError, ValueError):
    """Coefficient vectors built on different bases were combined."""


class ConfigurationError(ErgoPatternError, ValueError):
    """A configuration field is missing or out of range.

    ``field`` names the offending field so callers can surface it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ControllerError(ErgoPatternError, RuntimeError):
    def __init__(self, message: str, iteration: int | None = None, step: int | None = None):
        parts = [message]
        if iteration is not None:
            parts.append(f"descent iteration {iteration}")
        if step is not None:
            parts.append(f"world step {step}")
        super().__init__(" at ".join(parts) if len(parts) > 1 else message)
        self.iteration = iteration
        self.step = step


class InsufficientAgentsError(ErgoPatternError, ValueError):
    pass


class UndefinedDistributionError(ErgoPatternError, ValueError):
    """No dimples exist to define an empirical distribution."""


class ImageFormatError(ErgoPatternError, ValueError):
    pass


class RecordParseError(ErgoPatternError, ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
