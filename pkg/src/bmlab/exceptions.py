"""Exception hierarchy shared across bmlab."""


class BMLabError(Exception):
    """Base class for all bmlab errors."""

    exit_code = 1


class ConfigError(BMLabError, ValueError):
    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericalError(BMLabError, ArithmeticError):
    """A quantity the theory requires to be finite/positive is not."""

    exit_code = 3


class HermiteOverflowError(NumericalError, OverflowError):
    pass


class NormalizationError(NumericalError):
    pass


class RankError(BMLabError, ValueError):
    """The Hermite rank is too small for the requested operation."""

    exit_code = 3


class EmbeddingFailure(NumericalError):
    pass


class BudgetExceeded(BMLabError):
    exit_code = 4


class DegeneratePoints(BMLabError, ValueError):
    exit_code = 3


class TruncationWarning(UserWarning):
    """Raised through ``warnings`` when the Hermite tail mass is not negligible."""
