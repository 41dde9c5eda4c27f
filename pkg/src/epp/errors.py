"""Exception types shared across the package."""


class EppError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(EppError, ValueError):
    """A distribution, model or file failed validation."""


class ZeroProbabilityError(EppError, ArithmeticError):
    """The realized outcome had predictive probability zero.

    ``round`` is the 1-based round index at which it happened.
    """

    def __init__(self, round: int, message: str | None = None):
        self.round = round
        super().__init__(message or f"outcome at round {round} has predictive probability 0")


class CapacityError(EppError, RuntimeError):
    """An enumeration guard was exceeded."""


class InconsistentPartitionError(InvalidInputError):
    """A predecessor vector does not describe any partition."""


class MixabilityError(EppError, ArithmeticError):
    """No action satisfying the mixability inequality was found."""
