"""Errors raised by the simulation modules."""


class DomainError(ValueError):
    """Raise when an argument lies outside the domain of an operation."""


class NumericalRankError(RuntimeError):
    """Raise when a matrix that must be inverted is singular to tolerance."""


class CombinationLimitError(ValueError):
    """Raise when an exhaustive search would exceed its combination budget."""

    def __init__(self, count: int, limit: int) -> None:
        """Create the error for `count` combinations above `limit`.

        :param count: Number of port combinations requested.
        :param limit: Maximum number of combinations allowed.
        """
        super().__init__(
            f"Exhaustive search refused: {count} port combinations "
            f"exceed the limit of {limit}",
        )
        #: Number of port combinations requested
        self.count: int = count
        #: Maximum number of combinations allowed
        self.limit: int = limit


class InfeasibleSelectionError(ValueError):
    """Raise when no port set satisfies the separation constraint."""


class BracketError(RuntimeError):
    """Raise when a bisection interval does not contain the root."""
