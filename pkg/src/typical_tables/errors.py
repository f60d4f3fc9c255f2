"""Exception types raised by the library."""

from __future__ import annotations


class TablesError(ValueError):
    """Base class for all errors raised by :mod:`typical_tables`."""


class MismatchedTotals(TablesError):
    pass


class NonPositiveEntry(TablesError):
    pass


class NegativeEntry(TablesError):
    pass


class NonPositiveTotal(TablesError):
    pass


class IndexOutOfBounds(TablesError):
    pass


class MarginMismatch(TablesError):
    pass


class ShapeMismatch(TablesError):
    pass


class DomainViolation(TablesError):
    pass


class AlphaTooSmall(TablesError):
    pass


class NotInSubspace(TablesError):
    pass


class CapExceeded(TablesError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} tables exceed the enumeration cap {cap}")
        self.count = count
        self.cap = cap


class BudgetExceeded(TablesError):
    """The DP state space outgrew the memo budget.

    ``estimate`` is the number of states seen when construction stopped, a
    lower bound on the full state count.
    """

    def __init__(self, estimate: int, budget: int):
        super().__init__(f"DP needs more than {budget} memo entries (reached {estimate})")
        self.estimate = estimate
        self.budget = budget


class NoConvergence(TablesError):
    """Raised by the solver; ``best`` holds the best iterate found."""

    def __init__(self, max_iter: int, best, residual: float):
        super().__init__(f"no convergence after {max_iter} sweeps (residual {residual:.3e})")
        self.max_iter = max_iter
        self.best = best
        self.residual = residual


class AttemptsExhausted(TablesError):
    def __init__(self, max_attempts: int):
        super().__init__(f"no table accepted in {max_attempts} attempts")
        self.max_attempts = max_attempts
