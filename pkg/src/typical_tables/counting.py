"""Exact counting, enumeration and exact uniform sampling of tables.

These are brute-force oracles meant for desk-scale margins. The count DP
runs over columns; its state is the vector of row sums still to be filled.
Because the number of completions does not depend on the order of the rows,
states are stored as sorted tuples, which shrinks the state space by up to a
factor ``m!``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._fallback import bounded_compositions
from .errors import CapExceeded
from .model import Margins, as_table
from .rng import randbelow

DEFAULT_BUDGET = 10**7


def default_budget() -> int:
    """Memo budget, overridable through the ``TT_BUDGET`` environment variable."""
    raw = os.environ.get("TT_BUDGET")
    return int(raw) if raw else DEFAULT_BUDGET


@dataclass(frozen=True)
class DPTable:
    margins: Margins
    memo: list[dict[tuple[int, ...], int]] = field(repr=False)
    # (j, residual) -> [(column vector, completions)]; filled lazily by unranking
    _choices: dict = field(default_factory=dict, repr=False, compare=False)

    def choices(self, j: int, residual: tuple[int, ...]) -> list[tuple[tuple[int, ...], int]]:
        """Column-``j`` vectors with a non-zero number of completions, in enumeration order."""
        key = (j, residual)
        hit = self._choices.get(key)
        if hit is None:
            hit = []
            for d in bounded_compositions(self.margins.cols[j], residual):
                w = self.count(j + 1, [a - b for a, b in zip(residual, d)])
                if w:
                    hit.append((d, w))
            self._choices[key] = hit
        return hit

    def count(self, j: int, residual) -> int:
        """Number of ways to fill columns ``j..n-1`` (0-based) given row residuals."""
        if j == self.margins.n:
            return int(not any(residual))
        return self.memo[j].get(tuple(sorted(int(v) for v in residual)), 0)

    @property
    def total(self) -> int:
        return self.count(0, self.margins.rows)

    @property
    def n_states(self) -> int:
        return sum(len(layer) for layer in self.memo)

    def states_per_column(self) -> list[int]:
        return [len(layer) for layer in self.memo]


def build_dp(margins: Margins, budget: int | None = None, backend: str | None = None) -> DPTable:
    """Build the count DP, raising :class:`BudgetExceeded` past ``budget`` states."""
    budget = default_budget() if budget is None else budget
    memo = _backend.dp_counts(margins.rows, margins.cols, budget, backend=backend)
    return DPTable(margins, memo)


def count_tables(margins: Margins, budget: int | None = None) -> int:
    return build_dp(margins, budget).total


def iter_tables(margins: Margins):
    """Yield every table in row-major lexicographic order.

    Rows are filled one at a time with vectors bounded by the remaining
    column sums; any non-negative remainder with matching totals can be
    completed, so the search never dead-ends.
    """
    m = margins.m
    rows = margins.rows
    table = [None] * m

    def rec(i, col_rem):
        if i == m - 1:
            table[i] = tuple(col_rem)
            yield as_table(table)
            return
        for d in bounded_compositions(rows[i], col_rem):
            table[i] = d
            yield from rec(i + 1, [a - b for a, b in zip(col_rem, d)])

    yield from rec(0, list(margins.cols))


def enumerate_tables(margins: Margins, cap: int = 100_000, budget: int | None = None) -> list[np.ndarray]:
    total = count_tables(margins, budget)
    if total > cap:
        raise CapExceeded(total, cap)
    return list(iter_tables(margins))


def unrank_table(dp: DPTable, rank: int) -> np.ndarray:
    """The table with index ``rank`` in the DP's column-by-column order."""
    margins = dp.margins
    if not 0 <= rank < dp.total:
        raise ValueError(f"rank {rank} outside [0, {dp.total})")
    m, n = margins.shape
    out = np.zeros((m, n), dtype=np.int64)
    rho = tuple(margins.rows)
    for j in range(n):
        for d, w in dp.choices(j, rho):
            if rank < w:
                out[:, j] = d
                rho = tuple(a - b for a, b in zip(rho, d))
                break
            rank -= w
    out.setflags(write=False)
    return out


def dp_uniform_sample(dp: DPTable, rng: np.random.Generator) -> np.ndarray:
    """Exactly uniform table from ``Sigma(R, C)``.

    Column ``j`` receives ``d`` with probability
    ``count(j+1, rho - d) / count(j, rho)``, realized by unranking a single
    uniform integer below the total count.
    """
    return unrank_table(dp, randbelow(rng, dp.total))
