"""Margins, tables, entry sets and the closed-form quantities built on them.

Tables and real matrices are plain numpy arrays (``int64`` and ``float64``).
Row and column indices are 0-based in memory and 1-based in every JSON
format produced or consumed here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    IndexOutOfBounds,
    MarginMismatch,
    MismatchedTotals,
    NegativeEntry,
    NonPositiveEntry,
    NonPositiveTotal,
    ShapeMismatch,
)


@dataclass(frozen=True)
class Margins:
    """Row sums and column sums sharing a common total."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def n(self) -> int:
        return len(self.cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), len(self.cols))

    @property
    def total(self) -> int:
        return sum(self.rows)

    def row_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.int64)

    def col_array(self) -> np.ndarray:
        return np.asarray(self.cols, dtype=np.int64)

    def transpose(self) -> Margins:
        return Margins(self.cols, self.rows)

    def __repr__(self) -> str:
        return f"Margins(rows={list(self.rows)}, cols={list(self.cols)})"


def validate_margins(row_sums: Iterable[int], col_sums: Iterable[int]) -> Margins:
    """Check and freeze a pair of margin vectors."""
    rows = tuple(_as_int(v) for v in row_sums)
    cols = tuple(_as_int(v) for v in col_sums)
    if not rows or not cols:
        raise NonPositiveEntry("margins must be non-empty")
    if min(rows) < 1 or min(cols) < 1:
        raise NonPositiveEntry("every row and column sum must be at least 1")
    if sum(rows) != sum(cols):
        raise MismatchedTotals(f"row total {sum(rows)} != column total {sum(cols)}")
    return Margins(rows, cols)


def _as_int(v) -> int:
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("margins must be integers")
    iv = int(v)
    if iv != v:
        raise TypeError(f"margin entry {v!r} is not integral")
    return iv


def as_table(entries, margins: Margins | None = None) -> np.ndarray:
    """Return ``entries`` as a read-only ``int64`` table.

    Raises :class:`NegativeEntry` for negative or non-integral entries and
    :class:`MarginMismatch` if ``margins`` is given and not realized.
    """
    arr = np.array(entries)
    if arr.ndim != 2:
        raise ShapeMismatch("a table must be a 2-d array")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise NegativeEntry("table entries must be integers")
    out = arr.astype(np.int64)
    if np.any(out < 0):
        raise NegativeEntry("table entries must be non-negative")
    if margins is not None:
        check_margins(out, margins)
    out.setflags(write=False)
    return out


def table_margins(table) -> Margins:
    t = np.asarray(table)
    return Margins(tuple(int(v) for v in t.sum(axis=1)), tuple(int(v) for v in t.sum(axis=0)))


def has_margins(table, margins: Margins) -> bool:
    t = np.asarray(table)
    if t.shape != margins.shape:
        return False
    return table_margins(t) == margins


def check_margins(table, margins: Margins) -> None:
    t = np.asarray(table)
    if t.shape != margins.shape:
        raise MarginMismatch(f"table shape {t.shape} != margins shape {margins.shape}")
    got = table_margins(t)
    if got != margins:
        raise MarginMismatch(f"table has {got}, expected {margins}")


@dataclass(frozen=True)
class EntrySet:
    """A deduplicated set of 0-based ``(i, j)`` positions in an ``m x n`` matrix."""

    pairs: tuple[tuple[int, int], ...]
    shape: tuple[int, int]

    def __post_init__(self):
        m, n = self.shape
        for i, j in self.pairs:
            if not (0 <= i < m and 0 <= j < n):
                raise IndexOutOfBounds(f"entry ({i + 1}, {j + 1}) outside a {m}x{n} matrix")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[int]], shape: tuple[int, int], one_based: bool = True):
        off = 1 if one_based else 0
        uniq = sorted({(int(i) - off, int(j) - off) for i, j in pairs})
        return cls(tuple(uniq), (int(shape[0]), int(shape[1])))

    @classmethod
    def block(cls, rows: range, cols: range, shape: tuple[int, int]) -> EntrySet:
        """Rectangular block; ``rows``/``cols`` are 0-based ranges."""
        return cls(tuple((i, j) for i in rows for j in cols), shape)

    @classmethod
    def everything(cls, shape: tuple[int, int]) -> EntrySet:
        return cls.block(range(shape[0]), range(shape[1]), shape)

    @classmethod
    def random_fraction(cls, fraction: float, shape: tuple[int, int], rng: np.random.Generator) -> EntrySet:
        """Uniformly random set with ``|S| = ceil(fraction * m * n)``."""
        m, n = shape
        size = min(m * n, max(1, math.ceil(fraction * m * n)))
        flat = np.sort(rng.choice(m * n, size=size, replace=False))
        return cls(tuple((int(k // n), int(k % n)) for k in flat), shape)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def rows(self) -> np.ndarray:
        return np.fromiter((i for i, _ in self.pairs), dtype=np.intp, count=len(self.pairs))

    @property
    def cols(self) -> np.ndarray:
        return np.fromiter((j for _, j in self.pairs), dtype=np.intp, count=len(self.pairs))

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        if self.pairs:
            out[self.rows, self.cols] = True
        return out


# -- scalar functions ---------------------------------------------------------

def g(x):
    """Elementwise ``(x+1) ln(x+1) - x ln x`` with ``g(0) = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    # ln(1+x) + x ln(1 + 1/x) avoids cancellation for large x
    out[pos] = np.log1p(xp) + xp * np.log1p(1.0 / xp)
    return out if out.ndim else float(out)


def g_value(matrix) -> float:
    x = np.asarray(matrix, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise NegativeEntry("g is defined for finite non-negative matrices only")
    return float(np.sum(g(x)))


def smoothness_delta(margins: Margins) -> float:
    """Largest ``delta <= 1`` for which the margins are delta-smooth."""
    N, m, n = margins.total, margins.m, margins.n
    ratios = [1.0, N / (m * n)]
    for r in (min(margins.rows), max(margins.rows)):
        ratios += [r * m / N, N / (r * m)]
    for c in (min(margins.cols), max(margins.cols)):
        ratios += [c * n / N, N / (c * n)]
    return min(ratios)


def sigma_S(matrix, s: EntrySet) -> float:
    a = np.asarray(matrix)
    _check_bounds(a, s)
    if not s.pairs:
        return 0
    return a[s.rows, s.cols].sum().item()


def nu_S(matrix, s: EntrySet) -> float:
    """Sum of squared entries over ``s``."""
    a = np.asarray(matrix, dtype=float)
    _check_bounds(a, s)
    if not s.pairs:
        return 0.0
    return float(np.sum(a[s.rows, s.cols] ** 2))


def _check_bounds(a: np.ndarray, s: EntrySet) -> None:
    m, n = a.shape
    if s.shape[0] > m or s.shape[1] > n:
        for i, j in s.pairs:
            if i >= m or j >= n:
                raise IndexOutOfBounds(f"entry ({i + 1}, {j + 1}) outside a {m}x{n} matrix")


def independence_table(margins: Margins) -> np.ndarray:
    r = np.asarray(margins.rows, dtype=float)
    c = np.asarray(margins.cols, dtype=float)
    return np.outer(r, c) / margins.total


def entropy_H(matrix, total: float) -> float:
    if total <= 0:
        raise NonPositiveTotal("total must be positive")
    x = np.asarray(matrix, dtype=float)
    if np.any(x < 0):
        raise NegativeEntry("entropy needs a non-negative matrix")
    xp = x[x > 0]
    return float(np.sum(xp / total * np.log(total / xp)))


def clone_margins(margins: Margins, k: int) -> Margins:
    """Replace each sum ``r`` by ``k`` copies of ``k*r`` (rows and columns alike)."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    rows = tuple(k * r for r in margins.rows for _ in range(k))
    cols = tuple(k * c for c in margins.cols for _ in range(k))
    return Margins(rows, cols)


def fisher_yates_log_mass(table, margins: Margins) -> float:
    """Natural log of the Fisher-Yates probability of ``table``."""
    t = np.asarray(table)
    check_margins(t, margins)
    lg = math.lgamma
    out = -lg(margins.total + 1)
    out += sum(lg(r + 1) for r in margins.rows)
    out += sum(lg(c + 1) for c in margins.cols)
    out -= sum(lg(int(d) + 1) for d in t.ravel())
    return out


# -- JSON formats -------------------------------------------------------------

def margins_to_dict(margins: Margins) -> dict:
    return {"rows": list(margins.rows), "cols": list(margins.cols)}


def margins_from_dict(obj: dict) -> Margins:
    try:
        return validate_margins(obj["rows"], obj["cols"])
    except KeyError as exc:
        raise ValueError(f"margins JSON is missing key {exc}") from None


def load_margins(path: str | Path) -> Margins:
    with open(path) as fh:
        return margins_from_dict(json.load(fh))


def parse_margins(text: str) -> Margins:
    """Parse inline margins such as ``"3,1/2,2"`` (rows, slash, columns)."""
    try:
        rows, cols = text.split("/")
        return validate_margins(
            [int(v) for v in rows.split(",") if v.strip()],
            [int(v) for v in cols.split(",") if v.strip()],
        )
    except ValueError as exc:
        if isinstance(exc, (MismatchedTotals, NonPositiveEntry)):
            raise
        raise ValueError(f"cannot parse inline margins {text!r}; expected 'r1,r2,.../c1,c2,...'") from None


def table_to_list(table) -> list[list[int]]:
    return [[int(v) for v in row] for row in np.asarray(table)]


def table_from_list(rows: Sequence[Sequence[int]], margins: Margins | None = None) -> np.ndarray:
    return as_table(rows, margins)


def entry_set_to_list(s: EntrySet) -> list[list[int]]:
    return [[i + 1, j + 1] for i, j in s.pairs]


def entry_set_from_list(pairs: Sequence[Sequence[int]], shape: tuple[int, int]) -> EntrySet:
    return EntrySet.from_pairs(pairs, shape, one_based=True)
