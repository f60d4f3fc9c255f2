"""Lattice rounding and the t-scaling map between table sets.

The integer matrices with zero row and column sums form a lattice with basis
``U_ij`` (``+1`` at ``(i, j)`` and ``(i+1, j+1)``, ``-1`` at ``(i+1, j)`` and
``(i, j+1)``). The coordinate of ``x`` along ``U_ij`` is the top-left partial
sum ``sum_{a<=i, b<=j} x_ab``, and second differences invert it. Rounding a
point ``x`` against an anchor floors its coordinates relative to the anchor.

The t-scaling map sends ``D`` in ``Sigma(R, C)`` to the rounding of
``D/t + B`` against ``D1``, where ``D1 = ceil(D0/t) + 2`` and
``B = D1 - D0/t`` for a fixed base table ``D0``. All arithmetic here is exact:
``t * (D/t + B - D1) = D - D0`` is an integer matrix, so coordinates are
integer partial sums floor-divided by ``t``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .counting import iter_tables, count_tables
from .errors import CapExceeded, MarginMismatch, NotInSubspace
from .model import EntrySet, Margins, as_table, check_margins, sigma_S, table_margins


def north_west_corner(margins: Margins) -> np.ndarray:
    """Greedy table filling each cell with as much as row and column still allow."""
    rows, cols = list(margins.rows), list(margins.cols)
    out = np.zeros(margins.shape, dtype=np.int64)
    i = j = 0
    while i < margins.m and j < margins.n:
        v = min(rows[i], cols[j])
        out[i, j] = v
        rows[i] -= v
        cols[j] -= v
        if rows[i] == 0:
            i += 1
        else:
            j += 1
    return as_table(out, margins)


def auto_t(margins: Margins) -> int:
    """``floor(N / (mn)^6)``, at least 1."""
    mn = margins.m * margins.n
    return max(1, margins.total // mn**6)


@dataclass(frozen=True)
class ScalingContext:
    t: int
    margins: Margins
    d0: np.ndarray
    d1: np.ndarray
    scaled_margins: Margins

    @property
    def b_times_t(self) -> np.ndarray:
        """``t * B`` as an integer matrix."""
        return self.t * self.d1 - self.d0

    @property
    def b(self) -> np.ndarray:
        """``B`` as an object array of fractions."""
        return _fractions(self.b_times_t, self.t)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "d0": self.d0.tolist(),
            "d1": self.d1.tolist(),
            "scaled_margins": {"rows": list(self.scaled_margins.rows), "cols": list(self.scaled_margins.cols)},
        }


def _fractions(num: np.ndarray, den: int) -> np.ndarray:
    out = np.empty(num.shape, dtype=object)
    for idx, v in np.ndenumerate(num):
        out[idx] = Fraction(int(v), den)
    return out


def scaling_context(margins: Margins, t: int, d0=None) -> ScalingContext:
    if t < 1:
        raise ValueError("t must be a positive integer")
    d0 = north_west_corner(margins) if d0 is None else as_table(d0, margins)
    # ceil(d0 / t) + 2 in integer arithmetic
    d1 = -(-d0 // t) + 2
    d1.setflags(write=False)
    return ScalingContext(int(t), margins, d0, d1, table_margins(d1))


def lattice_coords(x) -> np.ndarray:
    """Coordinates of a zero-margin matrix in the ``U_ij`` basis.

    Integer and :class:`~fractions.Fraction` input is checked exactly, float
    input to within ``1e-9``.
    """
    a = np.asarray(x)
    if a.ndim != 2:
        raise NotInSubspace("expected a 2-d matrix")
    row_s, col_s = a.sum(axis=1), a.sum(axis=0)
    if a.dtype.kind == "f":
        bad = np.any(np.abs(row_s) > 1e-9) or np.any(np.abs(col_s) > 1e-9)
    else:
        bad = any(v != 0 for v in row_s) or any(v != 0 for v in col_s)
    if bad:
        raise NotInSubspace("row and column sums must vanish")
    m, n = a.shape
    return np.cumsum(np.cumsum(a, axis=0), axis=1)[: m - 1, : n - 1]


def reconstruct_from_coords(c) -> np.ndarray:
    """Inverse of :func:`lattice_coords` via second differences."""
    c = np.asarray(c)
    m, n = c.shape[0] + 1, c.shape[1] + 1
    dtype = object if c.dtype == object else np.result_type(c.dtype, np.int64)
    P = np.zeros((m + 1, n + 1), dtype=dtype)
    if c.size:
        P[1:m, 1:n] = c
    return P[1:, 1:] - P[:-1, 1:] - P[1:, :-1] + P[:-1, :-1]


def _floor(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        out = np.empty(a.shape, dtype=np.int64)
        for idx, v in np.ndenumerate(a):
            out[idx] = math.floor(v)
        return out
    if a.dtype.kind in "iu":
        return a.astype(np.int64)
    return np.floor(a).astype(np.int64)


def round_to_lattice(x, anchor) -> np.ndarray:
    """The point ``y`` of ``anchor + lattice`` with ``x - y`` in the standard cell.

    ``x`` may hold integers or fractions; its margins must equal the
    anchor's exactly.
    """
    x = np.asarray(x)
    anchor = np.asarray(anchor, dtype=np.int64)
    if x.shape != anchor.shape:
        raise MarginMismatch("x and anchor differ in shape")
    diff = x - anchor
    if any(v != 0 for v in diff.sum(axis=1)) or any(v != 0 for v in diff.sum(axis=0)):
        raise MarginMismatch("x and anchor have different row or column sums")
    coords = _floor(lattice_coords(diff))
    return anchor + reconstruct_from_coords(coords)


def t_scale(ctx: ScalingContext, d) -> np.ndarray:
    """The image of table ``d`` under the t-scaling map."""
    d = np.asarray(d, dtype=np.int64)
    check_margins(d, ctx.margins)
    # t * (d/t + B - D1) = d - D0; its coordinates divided by t, floored
    coords = lattice_coords(d - ctx.d0) // ctx.t
    y = ctx.d1 + reconstruct_from_coords(coords)
    return as_table(y, ctx.scaled_margins)


def t_scale_rational(ctx: ScalingContext, d) -> np.ndarray:
    """Same map as :func:`t_scale`, evaluated with :class:`Fraction` arithmetic."""
    d = np.asarray(d, dtype=np.int64)
    check_margins(d, ctx.margins)
    x = _fractions(d, ctx.t) + ctx.b
    return as_table(round_to_lattice(x, ctx.d1), ctx.scaled_margins)


def context_bounds_hold(ctx: ScalingContext) -> dict[str, bool]:
    """Exact checks of ``2 <= b_ij < 3`` and the scaled-margin sandwich."""
    t = ctx.t
    bt = ctx.b_times_t
    m, n = ctx.margins.shape
    r = np.asarray(ctx.margins.rows)
    c = np.asarray(ctx.margins.cols)
    rp = np.asarray(ctx.scaled_margins.rows)
    cp = np.asarray(ctx.scaled_margins.cols)
    return {
        "b_in_[2,3)": bool(np.all((2 * t <= bt) & (bt < 3 * t))),
        "rows_sandwich": bool(np.all((r + 2 * n * t <= t * rp) & (t * rp <= r + 3 * n * t))),
        "cols_sandwich": bool(np.all((c + 2 * m * t <= t * cp) & (t * cp <= c + 3 * m * t))),
    }


def sigma_bounds_hold(ctx: ScalingContext, d, s: EntrySet) -> bool:
    """``sigma_S(D)/t <= sigma_S(T(D)) <= sigma_S(D)/t + 5|S|``, checked in integers."""
    y = t_scale(ctx, d)
    sd = int(sigma_S(d, s))
    sy = int(sigma_S(y, s))
    return sd <= ctx.t * sy <= sd + 5 * ctx.t * len(s)


def preimage_counts(ctx: ScalingContext, tables=None, cap: int = 100_000) -> Counter:
    """Number of preimages of each image table (keyed by nested tuples)."""
    if tables is None:
        total = count_tables(ctx.margins)
        if total > cap:
            raise CapExceeded(total, cap)
        tables = iter_tables(ctx.margins)
    return Counter(tuple(map(tuple, t_scale(ctx, d).tolist())) for d in tables)


def preimage_count_check(ctx: ScalingContext, y, cap: int = 100_000) -> int:
    """Number of tables mapped to ``y``; never more than ``t**((m-1)(n-1))``."""
    key = tuple(map(tuple, np.asarray(y, dtype=np.int64).tolist()))
    return preimage_counts(ctx, cap=cap)[key]


def preimage_limit(ctx: ScalingContext) -> int:
    m, n = ctx.margins.shape
    return ctx.t ** ((m - 1) * (n - 1))


def cell_entries_bounded(coords) -> bool:
    """Whether the cell point with coordinates ``coords`` (each in ``[0, 1)``) has entries in ``[-2, 2]``."""
    x = reconstruct_from_coords(np.asarray(coords, dtype=float))
    return bool(np.all((-2 <= x) & (x <= 2)))
