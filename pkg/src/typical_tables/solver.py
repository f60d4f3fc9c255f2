"""The typical table via its convex dual.

The typical table ``Z`` maximizes ``g(X)`` over the transportation polytope.
It is recovered from the minimizer ``(s, t)`` of

    G(s, t) = sum_i r_i s_i + sum_j c_j t_j - sum_ij ln(1 - exp(-s_i - t_j))

through ``z_ij = 1 / (exp(s_i + t_j) - 1)``, and ``exp(g(Z))`` is the minimum
value ``rho(R, C)`` of ``exp(G)``, an upper bound on the number of tables.

The minimization alternates exact block updates: with ``t`` fixed every
``s_i`` solves the monotone equation ``sum_j z(s_i + t_j) = r_i`` (and the
same for ``t`` with ``s`` fixed), so each sweep is a pair of vectorized
one-dimensional root solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import AlphaTooSmall, DomainViolation, NoConvergence
from .model import Margins, g_value, smoothness_delta

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class DualVariables:
    s: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        t = np.array(self.t, dtype=float)
        s.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    def sums(self) -> np.ndarray:
        return self.s[:, None] + self.t[None, :]

    def shifted(self, c: float) -> DualVariables:
        """Same point of the dual up to the gauge ``(s + c, t - c)``."""
        return DualVariables(self.s + c, self.t - c)


@dataclass(frozen=True)
class TypicalTable:
    z: np.ndarray
    duals: DualVariables
    margins: Margins
    residual: float
    g_of_z: float
    sweeps: int = 0
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape


def z_from_sums(x: np.ndarray) -> np.ndarray:
    """Entrywise ``1/(exp(x) - 1)`` for ``x > 0``, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > 1.0
    e = np.exp(-x[big])
    out[big] = e / (1.0 - e)
    out[~big] = 1.0 / np.expm1(x[~big])
    return out


def dual_objective(duals: DualVariables, margins: Margins) -> float:
    x = duals.sums()
    if np.any(x <= 0):
        raise DomainViolation("G is defined only where s_i + t_j > 0 for all i, j")
    r = np.asarray(margins.rows, dtype=float)
    c = np.asarray(margins.cols, dtype=float)
    return float(r @ duals.s + c @ duals.t - np.sum(np.log(-np.expm1(-x))))


def _solve_block(x0: np.ndarray, other: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Solve ``sum_k z(x_i + other_k) = target_i`` for every ``i`` at once.

    The left side is convex and strictly decreasing in ``x_i`` on
    ``(-min(other), inf)``. Newton steps are kept inside a shrinking bracket;
    a step that leaves it is replaced by bisection (or by doubling the
    distance to the pole while no upper end is known).
    """
    pole = -other.min()
    lo = np.full_like(x0, pole)
    hi = np.full_like(x0, np.inf)
    x = np.where(x0 > pole, x0, pole + 1.0)
    for _ in range(200):
        z = z_from_sums(x[:, None] + other[None, :])
        phi = z.sum(axis=1) - target
        lo = np.where(phi > 0, np.maximum(lo, x), lo)
        hi = np.where(phi < 0, np.minimum(hi, x), hi)
        slope = (z * (z + 1.0)).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = phi / slope
        xn = x + step
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        if np.any(bad):
            grow = lo + 2.0 * np.maximum(x - lo, 1.0)
            mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), grow)
            xn = np.where(bad, mid, xn)
        done = np.abs(xn - x) <= 4e-16 * np.maximum(1.0, np.abs(x))
        x = xn
        if np.all(done | (phi == 0)):
            break
    return x


def _initial_duals(margins: Margins) -> DualVariables:
    m, n = margins.shape
    r = np.asarray(margins.rows, dtype=float)
    c = np.asarray(margins.cols, dtype=float)
    return DualVariables(0.5 * np.log1p(n / r), 0.5 * np.log1p(m / c))


def margin_residual(z: np.ndarray, margins: Margins) -> float:
    r = np.asarray(margins.rows, dtype=float)
    c = np.asarray(margins.cols, dtype=float)
    row_err = np.abs(z.sum(axis=1) - r) / np.maximum(1.0, r)
    col_err = np.abs(z.sum(axis=0) - c) / np.maximum(1.0, c)
    return float(max(row_err.max(), col_err.max()))


def _package(margins, s, t, sweeps, trace) -> TypicalTable:
    duals = DualVariables(s, t)
    z = z_from_sums(duals.sums())
    z.setflags(write=False)
    return TypicalTable(
        z=z,
        duals=duals,
        margins=margins,
        residual=margin_residual(z, margins),
        g_of_z=g_value(z),
        sweeps=sweeps,
        objective_trace=tuple(trace),
    )


def solve_typical(
    margins: Margins,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: DualVariables | None = None,
    callback: Callable[[int, DualVariables, float], None] | None = None,
) -> TypicalTable:
    """Compute the typical table of ``margins``.

    Parameters
    ----------
    tol : float
        Stop once every row and column sum of ``Z`` is within
        ``tol * max(1, target)`` of its target.
    max_iter : int
        Maximum number of sweeps (one row block and one column block each).
    init : DualVariables, optional
        Starting point; must satisfy ``s_i + t_j > 0``.
    callback : callable, optional
        Called as ``callback(sweep, duals, G)`` after every sweep.

    Raises
    ------
    NoConvergence
        If ``max_iter`` sweeps do not reach ``tol``; ``exc.best`` is the
        last iterate packaged as a :class:`TypicalTable`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = np.asarray(margins.rows, dtype=float)
    c = np.asarray(margins.cols, dtype=float)
    start = init if init is not None else _initial_duals(margins)
    if np.any(start.sums() <= 0):
        raise DomainViolation("initial duals must satisfy s_i + t_j > 0")
    s = np.array(start.s, dtype=float)
    t = np.array(start.t, dtype=float)
    trace = [dual_objective(DualVariables(s, t), margins)]
    residual = math.inf
    for sweep in range(1, max_iter + 1):
        s = _solve_block(s, t, r)
        t = _solve_block(t, s, c)
        shift = 0.5 * (s.min() - t.min())
        s -= shift
        t += shift
        duals = DualVariables(s, t)
        obj = dual_objective(duals, margins)
        trace.append(obj)
        if callback is not None:
            callback(sweep, duals, obj)
        residual = margin_residual(z_from_sums(duals.sums()), margins)
        if residual <= tol:
            log.debug("typical table converged in %d sweeps (residual %.3e)", sweep, residual)
            return _package(margins, s, t, sweep, trace)
    raise NoConvergence(max_iter, _package(margins, s, t, max_iter, trace), residual)


def log_rho(tt: TypicalTable) -> float:
    """``ln rho(R, C) = g(Z)``."""
    return tt.g_of_z


class CountBounds(NamedTuple):
    log_upper: float
    lower_note: str


def count_bounds(tt: TypicalTable) -> CountBounds:
    """Bounds on ``ln |Sigma(R, C)|``.

    Only the upper bound ``g(Z)`` is numeric; the lower bound involves an
    unspecified absolute constant and is returned as a formula.
    """
    m, n = tt.shape
    N = tt.margins.total
    note = f"ln|Sigma| >= {tt.g_of_z!r} - gamma*{m + n}*ln({N}) for an absolute constant gamma"
    return CountBounds(tt.g_of_z, note)


def optimality_multipliers(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares fit of ``ln((z+1)/z) = lambda_i + mu_j``.

    Returns ``(lambda, mu, max_abs_residual)`` with the gauge fixed by
    ``lambda_0 = L_00 / 2``.
    """
    L = np.log1p(1.0 / np.asarray(z, dtype=float))
    row_mean = L.mean(axis=1)
    col_mean = L.mean(axis=0)
    grand = L.mean()
    fitted = row_mean[:, None] + col_mean[None, :] - grand
    shift = row_mean[0] - 0.5 * L[0, 0]
    lam = row_mean - shift
    mu = col_mean - grand + shift
    return lam, mu, float(np.max(np.abs(L - fitted)))


def check_optimality(tt: TypicalTable | np.ndarray) -> float:
    z = tt.z if isinstance(tt, TypicalTable) else np.asarray(tt, dtype=float)
    return optimality_multipliers(z)[2]


class EntryLowerBounds(NamedTuple):
    rows: float
    cols: float
    smooth: float


def entry_lower_bounds(margins: Margins) -> EntryLowerBounds:
    """Lower bounds valid for every entry of the typical table."""
    m, n, N = margins.m, margins.n, margins.total
    r_lo, r_hi = min(margins.rows), max(margins.rows)
    c_lo, c_hi = min(margins.cols), max(margins.cols)
    delta = smoothness_delta(margins)
    return EntryLowerBounds(
        rows=r_lo * c_lo / (r_hi * m),
        cols=c_lo * r_lo / (c_hi * n),
        smooth=delta**3 * N / (m * n),
    )


def large_entry_rows(tt: TypicalTable, alpha: float) -> frozenset[int]:
    """Rows (0-based) holding an entry of at least ``alpha * N / (m n)``.

    For delta-smooth margins the result has at most ``4m / (delta alpha)``
    elements.
    """
    m, n = tt.shape
    N = tt.margins.total
    if alpha < 2 * m * n / N:
        raise AlphaTooSmall(f"alpha={alpha} < 2mn/N={2 * m * n / N}")
    threshold = alpha * N / (m * n)
    return frozenset(int(i) for i in np.flatnonzero((tt.z >= threshold).any(axis=1)))


def large_entry_bound(margins: Margins, alpha: float) -> float:
    return 4 * margins.m / (smoothness_delta(margins) * alpha)
