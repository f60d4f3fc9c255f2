"""Geometric random matrices, the rejection sampler, and tail bounds.

A matrix of independent geometric entries with means ``Z`` (the typical
table) has the same probability ``exp(-g(Z))`` at every table with margins
``(R, C)``, so conditioning on the margins gives the uniform distribution.
:func:`rejection_uniform_sample` draws such matrices until one lands in
``Sigma(R, C)``.

Entries are drawn by inversion from one uniform ``u`` in ``(0, 1]`` each:
``0`` if ``u > q`` and ``floor(ln u / ln q)`` otherwise, with
``q = z / (1 + z)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .counting import DPTable, build_dp, dp_uniform_sample
from .errors import AttemptsExhausted, DomainViolation, MarginMismatch, ShapeMismatch
from .model import has_margins
from .rng import child_generator
from .solver import TypicalTable

log = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 10**8
PROGRESS_EVERY = 10**6
_MIN_BATCH = 256
_MAX_BATCH = 1 << 16


@dataclass(frozen=True)
class GeometricMatrixModel:
    z: np.ndarray
    log_q: np.ndarray
    log_p: np.ndarray

    @classmethod
    def from_matrix(cls, z) -> GeometricMatrixModel:
        z = np.array(z, dtype=float)
        if z.ndim != 2 or np.any(z < 0) or not np.all(np.isfinite(z)):
            raise ValueError("means must form a finite non-negative matrix")
        with np.errstate(divide="ignore"):
            log_q = np.log(z) - np.log1p(z)
        log_p = -np.log1p(z)
        for a in (z, log_q, log_p):
            a.setflags(write=False)
        return cls(z, log_q, log_p)

    @classmethod
    def from_typical(cls, tt: TypicalTable) -> GeometricMatrixModel:
        return cls.from_matrix(tt.z)

    @property
    def q(self) -> np.ndarray:
        return self.z / (1.0 + self.z)

    @property
    def p(self) -> np.ndarray:
        return 1.0 / (1.0 + self.z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape


def _invert(u: np.ndarray, q: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(u > q, 0.0, np.floor(np.log(u) / log_q))
    return k.astype(np.int64)


def geometric_matrix_sample(model: GeometricMatrixModel, rng: np.random.Generator, size: int | None = None):
    """One ``m x n`` draw, or ``size`` draws stacked along axis 0."""
    shape = model.shape if size is None else (size, *model.shape)
    u = 1.0 - rng.random(shape)
    return _invert(u, model.q, model.log_q)


def log_mass(model: GeometricMatrixModel, d) -> float:
    """``ln Pr{X = d}`` for the geometric matrix ``X``."""
    d = np.asarray(d)
    if d.shape != model.shape:
        raise ShapeMismatch(f"table shape {d.shape} != model shape {model.shape}")
    if np.any(d < 0):
        return -math.inf
    # 0 * ln q is 0 even where q = 0
    log_q = np.where(d > 0, model.log_q, 0.0)
    return float(np.sum(model.log_p) + np.sum(d * log_q))


def verify_theorem_1_7(tt: TypicalTable, tables) -> float:
    """Largest ``|ln Pr{X = D} + g(Z)|`` over ``tables``.

    The probability of every table with the margins of ``tt`` should equal
    ``exp(-g(Z))``.
    """
    model = GeometricMatrixModel.from_typical(tt)
    worst = 0.0
    for d in tables:
        if not has_margins(d, tt.margins):
            raise MarginMismatch(f"table {np.asarray(d).tolist()} does not have margins {tt.margins}")
        worst = max(worst, abs(log_mass(model, d) + tt.g_of_z))
    return worst


@dataclass(frozen=True)
class _RejectionSetup:
    q: np.ndarray
    log_q: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def from_typical(cls, tt: TypicalTable) -> _RejectionSetup:
        model = GeometricMatrixModel.from_typical(tt)
        return cls(
            np.ascontiguousarray(model.q),
            np.ascontiguousarray(model.log_q),
            tt.margins.row_array(),
            tt.margins.col_array(),
            model.shape,
        )


def _rejection_draw(setup: _RejectionSetup, rng, max_attempts: int, backend: str | None):
    m, n = setup.shape
    out = np.zeros((m, n), dtype=np.int64)
    used = 0
    batch = _MIN_BATCH
    next_report = PROGRESS_EVERY
    while used < max_attempts:
        size = min(batch, max_attempts - used)
        u = 1.0 - rng.random(size * m * n)
        hit = _backend.scan_attempts(setup.q, setup.log_q, setup.rows, setup.cols, u, out, backend=backend)
        if hit >= 0:
            out.setflags(write=False)
            return out, used + hit + 1
        used += size
        if used >= next_report:
            log.info("rejection sampler: %d attempts without acceptance", used)
            next_report += PROGRESS_EVERY
        batch = min(2 * batch, _MAX_BATCH)
    raise AttemptsExhausted(max_attempts)


def rejection_uniform_sample(
    tt: TypicalTable,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    backend: str | None = None,
) -> tuple[np.ndarray, int]:
    """Draw geometric matrices with means ``Z`` until one has margins ``(R, C)``.

    Returns the accepted table and the number of attempts it took (the
    accepted one included). Uniforms are consumed in attempt order from
    ``rng``, so the result does not depend on the internal batch size.
    """
    return _rejection_draw(_RejectionSetup.from_typical(tt), rng, max_attempts, backend)


@dataclass(frozen=True)
class AcceptanceStats:
    attempts: int
    accepts: int

    @property
    def rate(self) -> float:
        return self.accepts / self.attempts if self.attempts else 0.0

    @property
    def stderr(self) -> float:
        if not self.attempts:
            return 0.0
        r = self.rate
        return math.sqrt(r * (1.0 - r) / self.attempts)

    def __add__(self, other: AcceptanceStats) -> AcceptanceStats:
        return AcceptanceStats(self.attempts + other.attempts, self.accepts + other.accepts)

    def to_dict(self) -> dict:
        return {"attempts": self.attempts, "accepts": self.accepts, "rate": self.rate, "stderr": self.stderr}


def _rejection_chunk(tt, seed, indices, max_attempts, backend):
    setup = _RejectionSetup.from_typical(tt)
    tables, attempts = [], 0
    for k in indices:
        table, used = _rejection_draw(setup, child_generator(seed, k), max_attempts, backend)
        tables.append(table)
        attempts += used
    return tables, AcceptanceStats(attempts, len(tables))


def _dp_chunk(dp, seed, indices):
    return [dp_uniform_sample(dp, child_generator(seed, k)) for k in indices]


def _split(count: int, workers: int) -> list[range]:
    step = -(-count // workers) if count else 1
    return [range(a, min(a + step, count)) for a in range(0, count, step)]


def sample_rejection(
    tt: TypicalTable,
    count: int,
    seed: int,
    workers: int = 1,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    backend: str | None = None,
) -> tuple[list[np.ndarray], AcceptanceStats]:
    """``count`` uniform tables; draw ``k`` uses child stream ``k`` of ``seed``."""
    chunks = _split(count, max(1, workers))
    if workers <= 1 or len(chunks) <= 1:
        results = [_rejection_chunk(tt, seed, r, max_attempts, backend) for r in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_rejection_chunk, tt, seed, r, max_attempts, backend) for r in chunks]
            results = [f.result() for f in futures]
    tables = [t for part, _ in results for t in part]
    stats = sum((s for _, s in results), AcceptanceStats(0, 0))
    return tables, stats


def sample_dp(dp: DPTable, count: int, seed: int, workers: int = 1) -> list[np.ndarray]:
    """``count`` exactly uniform tables; draw ``k`` uses child stream ``k`` of ``seed``."""
    chunks = _split(count, max(1, workers))
    if workers <= 1 or len(chunks) <= 1:
        return _dp_chunk(dp, seed, range(count))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_dp_chunk, dp, seed, r) for r in chunks]
        return [t for f in futures for t in f.result()]


def sample_uniform(margins_or_tt, count: int, seed: int, method: str = "dp", **kwargs):
    """Convenience front end over :func:`sample_dp` and :func:`sample_rejection`."""
    if method == "dp":
        margins = margins_or_tt.margins if isinstance(margins_or_tt, TypicalTable) else margins_or_tt
        return sample_dp(build_dp(margins, kwargs.get("budget")), count, seed, kwargs.get("workers", 1))
    if method == "rejection":
        return sample_rejection(margins_or_tt, count, seed, **kwargs)[0]
    raise ValueError(f"unknown method {method!r}")


# -- tail bounds --------------------------------------------------------------

def tail_bound_lower(sigma_z: float, nu_z: float, a: float, t: float) -> float:
    """Bound on ``Pr{sigma_S(X) <= sigma_S(Z) - a}``, valid for ``0 < t <= 2``."""
    if not 0 < t <= 2:
        raise DomainViolation(f"t={t} outside (0, 2]")
    if sigma_z < 0 or nu_z < 0:
        raise DomainViolation("sigma and nu must be non-negative")
    return math.exp(-t * a + 0.5 * t * t * (sigma_z + nu_z))


def tail_bound_upper(sigma_z: float, nu_z: float, a: float, t: float, z_max_on_S: float) -> float:
    """Bound on ``Pr{sigma_S(X) >= sigma_S(Z) + a}``.

    Valid for ``0 < t <= min(1/3, 1/(2 z_max))`` where ``z_max`` is the
    largest mean on ``S``.
    """
    t_max = 1.0 / 3.0 if z_max_on_S <= 0 else min(1.0 / 3.0, 1.0 / (2.0 * z_max_on_S))
    if not 0 < t <= t_max:
        raise DomainViolation(f"t={t} outside (0, {t_max}]")
    if sigma_z < 0 or nu_z < 0:
        raise DomainViolation("sigma and nu must be non-negative")
    return math.exp(-t * a + 2.0 * t * t * (sigma_z + nu_z))


def concentration_bound_cor32(delta: float, alpha: float, S_size: int, eps: float, side: str) -> float:
    """Relative-deviation bound for ``sigma_S(X)`` when ``z_ij <= alpha N/(mn)`` on ``S``."""
    if not 0 < eps < 1:
        raise DomainViolation(f"eps={eps} outside (0, 1)")
    if alpha < 1:
        raise DomainViolation(f"alpha={alpha} < 1")
    if not 0 < delta <= 1:
        raise DomainViolation(f"delta={delta} outside (0, 1]")
    if side == "lower":
        denom = 2.0 + 2.0 * delta * alpha
    elif side == "upper":
        denom = 8.0 + 8.0 * delta * alpha
    else:
        raise ValueError("side must be 'lower' or 'upper'")
    return math.exp(-(eps**2) * delta**4 * S_size / denom)
