"""Pure-Python versions of the compiled kernels.

Same contracts as ``_kernels``; used when the extension is not built or when
``TYPICAL_TABLES_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BudgetExceeded


def scan_attempts(q, log_q, rows, cols, u, out) -> int:
    m, n = q.shape
    U = np.asarray(u).reshape(-1, m, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(U > q, 0.0, np.floor(np.log(U) / log_q))
    ok = (K.sum(axis=2) == rows).all(axis=1) & (K.sum(axis=1) == cols).all(axis=1)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return -1
    a = int(hits[0])
    out[...] = K[a].astype(np.int64)
    return a


def bounded_compositions(total: int, bounds) -> list[tuple[int, ...]]:
    """All ``d`` with ``sum(d) == total`` and ``0 <= d[k] <= bounds[k]``, lexicographically."""
    m = len(bounds)
    suffix = [0] * (m + 1)
    for k in range(m - 1, -1, -1):
        suffix[k] = suffix[k + 1] + bounds[k]
    if total > suffix[0] or total < 0:
        return []
    out = []
    d = [0] * m

    def rec(k, rem):
        if k == m - 1:
            d[k] = rem
            out.append(tuple(d))
            return
        for v in range(max(0, rem - suffix[k + 1]), min(bounds[k], rem) + 1):
            d[k] = v
            rec(k + 1, rem - v)

    rec(0, total)
    return out


def _successors(rho, c):
    for d in bounded_compositions(c, rho):
        yield tuple(sorted(a - b for a, b in zip(rho, d)))


WORK_FACTOR = 20


def check_work(n_states: int, m: int, c: int, budget: int) -> None:
    """Refuse a column whose transition bound exceeds ``WORK_FACTOR * budget``.

    Each state has at most ``C(c + m - 1, m - 1)`` successors, so this stops
    hopeless instances before the expansion starts.
    """
    work = n_states * math.comb(int(c) + m - 1, m - 1)
    if work > WORK_FACTOR * budget:
        raise BudgetExceeded(work // WORK_FACTOR, budget)


def dp_counts(rows, cols, budget: int) -> list[dict[tuple[int, ...], int]]:
    """Exact counts keyed by sorted residual row vectors, one dict per column index.

    ``result[j][v]`` is the number of ways to fill columns ``j..n-1`` when the
    rows still need the residuals ``v`` (any order, stored ascending).
    """
    n = len(cols)
    layers = [{tuple(sorted(int(r) for r in rows))}]
    total = 1
    for j in range(n):
        check_work(len(layers[j]), len(rows), cols[j], budget)
        nxt = set()
        for rho in layers[j]:
            nxt.update(_successors(rho, cols[j]))
        total += len(nxt)
        if total > budget:
            raise BudgetExceeded(total, budget)
        layers.append(nxt)
    counts = [dict() for _ in range(n + 1)]
    counts[n] = {rho: 1 for rho in layers[n]}
    for j in range(n - 1, -1, -1):
        below = counts[j + 1]
        counts[j] = {rho: sum(below[v] for v in _successors(rho, cols[j])) for rho in layers[j]}
    return counts
