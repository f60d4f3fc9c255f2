"""Kernel selection: the compiled extension when importable, else ``_fallback``.

Set ``TYPICAL_TABLES_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

from . import _fallback

log = logging.getLogger(__name__)

try:
    if os.environ.get("TYPICAL_TABLES_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

NAME = "compiled" if _compiled is not None else "python"


def available() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def _pick(backend: str | None):
    name = backend or NAME
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


def scan_attempts(q, log_q, rows, cols, u, out, backend: str | None = None) -> int:
    return int(_pick(backend).scan_attempts(q, log_q, rows, cols, u, out))


def _count_limbs(rows, cols) -> int:
    # the count is at most the product over columns of the number of column vectors
    m = len(rows)
    bound = 1
    for c in cols:
        bound *= math.comb(int(c) + m - 1, m - 1)
    return bound.bit_length() // 64 + 1


def dp_counts(rows, cols, budget: int, backend: str | None = None) -> list[dict[tuple[int, ...], int]]:
    impl = _pick(backend)
    rows = [int(r) for r in rows]
    base = max(rows) + 1
    if impl is _fallback or base ** len(rows) >= 2**63:
        if impl is not _fallback:
            log.debug("state keys do not fit 64 bits; using the pure-Python DP")
        return _fallback.dp_counts(rows, cols, budget)
    limbs = _count_limbs(rows, cols)
    keys, counts = impl.dp_layers(sorted(rows), np.asarray(cols, dtype=np.int64), base, limbs, budget)
    powers = np.array([base**k for k in range(len(rows))], dtype=np.uint64)
    width = 8 * limbs
    out = []
    for k_arr, c_arr in zip(keys, counts):
        digits = ((k_arr[:, None] // powers[None, :]) % np.uint64(base)).astype(np.int64).tolist()
        raw = np.ascontiguousarray(c_arr).astype("<u8").tobytes()
        out.append(
            {
                tuple(d): int.from_bytes(raw[i * width:(i + 1) * width], "little")
                for i, d in enumerate(digits)
            }
        )
    return out
