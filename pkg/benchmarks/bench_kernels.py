"""Compiled vs pure-Python kernels on the count DP and the rejection scan.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from typical_tables import _backend
from typical_tables.model import validate_margins
from typical_tables.sampling import sample_rejection
from typical_tables.solver import solve_typical

DP_CASES = [
    ((5, 7, 3), (4, 4, 3, 4)),
    ((6,) * 4, (4,) * 6),
    ((20,) * 5, (5,) * 20),
    ((40,) * 5, (5,) * 40),
]
REJECTION_CASES = [((1, 1), (1, 1)), ((2, 2), (2, 2)), ((1, 1, 1), (1, 1, 1))]


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--draws", type=int, default=5000)
    ap.add_argument("--skip-large", action="store_true", help="leave out the 5x40 DP case")
    args = ap.parse_args()
    backends = _backend.available()
    print(f"backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled kernels unavailable; nothing to compare")
        return

    print("\ncount DP (seconds, best of repeats)")
    print(f"{'margins':<34}{'python':>10}{'compiled':>10}{'speedup':>9}")
    for rows, cols in DP_CASES:
        if args.skip_large and len(cols) > 20:
            continue
        res = {}
        for b in ("python", "compiled"):
            rep = 1 if (b == "python" and len(cols) > 20) else args.repeat
            res[b] = best_of(lambda: _backend.dp_counts(rows, cols, 10**8, backend=b), rep)
        label = f"{len(rows)}x{len(cols)} r={rows[0]}.. c={cols[0]}.."
        print(f"{label:<34}{res['python']:>10.3f}{res['compiled']:>10.3f}{res['python'] / res['compiled']:>8.1f}x")

    print(f"\nrejection sampler, {args.draws} accepted tables (seconds)")
    print(f"{'margins':<34}{'python':>10}{'compiled':>10}{'speedup':>9}")
    for rows, cols in REJECTION_CASES:
        tt = solve_typical(validate_margins(rows, cols))
        res = {}
        out = {}
        for b in ("python", "compiled"):
            res[b] = best_of(lambda: out.__setitem__(b, sample_rejection(tt, args.draws, 1, backend=b)), args.repeat)
        same = all(np.array_equal(x, y) for x, y in zip(out["python"][0], out["compiled"][0]))
        label = f"{rows}/{cols}" + ("" if same else " MISMATCH")
        print(f"{label:<34}{res['python']:>10.3f}{res['compiled']:>10.3f}{res['python'] / res['compiled']:>8.1f}x")


if __name__ == "__main__":
    main()
