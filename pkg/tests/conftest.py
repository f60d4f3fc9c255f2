from __future__ import annotations

import itertools

import numpy as np
import pytest

from typical_tables.model import validate_margins

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    number = props.get("criterion")
    if number is None:
        return
    entry = _criteria.setdefault(number, {"title": props.get("title", ""), "ok": True, "notes": []})
    entry["ok"] &= report.passed
    if "detail" in props:
        entry["notes"].append(props["detail"])


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        number, title = marker.args
        item.user_properties.append(("criterion", number))
        item.user_properties.append(("title", title))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        verdict = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {e['title']}" + (f"  [{notes}]" if notes else ""))


def random_smooth_margins(rng: np.random.Generator, m: int, n: int, hi: int = 200):
    """Random margins with every sum in ``[1, hi]`` and entries of ``Y`` of order one or more."""
    lo_row = max(1, hi // 4)
    rows = rng.integers(lo_row, hi + 1, size=m)
    N = int(rows.sum())
    base, extra = divmod(N, n)
    cols = np.full(n, base, dtype=np.int64)
    cols[:extra] += 1
    # random transfers keep the total and the bounds
    for _ in range(4 * n):
        a, b = rng.integers(0, n, size=2)
        step = int(rng.integers(0, max(1, base // 2) + 1))
        if a != b and cols[a] - step >= 1 and cols[b] + step <= hi:
            cols[a] -= step
            cols[b] += step
    return validate_margins(rows.tolist(), cols.tolist())


@pytest.fixture(scope="session")
def smooth_suite():
    """Fifty random instances with 2 <= m <= 20, m <= n <= 40, sums <= 200."""
    rng = np.random.default_rng(20240611)
    out = []
    for _ in range(50):
        m = int(rng.integers(2, 21))
        n = int(rng.integers(max(m, 2), 41))
        out.append(random_smooth_margins(rng, m, n))
    return out


def brute_tables(rows, cols):
    """All non-negative integer tables with the given margins, by exhaustive search."""
    m, n = len(rows), len(cols)
    cap = max(max(rows), max(cols))
    for flat in itertools.product(range(cap + 1), repeat=m * n):
        a = np.array(flat).reshape(m, n)
        if tuple(a.sum(1)) == tuple(rows) and tuple(a.sum(0)) == tuple(cols):
            yield a
