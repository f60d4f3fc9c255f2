"""Acceptance checks, one or more tests per numbered criterion.

Run ``pytest tests/test_acceptance.py -v`` to get a per-criterion PASS/FAIL
summary at the end of the terminal output.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from typical_tables.cli import main
from typical_tables.counting import build_dp, count_tables, enumerate_tables
from typical_tables.model import EntrySet, clone_margins, g_value, nu_S, sigma_S, smoothness_delta, validate_margins
from typical_tables.rng import generator
from typical_tables.sampling import (
    GeometricMatrixModel,
    concentration_bound_cor32,
    geometric_matrix_sample,
    log_mass,
    sample_dp,
    sample_rejection,
    tail_bound_lower,
    tail_bound_upper,
)
from typical_tables.scaling import (
    context_bounds_hold,
    preimage_counts,
    preimage_limit,
    scaling_context,
    sigma_bounds_hold,
    t_scale,
)
from typical_tables.solver import (
    check_optimality,
    entry_lower_bounds,
    large_entry_bound,
    large_entry_rows,
    log_rho,
    solve_typical,
)

SMALL = {
    "(1,1)^2": ((1, 1), (1, 1)),
    "(2,2)^2": ((2, 2), (2, 2)),
    "(1,1,1)^2": ((1, 1, 1), (1, 1, 1)),
    "(2,1)/(1,1,1)": ((2, 1), (1, 1, 1)),
    "(3,2,1)/(2,2,2)": ((3, 2, 1), (2, 2, 2)),
}


def small(name):
    return validate_margins(*SMALL[name])


def table_index(tables):
    return {t.tobytes(): k for k, t in enumerate(tables)}


def frequencies(draws, index):
    freq = np.zeros(len(index), dtype=np.int64)
    for d in draws:
        freq[index[np.ascontiguousarray(d, dtype=np.int64).tobytes()]] += 1
    return freq


# -- 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1, "solver residual and optimality on 50 smooth instances, < 5 s")
def test_solver_suite(smooth_suite, record_property):
    start = time.perf_counter()
    solved = [solve_typical(mg) for mg in smooth_suite]
    elapsed = time.perf_counter() - start
    worst_res = max(tt.residual for tt in solved)
    worst_opt = max(check_optimality(tt) for tt in solved)
    record_property("detail", f"max residual {worst_res:.1e}, max optimality {worst_opt:.1e}, {elapsed:.2f} s")
    assert worst_res <= 1e-10
    assert worst_opt <= 1e-6
    assert elapsed < 5.0


# -- 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2, "geometric-matrix mass is constant and equals -g(Z) on enumerable instances")
@pytest.mark.parametrize("name", list(SMALL))
def test_mass_constancy(name, record_property):
    tt = solve_typical(small(name))
    model = GeometricMatrixModel.from_typical(tt)
    masses = np.array([log_mass(model, d) for d in enumerate_tables(tt.margins)])
    spread = float(masses.max() - masses.min())
    g_z = g_value(tt.z)
    rel = float(np.max(np.abs(masses + g_z)) / abs(g_z))
    record_property("detail", f"{name}: spread {spread:.1e}, rel {rel:.1e}")
    assert spread <= 1e-10
    assert rel <= 1e-8


# -- 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3, "rho bounds the number of tables")
@pytest.mark.parametrize("name", list(SMALL))
def test_rho_upper_bound(name):
    mg = small(name)
    assert math.log(count_tables(mg)) <= log_rho(solve_typical(mg)) + 1e-9


@pytest.mark.criterion(3, "rho bounds the number of tables")
def test_rho_reference_values(record_property):
    r11 = log_rho(solve_typical(small("(1,1)^2")))
    r22 = log_rho(solve_typical(small("(2,2)^2")))
    record_property("detail", f"rho (1,1)^2 = {math.exp(r11):.6f}, (2,2)^2 = {math.exp(r22):.6f}")
    assert r11 == pytest.approx(math.log(729 / 16), abs=1e-9)
    assert r22 == pytest.approx(math.log(256), abs=1e-9)
    assert math.log(2) < r11 and math.log(3) < r22


# -- 4 ------------------------------------------------------------------------

SAMPLER_DRAWS = 10**5
_sampler_clock = {"elapsed": 0.0}


@pytest.mark.criterion(4, "rejection and DP samplers are uniform; acceptance rate; < 60 s")
@pytest.mark.parametrize("method", ["rejection", "dp"])
@pytest.mark.parametrize("name", ["(2,2)^2", "(1,1,1)^2"])
def test_sampler_chi_square(name, method, record_property):
    mg = small(name)
    index = table_index(enumerate_tables(mg))
    start = time.perf_counter()
    if method == "dp":
        draws = sample_dp(build_dp(mg), SAMPLER_DRAWS, seed=41)
    else:
        draws, _ = sample_rejection(solve_typical(mg), SAMPLER_DRAWS, seed=41)
    _sampler_clock["elapsed"] += time.perf_counter() - start
    freq = frequencies(draws, index)
    p = chisquare(freq).pvalue
    record_property("detail", f"{name} {method}: p={p:.3f}")
    assert freq.sum() == SAMPLER_DRAWS
    assert p > 0.001


@pytest.mark.criterion(4, "rejection and DP samplers are uniform; acceptance rate; < 60 s")
def test_acceptance_rate(record_property):
    tt = solve_typical(small("(1,1)^2"))
    predicted = 2 * math.exp(-tt.g_of_z)
    assert predicted == pytest.approx(32 / 729, rel=1e-12)

    # fixed number of attempts: binomial count of margin hits
    attempts = 10**6
    x = geometric_matrix_sample(GeometricMatrixModel.from_typical(tt), generator(8), size=attempts)
    hits = int(np.sum(np.all(x.sum(axis=2) == 1, axis=1) & np.all(x.sum(axis=1) == 1, axis=1)))
    se = math.sqrt(predicted * (1 - predicted) / attempts)
    z_fixed = (hits / attempts - predicted) / se

    start = time.perf_counter()
    _, stats = sample_rejection(tt, 5000, seed=9)
    _sampler_clock["elapsed"] += time.perf_counter() - start
    z_sampler = (stats.rate - predicted) / math.sqrt(predicted * (1 - predicted) / stats.attempts)
    record_property("detail", f"rate z-scores {z_fixed:+.2f} (fixed), {z_sampler:+.2f} (sampler)")
    assert abs(z_fixed) <= 4
    assert abs(z_sampler) <= 4


@pytest.mark.criterion(4, "rejection and DP samplers are uniform; acceptance rate; < 60 s")
def test_sampler_runtime(record_property):
    record_property("detail", f"sampling time {_sampler_clock['elapsed']:.1f} s")
    assert 0 < _sampler_clock["elapsed"] < 60


# -- 5 ------------------------------------------------------------------------

TAIL_DRAWS = 10**5


@pytest.fixture(scope="module")
def tail_setup():
    tt = solve_typical(validate_margins((10,) * 5, (10,) * 5))
    s = EntrySet.everything((5, 5))
    model = GeometricMatrixModel.from_typical(tt)
    x = geometric_matrix_sample(model, generator(123), size=TAIL_DRAWS)
    sig = x[:, s.rows, s.cols].sum(axis=1).astype(float)
    return tt, s, sig


@pytest.mark.criterion(5, "tail bounds dominate empirical tails; variance matches sigma + nu")
def test_tail_bounds(tail_setup, record_property):
    tt, s, sig = tail_setup
    np.testing.assert_allclose(tt.z, 2.0, rtol=1e-12)
    sz, nz = sigma_S(tt.z, s), nu_S(tt.z, s)
    z_max = float(tt.z.max())
    t_upper_max = min(1 / 3, 1 / (2 * z_max))
    a_grid = [5.0, 10.0, 20.0, 30.0, 45.0]
    t_lower = [0.05, 0.1, 0.2, 0.5, 2.0]
    t_upper = [f * t_upper_max for f in (0.05, 0.1, 0.25, 0.5, 1.0)]
    worst = -math.inf
    for a in a_grid:
        low = float(np.mean(sig <= sz - a))
        high = float(np.mean(sig >= sz + a))
        for t in t_lower:
            bound = tail_bound_lower(sz, nz, a, t)
            worst = max(worst, low - bound)
            assert low <= bound, (a, t, low, bound)
        for t in t_upper:
            bound = tail_bound_upper(sz, nz, a, t, z_max)
            worst = max(worst, high - bound)
            assert high <= bound, (a, t, high, bound)
    record_property("detail", f"max(freq - bound) = {worst:.3f}")


@pytest.mark.criterion(5, "tail bounds dominate empirical tails; variance matches sigma + nu")
def test_tail_variance(tail_setup, record_property):
    tt, s, sig = tail_setup
    target = sigma_S(tt.z, s) + nu_S(tt.z, s)
    assert target == pytest.approx(150.0)
    centered = sig - sig.mean()
    var = float(np.mean(centered**2)) * TAIL_DRAWS / (TAIL_DRAWS - 1)
    mu4 = float(np.mean(centered**4))
    se = math.sqrt((mu4 - var**2) / TAIL_DRAWS)
    record_property("detail", f"variance {var:.2f} vs {target:.0f}, {abs(var - target) / se:.2f} SE")
    assert abs(var - target) <= 5 * se


# -- 6 ------------------------------------------------------------------------

CONC_DRAWS = 1000
EPS_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.2)


@pytest.fixture(scope="module")
def concentration_draws():
    mg = validate_margins((40,) * 5, (5,) * 40)
    start = time.perf_counter()
    tt = solve_typical(mg)
    draws = np.array(sample_dp(build_dp(mg), CONC_DRAWS, seed=2024))
    return mg, tt, draws, time.perf_counter() - start


def _concentration(mg, tt, draws, s: EntrySet):
    sz = sigma_S(tt.z, s)
    ratios = draws[:, s.rows, s.cols].sum(axis=1) / sz
    delta = smoothness_delta(mg)
    alpha = max(1.0, float(tt.z[s.rows, s.cols].max()) * mg.m * mg.n / mg.total)
    tails = []
    for eps in EPS_SWEEP:
        freq = float(np.mean(ratios <= 1 - eps))
        tails.append((eps, freq, concentration_bound_cor32(delta, alpha, len(s), eps, "lower")))
    return ratios, tails


@pytest.mark.criterion(6, "concentration of block sums over 1000 exact draws, < 120 s")
@pytest.mark.parametrize(
    "label,rows,cols",
    [("left half", range(5), range(20)), ("rows 1-3 x left half", range(3), range(20))],
)
def test_concentration(concentration_draws, label, rows, cols, record_property):
    mg, tt, draws, elapsed = concentration_draws
    s = EntrySet.block(rows, cols, mg.shape)
    ratios, tails = _concentration(mg, tt, draws, s)
    inside = float(np.mean((ratios >= 0.8) & (ratios <= 1.2)))
    record_property(
        "detail",
        f"{label}: mean {ratios.mean():.4f}, inside {inside:.3f}, sd {ratios.std():.4f}, {elapsed:.1f} s",
    )
    assert abs(ratios.mean() - 1) <= 0.05
    assert inside >= 0.95
    for eps, freq, bound in tails:
        assert freq <= bound, (eps, freq, bound)
    assert elapsed < 120


# -- 7 ------------------------------------------------------------------------

@pytest.mark.criterion(7, "corner example: z11 > 0.58n, y11 <= 9; clone ratio constant")
@pytest.mark.parametrize("n", [10, 20, 40])
def test_corner_example(n, record_property):
    sums = [3 * n] + [n] * (n - 1)
    mg = validate_margins(sums, sums)
    z11 = solve_typical(mg).z[0, 0]
    y11 = mg.rows[0] * mg.cols[0] / mg.total
    record_property("detail", f"n={n}: z11 {z11:.3f} (> {0.58 * n:.2f}), y11 {y11:.3f}")
    assert z11 > 0.58 * n
    assert y11 <= 9


@pytest.mark.criterion(7, "corner example: z11 > 0.58n, y11 <= 9; clone ratio constant")
def test_clone_ratio(record_property):
    mg = validate_margins((3, 1), (2, 1, 1))
    base = EntrySet.from_pairs([(1, 1), (2, 3)], mg.shape)
    ratios = []
    for k in (1, 2, 3):
        mk = clone_margins(mg, k)
        pairs = [(k * i + a, k * j + b) for i, j in base.pairs for a in range(k) for b in range(k)]
        sk = EntrySet.from_pairs(pairs, mk.shape, one_based=False)
        ratios.append(sigma_S(solve_typical(mk).z, sk) / k**2)
    spread = (max(ratios) - min(ratios)) / abs(ratios[0])
    record_property("detail", f"sigma/k^2 = {', '.join(f'{r:.8f}' for r in ratios)}")
    assert spread <= 1e-6


# -- 8 ------------------------------------------------------------------------

@pytest.mark.criterion(8, "scaling map lands in the scaled set, bounds hold, preimages bounded")
@pytest.mark.parametrize("name", ["(1,1)^2", "(2,2)^2"])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_scaling_map(name, t, record_property):
    mg = small(name)
    ctx = scaling_context(mg, t)
    assert all(context_bounds_hold(ctx).values())
    tables = enumerate_tables(mg)
    rng = generator(1000 + t)
    sets = [EntrySet.random_fraction(rng.uniform(0.1, 1.0), mg.shape, rng) for _ in range(20)]
    for d in tables:
        y = t_scale(ctx, d)
        assert np.all(y >= 0)
        assert tuple(y.sum(axis=1)) == ctx.scaled_margins.rows
        assert tuple(y.sum(axis=0)) == ctx.scaled_margins.cols
        assert all(sigma_bounds_hold(ctx, d, s) for s in sets)
    counts = preimage_counts(ctx, tables)
    record_property("detail", f"{name} t={t}: max preimage {max(counts.values())} <= {preimage_limit(ctx)}")
    assert max(counts.values()) <= preimage_limit(ctx)


# -- 9 ------------------------------------------------------------------------

@pytest.mark.criterion(9, "entry lower bounds and large-entry row bound on the solver suite")
def test_structural_bounds(smooth_suite, record_property):
    checked = 0
    for mg in smooth_suite:
        tt = solve_typical(mg)
        b = entry_lower_bounds(mg)
        zmin = float(tt.z.min())
        assert zmin >= b.rows * (1 - 1e-9)
        assert zmin >= b.cols * (1 - 1e-9)
        assert zmin >= b.smooth * (1 - 1e-9)
        base = max(1.0, 2 * mg.m * mg.n / mg.total)
        for alpha in (base, 2 * base, 4 * base):
            assert len(large_entry_rows(tt, alpha)) <= large_entry_bound(mg, alpha)
            checked += 1
    record_property("detail", f"{len(smooth_suite)} instances, {checked} alpha checks")


# -- 10 -----------------------------------------------------------------------

RERUNS = {
    "typical": ["typical", "--margins", "9,4,1/5,5,2,2"],
    "compare": ["compare", "--margins", "9,4,1/5,5,2,2", "--clones", "1,2"],
    "count": ["count", "--margins", "3,2,1/2,2,2"],
    "sample-dp": ["sample", "--margins", "3,2,1/2,2,2", "--samples", "200", "--seed", "7"],
    "sample-rejection": ["sample", "--margins", "2,1/1,1,1", "--method", "rejection", "--samples", "200", "--seed", "7"],
    "concentrate": ["concentrate", "--margins", "6,6,6/3,3,3,3,3,3", "--samples", "100", "--seed", "3"],
    "scale": ["scale", "--margins", "2,2/2,2", "--t", "2", "--seed", "5"],
}


@pytest.mark.criterion(10, "CLI reruns are byte-identical")
@pytest.mark.parametrize("label", list(RERUNS))
def test_cli_reruns(label, tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main([*RERUNS[label], "--out", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] and outputs[0] == outputs[1]
