from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import random_smooth_margins
from typical_tables.errors import AlphaTooSmall, DomainViolation, NoConvergence
from typical_tables.model import clone_margins, g_value, independence_table, validate_margins
from typical_tables.solver import (
    DualVariables,
    check_optimality,
    count_bounds,
    dual_objective,
    entry_lower_bounds,
    large_entry_bound,
    large_entry_rows,
    log_rho,
    optimality_multipliers,
    solve_typical,
    z_from_sums,
)


def corner_margins(n: int):
    sums = [3 * n] + [n] * (n - 1)
    return validate_margins(sums, sums)


class TestDualObjective:
    def test_one_by_one(self):
        d = DualVariables([0.5 * math.log(2)], [0.5 * math.log(2)])
        assert dual_objective(d, validate_margins([1], [1])) == pytest.approx(2 * math.log(2), abs=1e-15)

    def test_gauge(self):
        mg = validate_margins((3, 1), (2, 1, 1))
        d = DualVariables([0.4, 0.9], [0.3, 0.7, 1.1])
        assert dual_objective(d.shifted(0.25), mg) == pytest.approx(dual_objective(d, mg), abs=1e-13)

    def test_domain(self):
        with pytest.raises(DomainViolation):
            dual_objective(DualVariables([0.1], [-0.2]), validate_margins([1], [1]))

    def test_weak_duality(self):
        mg = validate_margins((5, 3, 2), (4, 4, 2))
        tt = solve_typical(mg)
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = DualVariables(rng.uniform(0.05, 2, 3), rng.uniform(0.05, 2, 3))
            assert dual_objective(d, mg) >= tt.g_of_z - 1e-9


class TestZFromSums:
    def test_matches_definition(self):
        x = np.array([1e-8, 0.3, 1.0, 1.0000001, 5.0, 40.0])
        np.testing.assert_allclose(z_from_sums(x), 1.0 / np.expm1(x), rtol=1e-14)

    def test_huge_argument(self):
        assert z_from_sums(np.array([800.0]))[0] == 0.0


class TestSolve:
    @pytest.mark.parametrize("r,expected", [((1, 1), 0.5), ((2, 2), 1.0), ((6, 6, 6), 2.0)])
    def test_constant_margins(self, r, expected):
        tt = solve_typical(validate_margins(r, r))
        np.testing.assert_allclose(tt.z, expected, rtol=1e-12)

    def test_corner_example(self):
        tt = solve_typical(corner_margins(10))
        assert tt.z[0, 0] > 5.8
        assert np.all(tt.z[0, 1:] < 1 / (math.sqrt(2) - 1))

    def test_random_margin_match(self):
        mg = random_smooth_margins(np.random.default_rng(8), 5, 7, hi=60)
        tt = solve_typical(mg)
        np.testing.assert_allclose(tt.z.sum(axis=1), mg.rows, rtol=1e-8)
        np.testing.assert_allclose(tt.z.sum(axis=0), mg.cols, rtol=1e-8)
        assert tt.residual <= 1e-10

    def test_invariants(self):
        mg = validate_margins((9, 4, 1, 6), (3, 8, 2, 2, 5))
        tt = solve_typical(mg)
        assert np.all(tt.z > 0)
        np.testing.assert_allclose(tt.z, 1.0 / np.expm1(tt.duals.sums()), rtol=1e-12)
        assert tt.g_of_z == pytest.approx(g_value(tt.z), abs=1e-12)
        gap = dual_objective(tt.duals, mg) - tt.g_of_z
        assert abs(gap) <= 1e-6 * (1 + abs(tt.g_of_z))

    def test_monotone_objective(self):
        mg = corner_margins(12)
        seen = []
        solve_typical(mg, callback=lambda k, d, G: seen.append(G))
        assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(seen, seen[1:]))

    def test_gauge_invariant_start(self):
        mg = validate_margins((9, 4, 1, 6), (3, 8, 2, 2, 5))
        base = solve_typical(mg)
        init = DualVariables(np.full(4, 1.7), np.full(5, -0.4))
        other = solve_typical(mg, init=init)
        np.testing.assert_allclose(other.z, base.z, rtol=1e-8)

    def test_bad_start(self):
        with pytest.raises(DomainViolation):
            solve_typical(validate_margins((1, 1), (1, 1)), init=DualVariables([-1, -1], [0.5, 0.5]))

    def test_no_convergence_carries_best(self):
        with pytest.raises(NoConvergence) as info:
            solve_typical(corner_margins(20), max_iter=1)
        exc = info.value
        assert exc.max_iter == 1 and exc.residual > 1e-10
        assert exc.best.z.shape == (20, 20)

    def test_deterministic(self):
        mg = corner_margins(8)
        np.testing.assert_array_equal(solve_typical(mg).z, solve_typical(mg).z)

    def test_against_generic_optimizer(self):
        # independent route: maximize g directly under the margin constraints
        mg = validate_margins((5, 2, 1), (3, 3, 1, 1))
        m, n = mg.shape
        r, c = np.array(mg.rows, float), np.array(mg.cols, float)
        cons = [{"type": "eq", "fun": lambda x, i=i: x.reshape(m, n)[i].sum() - r[i]} for i in range(m)]
        cons += [{"type": "eq", "fun": lambda x, j=j: x.reshape(m, n)[:, j].sum() - c[j]} for j in range(n - 1)]
        x0 = independence_table(mg).ravel()
        res = minimize(lambda x: -g_value(np.maximum(x, 0)), x0, constraints=cons,
                       bounds=[(1e-9, None)] * (m * n), method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        np.testing.assert_allclose(solve_typical(mg).z.ravel(), res.x, atol=2e-5)

    def test_clone_block_structure(self):
        mg = validate_margins((3, 1), (2, 1, 1))
        z = solve_typical(mg).z
        for k in (2, 3):
            zk = solve_typical(clone_margins(mg, k)).z
            # each k x k block repeats the original entry, so a corner block sums to k^2 z_11
            np.testing.assert_allclose(zk, np.kron(z, np.ones((k, k))), rtol=1e-6)

    def test_transpose(self):
        mg = validate_margins((9, 4, 1, 6), (3, 8, 2, 2, 5))
        np.testing.assert_allclose(solve_typical(mg.transpose()).z, solve_typical(mg).z.T, rtol=1e-8)


class TestRho:
    def test_one_cell(self):
        assert log_rho(solve_typical(validate_margins([1], [1]))) == pytest.approx(2 * math.log(2), abs=1e-10)

    def test_two_by_two(self):
        assert log_rho(solve_typical(validate_margins((1, 1), (1, 1)))) == pytest.approx(math.log(729 / 16), abs=1e-10)

    def test_twos(self):
        assert log_rho(solve_typical(validate_margins((2, 2), (2, 2)))) == pytest.approx(8 * math.log(2), abs=1e-10)

    @pytest.mark.parametrize("r,count", [((1, 1), 2), ((1, 1, 1), 6), ((2, 2), 3)])
    def test_count_bound(self, r, count):
        cb = count_bounds(solve_typical(validate_margins(r, r)))
        assert cb.log_upper >= math.log(count)
        assert "gamma" in cb.lower_note


class TestOptimality:
    def test_constant(self):
        assert check_optimality(np.full((3, 4), 2.0)) == pytest.approx(0.0, abs=1e-15)

    def test_solver_output(self):
        mg = random_smooth_margins(np.random.default_rng(2), 6, 9)
        assert check_optimality(solve_typical(mg)) <= 1e-6

    def test_detects_non_optimal(self):
        y = independence_table(validate_margins((3, 1), (2, 1, 1)))
        assert check_optimality(y) > 1e-3

    def test_against_lstsq(self):
        rng = np.random.default_rng(5)
        z = rng.uniform(0.2, 4.0, size=(4, 6))
        L = np.log1p(1 / z)
        m, n = z.shape
        A = np.zeros((m * n, m + n))
        for i in range(m):
            for j in range(n):
                A[i * n + j, i] = A[i * n + j, m + j] = 1
        coef, *_ = np.linalg.lstsq(A, L.ravel(), rcond=None)
        expected = np.max(np.abs(L.ravel() - A @ coef))
        lam, mu, resid = optimality_multipliers(z)
        assert resid == pytest.approx(expected, rel=1e-10)
        assert lam[0] == pytest.approx(L[0, 0] / 2, abs=1e-14)
        np.testing.assert_allclose(lam[:, None] + mu[None, :], (A @ coef).reshape(m, n), atol=1e-12)


class TestStructuralBounds:
    def test_entry_bounds_example(self):
        b = entry_lower_bounds(validate_margins((1, 1), (1, 1)))
        assert (b.rows, b.cols) == (pytest.approx(0.5), pytest.approx(0.5))
        assert b.smooth == pytest.approx(1 / 16)

    def test_constant_margins_tight(self):
        b = entry_lower_bounds(validate_margins((4, 4, 4), (4, 4, 4)))
        assert b.rows == pytest.approx(4 / 3) and b.cols == pytest.approx(4 / 3)

    def test_corner_bounds(self):
        mg = corner_margins(10)
        z = solve_typical(mg).z
        b = entry_lower_bounds(mg)
        assert z.min() >= max(b)

    def test_large_rows_constant(self):
        mg = validate_margins((30, 30), (20, 20, 20))
        tt = solve_typical(mg)
        alpha = 2 * 2 * 3 / 60 * 6  # above 1, so N/(mn) stays below the threshold
        assert large_entry_rows(tt, alpha) == frozenset()

    def test_large_rows_corner(self):
        mg = corner_margins(10)
        tt = solve_typical(mg)
        alpha = 3 * 100 / 120  # threshold alpha N / (mn) = 3
        assert large_entry_rows(tt, alpha) == frozenset({0})
        assert len(large_entry_rows(tt, alpha)) <= large_entry_bound(mg, alpha)

    def test_alpha_too_small(self):
        tt = solve_typical(validate_margins((1, 1), (1, 1)))
        with pytest.raises(AlphaTooSmall):
            large_entry_rows(tt, 1.0)
