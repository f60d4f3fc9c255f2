"""Typical tables of contingency-table margins.

The typical table ``Z`` maximizes ``g(X) = sum (x+1)ln(x+1) - x ln x`` over
non-negative real matrices with given margins. ``exp(g(Z))`` bounds the
number of integer tables with those margins, and a matrix of independent
geometric variables with means ``Z`` conditioned on the margins is uniform.
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .counting import DPTable, build_dp, count_tables, dp_uniform_sample, enumerate_tables, iter_tables
from .errors import (
    AlphaTooSmall,
    AttemptsExhausted,
    BudgetExceeded,
    CapExceeded,
    DomainViolation,
    IndexOutOfBounds,
    MarginMismatch,
    MismatchedTotals,
    NegativeEntry,
    NoConvergence,
    NonPositiveEntry,
    NonPositiveTotal,
    NotInSubspace,
    ShapeMismatch,
    TablesError,
)
from .model import (
    EntrySet,
    Margins,
    clone_margins,
    entropy_H,
    fisher_yates_log_mass,
    g_value,
    independence_table,
    nu_S,
    sigma_S,
    smoothness_delta,
    validate_margins,
)
from .sampling import (
    AcceptanceStats,
    GeometricMatrixModel,
    concentration_bound_cor32,
    geometric_matrix_sample,
    log_mass,
    rejection_uniform_sample,
    sample_dp,
    sample_rejection,
    tail_bound_lower,
    tail_bound_upper,
    verify_theorem_1_7,
)
from .scaling import (
    ScalingContext,
    lattice_coords,
    preimage_count_check,
    reconstruct_from_coords,
    round_to_lattice,
    scaling_context,
    t_scale,
)
from .solver import (
    DualVariables,
    TypicalTable,
    check_optimality,
    count_bounds,
    dual_objective,
    entry_lower_bounds,
    large_entry_rows,
    log_rho,
    solve_typical,
)

__all__ = [name for name in dir() if not name.startswith("_") and name != "annotations"]
