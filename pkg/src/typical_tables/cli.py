"""Command-line front end: ``tt typical|compare|count|sample|concentrate|scale``.

Every output file records the tool version, the seed and a hash of the
effective configuration. JSON is written with sorted keys and shortest
round-trip floats, so a rerun with the same configuration is byte-identical.
Exit codes: 0 ok, 1 usage or I/O, 2 solver, 3 DP budget, 4 sampler.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .counting import build_dp, count_tables, iter_tables
from .errors import AttemptsExhausted, BudgetExceeded, CapExceeded, NoConvergence, TablesError
from .model import (
    EntrySet,
    Margins,
    clone_margins,
    entropy_H,
    entry_set_to_list,
    g_value,
    independence_table,
    load_margins,
    margins_from_dict,
    margins_to_dict,
    parse_margins,
    sigma_S,
    smoothness_delta,
    table_to_list,
)
from .rng import generator
from .sampling import concentration_bound_cor32, sample_dp, sample_rejection
from .scaling import (
    auto_t,
    context_bounds_hold,
    preimage_counts,
    preimage_limit,
    scaling_context,
    sigma_bounds_hold,
    t_scale,
)
from .solver import (
    DEFAULT_TOL,
    TypicalTable,
    check_optimality,
    dual_objective,
    entry_lower_bounds,
    large_entry_bound,
    large_entry_rows,
    solve_typical,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_BUDGET, EXIT_SAMPLER = 0, 1, 2, 3, 4

EPS_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.2)
QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
ENUMERATION_CAP = 10_000

# keys that influence results; output location and worker count do not
RESULT_KEYS = ("margins", "seed", "tol", "samples", "method", "t", "set", "clones", "max_attempts", "random_sets")

DEFAULTS = {
    "seed": 0,
    "tol": DEFAULT_TOL,
    "samples": None,
    "method": "dp",
    "t": None,
    "set": None,
    "out": ".",
    "workers": 1,
    "clones": "1,2,3",
    "max_attempts": 10**8,
    "random_sets": 20,
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    margins_source: str
    margins: Margins
    seed: int
    tol: float
    samples: int | None
    method: str
    t: int | None
    set_spec: str | None
    out: Path
    workers: int
    clones: tuple[int, ...]
    max_attempts: int
    random_sets: int
    raw: dict = field(default_factory=dict)

    def hash(self) -> str:
        material = {k: self.raw.get(k) for k in RESULT_KEYS}
        material["command"] = self.command
        material["margins"] = margins_to_dict(self.margins)
        return hashlib.sha256(canonical_json(material).encode()).hexdigest()

    def meta(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.hash(),
            "seed": self.seed,
            "version": __version__,
        }


# -- output helpers -------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False, separators=(",", ":"))


def _finite(x: float):
    """JSON has no inf/nan; encode them as strings."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_long_csv(path: Path, cfg: ExperimentConfig, header: list[str], rows) -> None:
    buf = io.StringIO()
    for k, v in cfg.meta().items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def _matrix(a) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(a, dtype=float)]


# -- entry-set specifications ---------------------------------------------------

def _span(text: str) -> range:
    text = text.strip()
    for sep in ("..", "-"):
        if sep in text:
            a, b = text.split(sep, 1)
            return range(int(a) - 1, int(b))
    k = int(text)
    return range(k - 1, k)


def parse_entry_set(spec: str | None, shape: tuple[int, int], seed: int, default: EntrySet) -> EntrySet:
    """Entry set from ``all``, ``block:1-2x3-5``, ``list:1,1;2,3``, ``fraction:0.3`` or a JSON file.

    Indices are 1-based and ranges inclusive. Fractions draw a random set
    from a generator seeded with ``seed``.
    """
    if spec is None:
        return default
    try:
        if spec == "all":
            return EntrySet.everything(shape)
        if spec.startswith("block:"):
            rows, cols = spec[len("block:"):].lower().split("x")
            return EntrySet.block(_span(rows), _span(cols), shape)
        if spec.startswith("list:"):
            pairs = [p.split(",") for p in spec[len("list:"):].split(";") if p.strip()]
            return EntrySet.from_pairs(pairs, shape)
        if spec.startswith("fraction:"):
            f = float(spec[len("fraction:"):])
            if not 0 < f <= 1:
                raise UsageError(f"fraction must lie in (0, 1], got {f}")
            return EntrySet.random_fraction(f, shape, generator(seed))
        with open(spec) as fh:
            return EntrySet.from_pairs(json.load(fh), shape)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad entry-set spec {spec!r}: {exc}") from None


# -- configuration ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tt", description="Typical tables, exact counts and uniform samplers.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    help_text = {
        "typical": "solve for the typical table",
        "compare": "typical table vs independence table, with cloned margins",
        "count": "exact table count and the exp(g(Z)) bound",
        "sample": "uniform tables by rejection or by the count DP",
        "concentrate": "spread of sigma_S over uniform tables",
        "scale": "apply the t-scaling map and check its bounds",
    }
    for name, text in help_text.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--margins", help="JSON file {rows, cols} or inline 'r1,r2/c1,c2'")
        sp.add_argument("--config", help="JSON file with any of the options below")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--method", choices=["rejection", "dp"])
        sp.add_argument("--t", type=int)
        sp.add_argument("--set", help="all | block:i1-i2xj1-j2 | list:i,j;i,j | fraction:f | FILE")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--clones", help="clone factors for compare, e.g. 1,2,3")
        sp.add_argument("--max-attempts", dest="max_attempts", type=int)
        sp.add_argument("--random-sets", dest="random_sets", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    raw = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                raw.update(json.load(fh))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    for key in list(DEFAULTS) + ["margins"]:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    source = raw.get("margins")
    if source is None:
        raise UsageError("--margins is required (directly or in --config)")
    try:
        if isinstance(source, dict):
            margins = margins_from_dict(source)
        elif os.path.exists(str(source)):
            margins = load_margins(source)
        else:
            margins = parse_margins(str(source))
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    seed = int(raw["seed"])
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    try:
        clones = tuple(int(k) for k in str(raw["clones"]).split(",") if k.strip())
    except ValueError:
        raise UsageError(f"bad clone list {raw['clones']!r}") from None
    if any(k < 1 for k in clones):
        raise UsageError("clone factors must be positive")
    if raw["t"] is not None and int(raw["t"]) < 1:
        raise UsageError("--t must be positive")
    if raw["samples"] is not None and int(raw["samples"]) < 0:
        raise UsageError("--samples must be non-negative")
    # keep the file-independent margins in the hash so moving a file does not change it
    raw["margins"] = margins_to_dict(margins)
    return ExperimentConfig(
        command=args.command,
        margins_source=str(source),
        margins=margins,
        seed=seed,
        tol=float(raw["tol"]),
        samples=None if raw["samples"] is None else int(raw["samples"]),
        method=str(raw["method"]),
        t=None if raw["t"] is None else int(raw["t"]),
        set_spec=raw["set"],
        out=Path(raw["out"]),
        workers=max(1, int(raw["workers"])),
        clones=clones,
        max_attempts=int(raw["max_attempts"]),
        random_sets=int(raw["random_sets"]),
        raw=raw,
    )


# -- subcommands --------------------------------------------------------------

def _solve(cfg: ExperimentConfig, margins: Margins | None = None) -> TypicalTable:
    return solve_typical(margins or cfg.margins, tol=cfg.tol)


def corner_pattern(margins: Margins) -> int | None:
    """``n`` when the margins are ``(3n, n, ..., n)`` for both rows and columns."""
    n = margins.n
    expect = (3 * n,) + (n,) * (n - 1)
    if n >= 2 and margins.rows == expect and margins.cols == expect:
        return n
    return None


def _typical_payload(tt: TypicalTable, converged: bool) -> dict:
    return {
        "converged": converged,
        "g_of_z": tt.g_of_z,
        "log_rho": tt.g_of_z,
        "margins": margins_to_dict(tt.margins),
        "residual": tt.residual,
        "row_sums": [float(v) for v in tt.z.sum(axis=1)],
        "col_sums": [float(v) for v in tt.z.sum(axis=0)],
        "sweeps": tt.sweeps,
        "z": _matrix(tt.z),
    }


def cmd_typical(cfg: ExperimentConfig) -> int:
    try:
        tt = _solve(cfg)
    except NoConvergence as exc:
        payload = {"meta": cfg.meta(), **_typical_payload(exc.best, False)}
        write_json(cfg.out / "typical.json", payload)
        log.error("%s", exc)
        return EXIT_SOLVER
    m, n = tt.shape
    N = tt.margins.total
    delta = smoothness_delta(tt.margins)
    bounds = entry_lower_bounds(tt.margins)
    z_min = float(tt.z.min())
    alpha = max(2 * m * n / N, 1.0)
    rows_I = sorted(large_entry_rows(tt, alpha))
    report = {
        "meta": cfg.meta(),
        "smoothness_delta": delta,
        "optimality_residual": check_optimality(tt),
        "duality_gap": dual_objective(tt.duals, tt.margins) - tt.g_of_z,
        "min_entry": z_min,
        "entry_lower_bounds": {
            "rows": bounds.rows,
            "cols": bounds.cols,
            "smooth": bounds.smooth,
            "rows_hold": z_min >= bounds.rows * (1 - 1e-9),
            "cols_hold": z_min >= bounds.cols * (1 - 1e-9),
            "smooth_hold": z_min >= bounds.smooth * (1 - 1e-9),
        },
        "large_entry_rows": {
            "alpha": alpha,
            "rows": [i + 1 for i in rows_I],
            "bound": large_entry_bound(tt.margins, alpha),
            "holds": len(rows_I) <= large_entry_bound(tt.margins, alpha),
        },
    }
    k = corner_pattern(tt.margins)
    if k is not None:
        y = independence_table(tt.margins)
        z11, y11 = float(tt.z[0, 0]), float(y[0, 0])
        report["corner_pattern"] = {
            "n": k,
            "z11": z11,
            "y11": y11,
            "z11_over_n": z11 / k,
            "z11_gt_0.58n": z11 > 0.58 * k,
            "y11_le_9": y11 <= 9,
            "z1j_lt_1/(sqrt2-1)": bool(np.all(tt.z[0, 1:] < 1 / (math.sqrt(2) - 1))),
        }
    write_json(cfg.out / "typical.json", {"meta": cfg.meta(), **_typical_payload(tt, True)})
    write_json(cfg.out / "duals.json", {"meta": cfg.meta(), "s": list(map(float, tt.duals.s)), "t": list(map(float, tt.duals.t))})
    write_json(cfg.out / "report.json", report)
    return EXIT_OK


def _cloned_set(s: EntrySet, k: int) -> EntrySet:
    m, n = s.shape
    pairs = [(k * i + a, k * j + b) for i, j in s.pairs for a in range(k) for b in range(k)]
    return EntrySet.from_pairs(pairs, (k * m, k * n), one_based=False)


def cmd_compare(cfg: ExperimentConfig) -> int:
    margins = cfg.margins
    try:
        tt = _solve(cfg)
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    y = independence_table(margins)
    N = margins.total
    rows: list[list] = []
    for (i, j), zv in np.ndenumerate(tt.z):
        rows.append(["z", 1, i + 1, j + 1, float(zv)])
        rows.append(["y", 1, i + 1, j + 1, float(y[i, j])])
        rows.append(["abs_diff", 1, i + 1, j + 1, float(abs(zv - y[i, j]))])
    rows.append(["max_abs_diff", 1, "", "", float(np.max(np.abs(tt.z - y)))])
    rows.append(["H_Z", 1, "", "", entropy_H(tt.z, N)])
    rows.append(["H_Y", 1, "", "", entropy_H(y, N)])
    rows.append(["g_Z", 1, "", "", tt.g_of_z])
    rows.append(["g_Y", 1, "", "", g_value(y)])
    s = parse_entry_set(cfg.set_spec, margins.shape, cfg.seed, EntrySet.from_pairs([(1, 1)], margins.shape))
    for k in cfg.clones:
        try:
            zk = _solve(cfg, clone_margins(margins, k)).z
        except NoConvergence as exc:
            log.error("clone k=%d: %s", k, exc)
            return EXIT_SOLVER
        sig = sigma_S(zk, _cloned_set(s, k))
        rows.append(["sigma_S", k, "", "", sig])
        rows.append(["sigma_S_over_k2", k, "", "", sig / k**2])
    write_long_csv(cfg.out / "compare.csv", cfg, ["quantity", "k", "i", "j", "value"], rows)
    return EXIT_OK


def cmd_count(cfg: ExperimentConfig) -> int:
    try:
        tt = _solve(cfg)
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    try:
        dp = build_dp(cfg.margins)
    except BudgetExceeded as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    count = dp.total
    ln_count = math.log(count)
    payload = {
        "meta": cfg.meta(),
        "margins": margins_to_dict(cfg.margins),
        "count": count,
        "ln_count": ln_count,
        "ln_rho": tt.g_of_z,
        "ratio_ln_count_over_ln_rho": ln_count / tt.g_of_z,
        "upper_bound_holds": ln_count <= tt.g_of_z + 1e-9,
        "dp_states": dp.n_states,
    }
    write_json(cfg.out / "count.json", payload)
    return EXIT_OK


def cmd_sample(cfg: ExperimentConfig) -> int:
    count = 1000 if cfg.samples is None else cfg.samples
    stats: dict = {"meta": cfg.meta(), "method": cfg.method, "samples": count}
    try:
        if cfg.method == "rejection":
            tt = _solve(cfg)
            tables, acc = sample_rejection(tt, count, cfg.seed, cfg.workers, cfg.max_attempts)
            stats.update(acc.to_dict())
            stats["g_of_z"] = tt.g_of_z
            # exp(g(Z)) * rate estimates |Sigma(R, C)|
            stats["count_estimate"] = math.exp(tt.g_of_z) * acc.rate
            stats["count_estimate_stderr"] = math.exp(tt.g_of_z) * acc.stderr
            try:
                exact = count_tables(cfg.margins)
            except BudgetExceeded:
                exact = None
            if exact is not None:
                predicted = exact * math.exp(-tt.g_of_z)
                stats["exact_count"] = exact
                stats["predicted_rate"] = predicted
                stats["rate_z_score"] = (acc.rate - predicted) / acc.stderr if acc.stderr else 0.0
        else:
            dp = build_dp(cfg.margins)
            tables = sample_dp(dp, count, cfg.seed, cfg.workers)
            stats["exact_count"] = dp.total
            stats["dp_states"] = dp.n_states
            stats["dp_states_per_column"] = dp.states_per_column()
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except BudgetExceeded as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    except AttemptsExhausted as exc:
        log.error("%s", exc)
        return EXIT_SAMPLER
    with open(cfg.out / "samples.jsonl", "w") as fh:
        fh.write(canonical_json({"meta": cfg.meta()}) + "\n")
        for t in tables:
            fh.write(canonical_json(table_to_list(t)) + "\n")
    write_json(cfg.out / "stats.json", stats)
    return EXIT_OK


def cmd_concentrate(cfg: ExperimentConfig) -> int:
    margins = cfg.margins
    m, n = margins.shape
    count = 1000 if cfg.samples is None else cfg.samples
    default_set = EntrySet.block(range(m), range(n // 2 or 1), margins.shape)
    s = parse_entry_set(cfg.set_spec, margins.shape, cfg.seed, default_set)
    try:
        tt = _solve(cfg)
        dp = build_dp(margins)
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except BudgetExceeded as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    tables = sample_dp(dp, count, cfg.seed, cfg.workers)
    sig_z = sigma_S(tt.z, s)
    ratios = np.array([sigma_S(d, s) / sig_z for d in tables])
    delta = smoothness_delta(margins)
    N = margins.total
    z_on_s = tt.z[s.mask()]
    alpha = max(1.0, float(z_on_s.max()) * m * n / N)
    sweep = list(EPS_SWEEP)
    eps_theory = delta * math.log(n) / m ** (1 / 3)
    if 0 < eps_theory <= 1 and eps_theory not in sweep:
        sweep.append(eps_theory)
    rows: list[list] = [
        ["sigma_S_Z", "", sig_z],
        ["set_size", "", len(s)],
        ["delta", "", delta],
        ["alpha", "", alpha],
        ["eps_theory", "", eps_theory],
        ["mean_ratio", "", float(ratios.mean()) if count else float("nan")],
    ]
    if count:
        for q in QUANTILES:
            rows.append(["quantile", q, float(np.quantile(ratios, q))])
    for eps in sorted(sweep):
        inside = float(np.mean(np.abs(ratios - 1) <= eps)) if count else float("nan")
        lower = float(np.mean(ratios <= 1 - eps)) if count else float("nan")
        upper = float(np.mean(ratios >= 1 + eps)) if count else float("nan")
        rows.append(["inside_fraction", eps, inside])
        rows.append(["lower_tail_freq", eps, lower])
        rows.append(["upper_tail_freq", eps, upper])
        if eps < 1:
            rows.append(["deviation_bound_lower", eps, concentration_bound_cor32(min(delta, 1.0), alpha, len(s), eps, "lower")])
            rows.append(["deviation_bound_upper", eps, concentration_bound_cor32(min(delta, 1.0), alpha, len(s), eps, "upper")])
    for k, r in enumerate(ratios):
        rows.append(["ratio", k, float(r)])
    write_long_csv(cfg.out / "concentrate.csv", cfg, ["quantity", "param", "value"], rows)
    return EXIT_OK


def cmd_scale(cfg: ExperimentConfig) -> int:
    margins = cfg.margins
    t = cfg.t if cfg.t is not None else auto_t(margins)
    ctx = scaling_context(margins, t)
    try:
        total = count_tables(margins)
    except BudgetExceeded as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    enumerated = total <= ENUMERATION_CAP and cfg.samples is None
    if enumerated:
        sources = list(iter_tables(margins))
    else:
        sources = sample_dp(build_dp(margins), cfg.samples or 1000, cfg.seed, cfg.workers)
    rng = generator(cfg.seed)
    sets = [EntrySet.random_fraction(float(rng.uniform(0.05, 1.0)), margins.shape, rng) for _ in range(cfg.random_sets)]
    if cfg.set_spec is not None:
        sets.append(parse_entry_set(cfg.set_spec, margins.shape, cfg.seed, EntrySet.everything(margins.shape)))
    margins_ok = True
    sigma_ok = True
    shift_ok = True
    for d in sources:
        y = t_scale(ctx, d)
        margins_ok &= bool(np.all(y >= 0))
        sigma_ok &= all(sigma_bounds_hold(ctx, d, s) for s in sets)
        if t == 1:
            shift_ok &= bool(np.array_equal(y, np.asarray(d) + 2))
    report = {
        "meta": cfg.meta(),
        "context": ctx.to_dict(),
        "t": t,
        "t_auto": cfg.t is None,
        "source_tables": len(sources),
        "sources_enumerated": enumerated,
        "images_nonnegative_with_scaled_margins": margins_ok,
        "context_bounds": context_bounds_hold(ctx),
        "sigma_bounds_hold": sigma_ok,
        "random_sets": [entry_set_to_list(s) for s in sets],
    }
    if t == 1:
        report["t1_shift_by_two"] = shift_ok
    if enumerated:
        counts = preimage_counts(ctx, sources)
        report["preimage_max"] = max(counts.values())
        report["preimage_limit"] = preimage_limit(ctx)
        report["preimage_bound_holds"] = report["preimage_max"] <= report["preimage_limit"]
        report["image_count"] = len(counts)
    try:
        z = _solve(cfg).z
        z_scaled = _solve(cfg, ctx.scaled_margins).z
        report["typical_ratio_max_dev"] = _finite(np.max(np.abs(z / (t * z_scaled) - 1)))
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    write_json(cfg.out / "scale_report.json", report)
    return EXIT_OK


COMMANDS = {
    "typical": cmd_typical,
    "compare": cmd_compare,
    "count": cmd_count,
    "sample": cmd_sample,
    "concentrate": cmd_concentrate,
    "scale": cmd_scale,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for the solver here
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"tt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"tt: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (CapExceeded, TablesError, OSError) as exc:
        print(f"tt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
