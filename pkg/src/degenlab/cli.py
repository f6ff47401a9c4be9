"""Command-line orchestration: run experiments from config files, emit CSV
reports and a manifest, compare runs.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 solver failure. A manifest is written even on failure. Reruns with the
same config produce byte-identical CSV files (fixed seeds and reduction
orders); wall times live only in the manifest.
"""

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import kernel_path
from .cases import CATALOG, build_case_table, exact_error, forcing_consistency
from .config import ConfigError, ExperimentConfig, build_case, build_problem, load_config
from .curved import (
    CoefficientField,
    CurvedProblem,
    Straightening,
    curved_bc_residual,
    make_parametrization,
    pullback_field,
    push_problem,
)
from .frequency import (
    check_derivative_identity,
    frequency_profile,
    growth_validator,
    inequality_battery,
    random_smooth_fields,
)
from .grid import build_grid
from .rates import (
    conormal_decay,
    epsilon_sweep,
    gradient_holder_fit,
    holder_exponent_fit,
    limiting_bc_residual,
)
from .solver import SolverError, solve_problem

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

FLOAT_FMT = "{:.17g}"


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT.format(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(path, subcommand, cfg, checks, status, wall, extra=None):
    lines = [
        "degenlab-manifest",
        f"version: {__version__}",
        f"subcommand: {subcommand}",
        f"kernel_path: {kernel_path()}",
        f"status: {status}",
        f"wall_time_s: {wall:.3f}",
    ]
    if extra:
        lines += [f"{k}: {v}" for k, v in extra.items()]
    lines.append("[config]")
    if cfg is not None:
        lines += [f"{k}: {v}" for k, v in cfg.resolved_items()]
    lines.append("[checks]")
    for cid, passed, detail in checks:
        lines.append(f"{cid}: {'pass' if passed else 'FAIL'} ({detail})")
    Path(path).write_text("\n".join(lines) + "\n")


def _radii(cfg, h):
    r0 = cfg.getfloat("experiment", "radii_start")
    r1 = cfg.getfloat("experiment", "radii_stop")
    return np.arange(r0, r1 + 1e-12, h)


# ---------------------------------------------------------------------------
# subcommand workers: return (rows_by_filename, checks)


def run_solve(cfg, out):
    case = build_case(cfg)
    checks = []
    fc = forcing_consistency(case, seed=cfg.getint("experiment", "seed"))
    checks.append(("forcing_consistency", fc <= 1e-6, f"{fc:.3e}"))
    problem = build_problem(cfg, case)
    result = solve_problem(problem)
    checks.append(
        ("cg_converged", result.converged, f"iters={result.iterations} res={result.rel_residual:.2e}")
    )
    err = exact_error(result.u, case, result.grid, "Linf_half")
    grid = result.grid
    rows = [
        [i] + list(grid.coords[i]) + [result.u[i]] for i in range(grid.nnodes)
    ]
    hdr = ["node"] + [f"z{k}" for k in range(grid.d)] + ["value"]
    write_csv(out / "solution.csv", hdr, rows)
    write_csv(
        out / "report.csv",
        ["check_id", "metric", "value"],
        [
            ["solve", "linf_error_half_ball", err],
            ["solve", "energy", result.energy],
            ["solve", "iterations", result.iterations],
        ],
    )
    return checks


def run_rates(cfg, out):
    case = build_case(cfg)
    problem = build_problem(cfg, case)
    result = solve_problem(problem)
    rep = holder_exponent_fit(result.u, result.grid)
    checks = [(
        "holder_exponent",
        abs(rep.exponent - case.expected_holder) <= 0.1,
        f"fit={rep.exponent:.3f} expected={case.expected_holder:.3f}",
    )]
    rows = [["value", s, o] for s, o in zip(rep.scales, rep.osc)]
    grad_rows = []
    if case.expected_grad_holder is not None:
        grep = gradient_holder_fit(result.u, result.grid)
        checks.append((
            "gradient_holder_exponent",
            abs(grep.exponent - case.expected_grad_holder) <= 0.1,
            f"fit={grep.exponent:.3f} expected={case.expected_grad_holder:.3f}",
        ))
        grad_rows = [["gradient", s, o] for s, o in zip(grep.scales, grep.osc)]
    write_csv(out / "rates.csv", ["field", "scale", "oscillation"], rows + grad_rows)
    write_csv(
        out / "report.csv",
        ["check_id", "metric", "value"],
        [["rates", "holder_exponent", rep.exponent]]
        + ([["rates", "gradient_exponent", grep.exponent]] if grad_rows else []),
    )
    return checks


def run_sweep_eps(cfg, out):
    case = build_case(cfg)
    problem = build_problem(cfg, case)
    schedule = cfg.getlist("experiment", "eps_schedule")
    sw = epsilon_sweep(problem, schedule)
    drops = np.diff(sw.h1_diff)
    # one pre-asymptotic violation at the coarsest tube radius is tolerated
    decreasing = bool(np.all(drops < 0)) or bool(np.all(drops[1:] < 0))
    checks = [
        ("h1_gap_decreasing", decreasing,
         f"gaps={[float(round(v, 6)) for v in sw.h1_diff]}"),
        ("uniform_bound", sw.uniform_factor <= 2.0, f"factor={sw.uniform_factor:.3f}"),
    ]
    rows = [[e, dgap, nrm] for e, dgap, nrm in zip(sw.eps, sw.h1_diff, sw.sol_norms)]
    write_csv(out / "sweep.csv", ["eps", "h1_diff", "sol_norm"], rows)
    write_csv(
        out / "report.csv",
        ["check_id", "metric", "value"],
        [
            ["sweep-eps", "final_over_first", sw.h1_diff[-1] / sw.h1_diff[0]],
            ["sweep-eps", "uniform_factor", sw.uniform_factor],
        ],
    )
    return checks


def run_conormal(cfg, out):
    case = build_case(cfg)
    problem = build_problem(cfg, case)
    schedule = cfg.getlist("experiment", "eps_schedule")
    trace = conormal_decay(problem, schedule)
    if case.name == "counterexample_F":
        floor = float(np.min(trace.max_grad))
        checks = [
            ("no_decay_floor", floor >= 0.5, f"min max-grad={floor:.3f}"),
            ("no_decay_rate", trace.fitted_rate <= 0.1, f"rate={trace.fitted_rate:.3f}"),
        ]
    else:
        checks = [("decay_rate_positive", trace.fitted_rate >= 0.1,
                   f"rate={trace.fitted_rate:.3f}")]
    rows = [[e, g, f] for e, g, f in zip(trace.eps, trace.max_grad, trace.max_flux)]
    write_csv(out / "conormal.csv", ["eps", "max_grad", "max_flux"], rows)
    write_csv(out / "report.csv", ["check_id", "metric", "value"],
              [["conormal", "fitted_rate", trace.fitted_rate]])
    return checks


def run_frequency(cfg, out):
    case = build_case(cfg)
    problem = build_problem(cfg, case)
    result = solve_problem(problem)
    radii = _radii(cfg, result.grid.h)
    A = case.A.matrix
    prof = frequency_profile(result.u, result.grid, problem.weight, A, radii)
    kappa = case.kappa
    checks = []
    if case.name in ("radial_homogeneous", "anisotropic"):
        dev = float(np.max(np.abs(prof.N - kappa))) / kappa
        checks.append(("frequency_value", dev <= 0.05, f"max dev={dev:.3%} of {kappa}"))
    ident = check_derivative_identity(prof)
    checks.append(("derivative_identity", ident.passed, f"rel err={ident.max_rel_error:.3%}"))
    rows = [[r, e, hh, nn] for r, e, hh, nn in zip(prof.radii, prof.E, prof.H, prof.N)]
    write_csv(out / "frequency.csv", ["r", "E", "H", "N"], rows)
    write_csv(out / "report.csv", ["check_id", "metric", "value"],
              [["frequency", "identity_rel_error", ident.max_rel_error]])
    return checks


def run_liouville(cfg, out):
    case = build_case(cfg)
    problem = build_problem(cfg, case)
    kappa = case.kappa
    mode = cfg.get("experiment", "growth_data")
    if mode == "radial":
        data = case.u
    elif mode == "subcritical":
        gamma = kappa / 3.0
        d, n = case.d, case.n
        data = lambda z: np.linalg.norm(np.asarray(z)[..., d - n :], axis=-1) ** gamma
    elif mode == "zero":
        data = 0.0
    else:
        raise ConfigError(f"unknown growth_data mode {mode!r}")
    problem.f = None
    problem.F = None
    problem.g = data
    radii = _radii(cfg, build_grid(problem.grid).h)
    rec = growth_validator(problem, radii)
    if mode == "zero":
        checks = [("degenerate_zero_record", rec.degenerate, "H(r0)=0")]
    else:
        checks = [("growth_bound", rec.passed and not rec.degenerate,
                   f"min H/bound={float(np.min(rec.H / np.maximum(rec.bound, 1e-300))):.3f}")]
    rows = [[r, hh, bb] for r, hh, bb in zip(rec.radii, rec.H, rec.bound)]
    write_csv(out / "growth.csv", ["r", "H", "bound"], rows)
    write_csv(out / "report.csv", ["check_id", "metric", "value"],
              [["liouville", "degenerate", int(rec.degenerate)]])
    return checks


def run_inequalities(cfg, out):
    problem = build_problem(cfg)
    grid = build_grid(problem.grid)
    from .grid import classify_nodes

    mask = classify_nodes(grid, problem.shape, problem.eps, problem.ball_radius)
    fields = random_smooth_fields(
        grid, cfg.getint("experiment", "field_count"),
        seed=cfg.getint("experiment", "seed"), eps=problem.eps,
    )
    reports = inequality_battery(
        fields, grid, problem.weight, mask=mask,
        R=cfg.getfloat("experiment", "trace_radius"),
        sobolev_p=cfg.getfloat("experiment", "sobolev_p"),
    )
    finite = all(np.isfinite(r.ratio) and r.ratio > 0 for r in reports)
    checks = [("ratios_finite", finite, f"{len(reports)} ratios")]
    rows = [[r.inequality, r.field_id, r.lhs, r.rhs, r.ratio] for r in reports]
    write_csv(out / "inequalities.csv", ["inequality", "field", "lhs", "rhs", "ratio"], rows)
    maxima = {}
    for r in reports:
        maxima[r.inequality] = max(maxima.get(r.inequality, 0.0), r.ratio)
    write_csv(out / "report.csv", ["check_id", "metric", "value"],
              [["inequalities", f"max_ratio_{k}", v] for k, v in sorted(maxima.items())])
    return checks


def run_curved(cfg, out):
    d = cfg.getint("problem", "d")
    n = cfg.getint("problem", "n")
    a = cfg.getfloat("problem", "a")
    if d <= n:
        raise ConfigError("curved runs require d > n")
    kappa = 2.0 - a - n
    param = make_parametrization(
        cfg.get("experiment", "phi"), d, n,
        amplitude=cfg.getfloat("experiment", "phi_amplitude"),
        frequency=cfg.getfloat("experiment", "phi_frequency"),
    )
    st = Straightening(param)
    m = d - n

    def A_curved(pts):
        pts = np.asarray(pts, float)
        J = st.jacobian(pts[..., :m])
        return np.einsum("...ij,...kj->...ik", J, J)

    def straight_exact(z):
        z = np.asarray(z, float)
        return np.linalg.norm(z[..., m:], axis=-1) ** kappa

    from .grid import GridSpec

    gridspec = GridSpec(d, n, cfg.getint("grid", "nodes"),
                        bounds=(cfg.getfloat("grid", "lo"), cfg.getfloat("grid", "hi")))
    cp = CurvedProblem(
        grid=gridspec, a=a, param=param,
        A=CoefficientField(func=A_curved, name="shear-metric"),
        psi=(lambda x: np.zeros(len(np.atleast_2d(x)))),
        g_straight=straight_exact, delta=None,
        cg_tol=cfg.getfloat("solver", "tol"), cg_maxit=cfg.getint("solver", "maxit"),
    )
    push = push_problem(cp)
    result = solve_problem(push.problem)
    curved_grid = build_grid(gridspec)
    vals, ok = pullback_field(result.u, param, result.grid, curved_grid)
    exact = np.linalg.norm(
        curved_grid.coords[:, m:] - param.phi(curved_grid.coords[:, :m]), axis=1
    ) ** kappa
    sel = ok & (np.linalg.norm(curved_grid.coords, axis=1) <= 0.7)
    rel = float(np.linalg.norm((vals - exact)[sel]) / np.linalg.norm(exact[sel]))
    bands = cfg.getlist("experiment", "bands")
    prof = curved_bc_residual(vals, curved_grid, cp.A, None, param, bands)
    decreasing = bool(np.all(np.diff(prof.normal_residual) < 0))
    checks = [
        ("pullback_agreement", rel <= 0.05, f"rel L2={rel:.3%}"),
        ("normal_residual_decreasing", decreasing,
         f"{[float(round(v, 4)) for v in prof.normal_residual]}"),
        ("pushed_ellipticity", push.lam > 0, f"lam={push.lam:.3g} Lam={push.Lam:.3g}"),
    ]
    rows = [[r, nr, tr] for r, nr, tr in
            zip(prof.rho, prof.normal_residual, prof.tangential_residual)]
    write_csv(out / "curved.csv", ["band", "normal_residual", "tangential_residual"], rows)
    write_csv(out / "report.csv", ["check_id", "metric", "value"],
              [["curved", "pullback_rel_l2", rel],
               ["curved", "lambda_pushed", push.lam],
               ["curved", "Lambda_pushed", push.Lam]])
    return checks


def run_list_cases(out=None):
    lines = build_case_table()
    print("\n".join(lines))
    return []


WORKERS = {
    "solve": run_solve,
    "rates": run_rates,
    "sweep-eps": run_sweep_eps,
    "conormal": run_conormal,
    "frequency": run_frequency,
    "liouville": run_liouville,
    "inequalities": run_inequalities,
    "curved": run_curved,
}


# ---------------------------------------------------------------------------
# compare


def read_manifest(path):
    text = Path(path).read_text().splitlines()
    if not text or text[0] != "degenlab-manifest":
        raise ConfigError(f"{path} is not a manifest")
    meta = {}
    for line in text[1:]:
        if line.startswith("["):
            break
        k, _, v = line.partition(": ")
        meta[k] = v
    return meta


def compare_runs(dir_a, dir_b, tol=1e-12):
    """Per-metric deltas between two runs of the same subcommand.

    Returns (diff_rows, regressions); numeric CSV columns are compared
    entry-wise, and any delta above tol is a flagged regression.
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    ma = read_manifest(dir_a / "manifest.txt")
    mb = read_manifest(dir_b / "manifest.txt")
    if ma.get("subcommand") != mb.get("subcommand"):
        raise ConfigError(
            f"cannot compare different subcommands: {ma.get('subcommand')} vs {mb.get('subcommand')}"
        )
    diffs = []
    regressions = []
    for fa in sorted(dir_a.glob("*.csv")):
        fb = dir_b / fa.name
        if not fb.exists():
            regressions.append((fa.name, "missing in B"))
            continue
        ra = list(csv.reader(fa.read_text().splitlines()))
        rb = list(csv.reader(fb.read_text().splitlines()))
        if ra[0] != rb[0]:
            regressions.append((fa.name, "header mismatch"))
            continue
        if len(ra) != len(rb):
            regressions.append((fa.name, f"row count {len(ra)} vs {len(rb)}"))
            continue
        worst = 0.0
        for row_a, row_b in zip(ra[1:], rb[1:]):
            for col, (va, vb) in enumerate(zip(row_a, row_b)):
                try:
                    delta = abs(float(va) - float(vb))
                except ValueError:
                    if va != vb:
                        regressions.append((fa.name, f"text cell differs: {va!r} vs {vb!r}"))
                    continue
                worst = max(worst, delta)
        diffs.append((fa.name, worst))
        if worst > tol:
            regressions.append((fa.name, f"max delta {worst:.3e} > tol {tol:g}"))
    return diffs, regressions


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="degenlab",
        description="Numerical lab for elliptic problems with weights singular "
                    "on low-dimensional sets",
    )
    parser.add_argument("subcommand", choices=list(WORKERS) + ["list-cases", "compare"])
    parser.add_argument("paths", nargs="*", help="for compare: two run directories")
    parser.add_argument("--config", help="experiment config file")
    parser.add_argument("--out", default="degenlab_out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    parser.add_argument("--grid-nodes", type=int, default=None, help="override grid.nodes")
    parser.add_argument("--tol", type=float, default=1e-12, help="compare tolerance")
    args = parser.parse_args(argv)

    if args.subcommand == "list-cases":
        run_list_cases()
        return EXIT_OK

    if args.subcommand == "compare":
        try:
            if len(args.paths) != 2:
                raise ConfigError("compare needs exactly two run directories")
            diffs, regressions = compare_runs(args.paths[0], args.paths[1], tol=args.tol)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for name, worst in diffs:
            print(f"{name}: max delta {worst:.3e}")
        if regressions:
            for name, msg in regressions:
                print(f"REGRESSION {name}: {msg}")
            return EXIT_CHECK_FAILED
        print("no differences beyond tolerance")
        return EXIT_OK

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    cfg = None
    try:
        if not args.config:
            raise ConfigError("--config is required for this subcommand")
        overrides = []
        if args.seed is not None:
            overrides.append(("experiment", "seed", args.seed))
        if args.grid_nodes is not None:
            overrides.append(("grid", "nodes", args.grid_nodes))
        cfg = load_config(args.config, overrides)
        checks = WORKERS[args.subcommand](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        write_manifest(out / "manifest.txt", args.subcommand, cfg, [],
                       "config_error", time.perf_counter() - t0,
                       extra={"error": str(exc)})
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        write_manifest(out / "manifest.txt", args.subcommand, cfg, [],
                       "solver_error", time.perf_counter() - t0,
                       extra={"error": str(exc)})
        return EXIT_SOLVER

    failed = [c for c in checks if not c[1]]
    status = "check_failed" if failed else "ok"
    write_manifest(out / "manifest.txt", args.subcommand, cfg, checks, status,
                   time.perf_counter() - t0)
    for cid, passed, detail in checks:
        print(f"{cid}: {'pass' if passed else 'FAIL'} ({detail})")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(c[0] for c in failed)}",
              file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
