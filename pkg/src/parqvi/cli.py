"""Command-line front end.

    parqvi run <config> [--output-dir DIR] [--seed-count N] [--check all|none|a,b]
    parqvi verify <config> <dir> [--check ...]

Exit status: 0 when every enabled check passes, 2 on configuration or
shape errors, 3 on solver failure, 4 on a failed check.
"""
import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .constraints import TransformationMap, transform_diagnostics, trajectory_violation
from .evolution import catching_up_solve
from .exceptions import ConfigError, ParameterError, ParqviError
from .feedback import heat_solve
from .parameters import PdeParameter, ScalarParameter, SweepParameter, theta_distance
from .qvi import QviSolution, certify, cluster_solutions, fixed_point_solve, multi_seed_explore
from .scenarios import (build, load_config, read_table, state_header, theta_header, theta_table,
                        write_table)
from .semimonotone import growth_constants, monotonicity_probe
from .spaces import lp_h_norm

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
FEAS_TOL = 1e-8
# verify recomputes one Picard step from the stored trajectory; allow that
# step to land within this multiple of tol_fix
VERIFY_FIX_FACTOR = 100.0


def _err(msg):
    print(msg, file=sys.stderr)


# --- checks shared by run and verify ---------------------------------------------

def _feas_name(name):
    return {"scalar-example": "obstacle_feasibility", "sweep2d": "segment_feasibility",
            "gradient-pde": "gradient_feasibility"}[name]


def evaluate_checks(sc, sols, fix_tol=None):
    """Check outcomes for the primary solution ``sols[0]`` (and feasibility of
    every solution).  Returns ``{name: {"passed": bool, ...}}``."""
    cfg, pb = sc.config, sc.problem
    grid, metric = pb.grid, pb.metric
    sol = sols[0]
    fix_tol = pb.tol_fix if fix_tol is None else fix_tol
    out = {}
    worst, where = 0.0, None
    for i, s in enumerate(sols):
        v, node = trajectory_violation(pb.family, s.theta, s.u, 1)
        if node is not None and (where is None or v > worst):
            worst, where = v, (i, node)
    out[_feas_name(cfg.name)] = {
        "passed": bool(worst <= FEAS_TOL), "max_violation": worst, "tolerance": FEAS_TOL,
        "solution": None if where is None else where[0], "node": None if where is None else where[1]}
    gap = sol.history[-1] if sol.history else float("nan")
    out["fixed_point"] = {"passed": bool(gap <= fix_tol), "gap": gap, "tolerance": fix_tol}
    rep = sol.report
    out["theta_consistency"] = {"passed": bool(rep.theta_consistency <= pb.theta_tol),
                                "distance": rep.theta_consistency, "tolerance": pb.theta_tol}
    ok = bool(np.isfinite(rep.weak_residual) and rep.weak_residual <= pb.weak_tolerance)
    out["weak_residual"] = {"passed": ok, "value": rep.weak_residual,
                            "tolerance": pb.weak_tolerance, "n_tests": len(rep.weak_margins)}
    lam_u = pb.feedback(sol.u, grid)
    v0 = pb.family.violation(lam_u, 0, pb.u0)
    out["initial_admissibility"] = {"passed": bool(v0 <= FEAS_TOL), "violation": v0,
                                    "tolerance": FEAS_TOL}
    if cfg.name == "scalar-example":
        clusters, reps, sep = cluster_solutions([s.u for s in sols if s.converged],
                                                cfg.solver["cluster_tol"])
        distinct_seeds = len({round(c, 12) for c in sc.extras.get("seed_rates", [])})
        need = min(2, max(1, distinct_seeds))
        out["clusters"] = {"passed": bool(len(clusters) >= need), "count": len(clusters),
                           "required": need, "separation": sep if len(reps) > 1 else None,
                           "cluster_tol": cfg.solver["cluster_tol"]}
    elif cfg.name == "sweep2d":
        th = sol.theta
        Y = pb.feedback.Y
        outside = [k for k in range(grid.K + 1) if not Y.contains(th.zeta[k], 1e-12)]
        unit = float(np.max(np.abs(np.linalg.norm(th.a, axis=1) - 1)))
        out["zeta_in_Y"] = {"passed": bool(not outside and unit <= 1e-12),
                            "first_outside": outside[0] if outside else None, "unit_defect": unit}
    else:
        th = sol.theta
        h = pb.feedback.h_fn(metric.coordinates, 0.0, sol.u)
        bound = float(np.max(np.abs(pb.feedback.zeta0)) + grid.T * np.max(np.abs(h)))
        zmax = float(np.max(np.abs(th.zeta)))
        out["heat_bound"] = {"passed": bool(zmax <= bound * (1 + 1e-12)), "max_zeta": zmax,
                             "bound": bound}
        mono = monotonicity_probe(pb.operator, sol.u[grid.K // 2], metric, n_samples=200)
        out["monotonicity"] = {"passed": bool(mono >= -1e-10), "min_pairing": mono}
    return {k: v for k, v in out.items() if cfg.enabled(k)}


def diagnostics(sc, sol):
    pb = sc.problem
    grid, metric = pb.grid, pb.metric
    diag = {}
    bump = np.linspace(0, 1, grid.K + 1)[:, None] * 0.01
    try:
        theta_bar = pb.feedback(sol.u + bump, grid)
        d = theta_distance(sol.theta, theta_bar)
        eps = min(1.0, max(d, 1e-3))
        R0, s0, rho = transform_diagnostics(TransformationMap(pb.family), sol.theta, theta_bar,
                                            eps, grid, metric)
        diag.update({"R0": R0, "sigma0": s0, "rho": rho, "probe_distance": d, "probe_eps": eps})
    except ParqviError as err:
        diag["transform_error"] = str(err)
    diag.update(growth_constants(pb.operator, sol.u, grid, metric, n_samples=4))
    diag["c_V"] = metric.c_V
    return diag


# --- run ------------------------------------------------------------------------

def _overrides(args):
    ov = {}
    if getattr(args, "seed_count", None) is not None:
        ov[("solver", "seed_count")] = str(args.seed_count)
    if getattr(args, "check", None) is not None:
        ov[("checks", "enabled")] = args.check
    return ov


def _write_solution(outdir, sc, sol, stem="u", theta_stem="theta"):
    grid, metric = sc.problem.grid, sc.problem.metric
    name = sc.config.name
    write_table(outdir / f"{stem}.csv", state_header(name, metric.n), grid.nodes, sol.u)
    write_table(outdir / f"{theta_stem}.csv", theta_header(name, metric.n), grid.nodes,
                theta_table(name, sol.theta))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def cmd_run(args):
    try:
        cfg = load_config(args.config, _overrides(args))
        sc = build(cfg)
    except ConfigError as err:
        _err(f"config error: {err}")
        return EXIT_CONFIG
    outdir = Path(args.output_dir or cfg.output_dir or f"out/{cfg.name}")
    t0 = time.perf_counter()
    exploration = None
    try:
        if len(sc.seeds) >= 2:
            exploration = multi_seed_explore(sc.problem, sc.seeds, cfg.solver["cluster_tol"])
            sols = exploration.solutions
        else:
            sols = [fixed_point_solve(sc.problem, sc.seeds[0])]
    except ParqviError as err:
        _err(f"solver failure: {err}")
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0
    checks = evaluate_checks(sc, sols)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        _err(f"cannot create output directory {outdir}: {err}")
        return EXIT_CONFIG
    _write_solution(outdir, sc, sols[0])
    if len(sols) > 1:
        (outdir / "seeds").mkdir(exist_ok=True)
        for i, s in enumerate(sols):
            _write_solution(outdir / "seeds", sc, s, f"u_{i}", f"theta_{i}")
    sol = sols[0]
    report = {
        "scenario": cfg.name,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "history": sol.history,
        "damping": sol.damping,
        "residuals": sol.report.as_dict(),
        "checks": checks,
        "diagnostics": diagnostics(sc, sol),
        "seeds": [{"index": i, "converged": s.converged, "iterations": s.iterations,
                   "final_gap": s.history[-1], "certified": s.certified} for i, s in enumerate(sols)],
        "clusters": None if exploration is None else {
            "count": exploration.n_clusters, "members": exploration.clusters,
            "representatives": exploration.representatives,
            "separation": exploration.separation if exploration.n_clusters > 1 else None,
            "cluster_tol": cfg.solver["cluster_tol"]},
        "solve_seconds": elapsed,
    }
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2)
    meta = {"config": cfg.raw, "config_path": cfg.source, "checks_enabled": list(cfg.checks),
            "versions": {"parqvi": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__}}
    with open(outdir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    return _finish(checks, outdir)


def _finish(checks, where):
    failed = [k for k, v in checks.items() if not v["passed"]]
    for k in failed:
        detail = {kk: vv for kk, vv in checks[k].items() if kk != "passed"}
        _err(f"check {k} failed: {detail}")
    if failed:
        return EXIT_CHECK
    print(f"all {len(checks)} enabled checks passed ({where})")
    return EXIT_OK


# --- verify ---------------------------------------------------------------------

def _load_solution(sc, u_path, theta_path):
    cfg, pb = sc.config, sc.problem
    grid, metric = pb.grid, pb.metric
    t_u, u = read_table(u_path, state_header(cfg.name, metric.n))
    t_th, th = read_table(theta_path, theta_header(cfg.name, metric.n))
    shape = (grid.K + 1, metric.n)
    if u.shape != shape:
        raise ConfigError(f"{Path(u_path).name} has shape {u.shape}, config expects {shape}")
    if th.shape[0] != grid.K + 1:
        raise ConfigError(f"{Path(theta_path).name} has {th.shape[0]} rows, expected {grid.K + 1}")
    for t in (t_u, t_th):
        if np.max(np.abs(t - grid.nodes)) > 1e-12 * max(1.0, grid.T):
            raise ConfigError("time column does not match the configured grid")
    if cfg.name == "scalar-example":
        theta = ScalarParameter(th[:, 0], grid, pb.feedback.c0_slope)
    elif cfg.name == "sweep2d":
        fb = pb.feedback
        theta = SweepParameter(th[:, :2], fb.gamma, th[:, 2:], grid, fb.gamma_lo, fb.gamma_hi,
                               metric.p)
    else:
        if th.shape[1] != metric.n:
            raise ConfigError(f"theta table has {th.shape[1]} columns, expected {metric.n}")
        theta = PdeParameter(pb.feedback.gamma, th, grid, pb.feedback.eps0)
    return u, theta


def _recheck(sc, u, theta):
    pb = sc.problem
    lam = pb.feedback(u, pb.grid)
    nxt = catching_up_solve(lam, pb.family, pb.operator, u, pb.f, pb.u0, pb.mode, pb.grid, pb.metric)
    gap = lp_h_norm(nxt - u, pb.grid, pb.metric)
    sol = QviSolution(u=u, theta=theta, history=[gap], converged=gap <= VERIFY_FIX_FACTOR * pb.tol_fix,
                      damping=1.0)
    certify(pb, sol)
    return sol


def cmd_verify(args):
    try:
        cfg = load_config(args.config, _overrides(args))
        sc = build(cfg)
    except ConfigError as err:
        _err(f"config error: {err}")
        return EXIT_CONFIG
    d = Path(args.solution_dir)
    pairs = [(d / "u.csv", d / "theta.csv")]
    seed_dir = d / "seeds"
    i = 0
    while (seed_dir / f"u_{i}.csv").exists():
        pairs.append((seed_dir / f"u_{i}.csv", seed_dir / f"theta_{i}.csv"))
        i += 1
    sols = []
    try:
        for up, tp in pairs:
            if not up.exists() or not tp.exists():
                raise ConfigError(f"missing artifact {up if not up.exists() else tp}")
            u, theta = _load_solution(sc, up, tp)
            sols.append(_recheck(sc, u, theta))
    except ConfigError as err:
        _err(f"config error: {err}")
        return EXIT_CONFIG
    except ParameterError as err:
        _err(f"stored parameter invalid: {err}")
        return EXIT_CHECK
    except ValueError as err:
        _err(f"cannot parse artifacts: {err}")
        return EXIT_CONFIG
    except ParqviError as err:
        _err(f"solver failure during verification: {err}")
        return EXIT_SOLVER
    # the primary file duplicates seed 0 when seeds are stored
    checks = evaluate_checks(sc, sols, fix_tol=VERIFY_FIX_FACTOR * sc.problem.tol_fix)
    return _finish(checks, d)


def build_parser():
    ap = argparse.ArgumentParser(prog="parqvi", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--check", help="all, none, or a comma-separated list of checks")
    common.add_argument("--seed-count", type=int, dest="seed_count")
    common.add_argument("--output-dir", dest="output_dir")
    r = sub.add_parser("run", parents=[common], help="solve a scenario and write artifacts")
    r.add_argument("config")
    v = sub.add_parser("verify", parents=[common], help="re-check stored artifacts")
    v.add_argument("config")
    v.add_argument("solution_dir")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
