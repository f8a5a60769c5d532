"""Command-line front end: fit, quadratic, converge, simulate.

Each command reads a single JSON config, writes its artifacts atomically
into --out, and reports through the exit code: 0 success, 2 config or
validation failure, 3 numeric failure (artifacts are still written when
a best iterate exists).
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import quadratic as quad
from .config import (
    _check_keys,
    _number,
    load_json,
    parse_grid,
    parse_operators,
    parse_plan_and_y,
    parse_solver,
    write_atomic,
)
from .dictionary import GridSpec, assemble, build_dictionary, evaluate_solution
from .errors import (
    ConvergenceError,
    SeasonalSplineError,
    ValidationError,
)
from .harness import (
    GroundTruth,
    LadderProblem,
    run_gamma_ladder,
    simulate,
)
from .sensing import Sampling, plan_from_json, plan_to_json
from .tv import extract_support, kkt_check, solve_tv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _evaluation_csv(t, f_t, f_s) -> str:
    buf = io.StringIO()
    buf.write("t,f_T,f_S,f\n")
    for ti, a, b in zip(t, f_t, f_s):
        buf.write(f"{float(ti)!r},{float(a)!r},{float(b)!r},{float(a + b)!r}\n")
    return buf.getvalue()


def cmd_fit(cfg, out_dir, probe_points, base_dir="."):
    _check_keys(cfg, "config",
                required=("operators", "lambda_t", "lambda_s", "grid"),
                optional=("data", "plan", "y", "solver", "probe_points",
                          "support_eta"))
    trend, seasonal = parse_operators(cfg["operators"])
    lam_t = _number(cfg, "lambda_t", "config", positive=True)
    lam_s = _number(cfg, "lambda_s", "config", positive=True)
    grid = parse_grid(cfg["grid"])
    plan, y = parse_plan_and_y(cfg, base_dir=base_dir)
    solver = parse_solver(cfg.get("solver"), lam_t, lam_s)
    probe_points = probe_points or cfg.get("probe_points", 513)
    eta = cfg.get("support_eta", 1e-3)

    dictionary = build_dictionary(trend, seasonal, grid)
    design = assemble(dictionary, plan)
    exit_code = EXIT_OK
    try:
        sol = solve_tv(design, y, solver)
    except ConvergenceError as err:
        sol = err.solution
        exit_code = EXIT_NUMERIC
        print(f"fit: {err}", file=sys.stderr)
    report = kkt_check(sol, design, y, solver)
    support = extract_support(sol, eta)
    if not report.ok and exit_code == EXIT_OK:
        exit_code = EXIT_NUMERIC

    write_atomic(os.path.join(out_dir, "solution.json"),
                 json.dumps(sol.to_json(kkt=report, support=support), indent=2))
    write_atomic(os.path.join(out_dir, "kkt.json"),
                 json.dumps(report.to_json(), indent=2))
    t = np.linspace(grid.t_lo, grid.t_hi, int(probe_points))
    f_t, f_s = evaluate_solution(dictionary, sol, t)
    write_atomic(os.path.join(out_dir, "evaluation.csv"),
                 _evaluation_csv(t, f_t, f_s))
    return exit_code


def cmd_quadratic(cfg, out_dir, probe_points, base_dir="."):
    _check_keys(cfg, "config",
                required=("operators", "lambda"),
                optional=("data", "plan", "y", "kernel", "probe_points",
                          "probe_window", "debug_gram"))
    trend, seasonal = parse_operators(cfg["operators"])
    lam = _number(cfg, "lambda", "config", positive=True)
    plan, y = parse_plan_and_y(cfg, base_dir=base_dir)
    kcfg = cfg.get("kernel") or {}
    _check_keys(kcfg, "kernel", required=(),
                optional=("m_terms", "tail_tol", "spatial_range"))
    kernels = quad.build_kernel_pair(
        trend, seasonal,
        m_terms=kcfg.get("m_terms", 2048),
        tail_tol=kcfg.get("tail_tol", 1e-6),
        spatial_range=kcfg.get("spatial_range", 16.0),
    )
    if "debug_gram" in cfg:
        g = np.asarray(cfg["debug_gram"], dtype=float)
        if g.shape != (len(plan), len(plan)):
            raise ValidationError("debug_gram shape does not match the plan")
    else:
        g = quad.gram(plan, kernels)
    alpha = quad.solve_quadratic(g, y, lam)
    resid = float(np.linalg.norm(y - (g + lam * np.eye(len(plan))) @ alpha))
    rel = resid / max(float(np.linalg.norm(y)), 1e-300)

    probe_points = probe_points or cfg.get("probe_points", 513)
    window = cfg.get("probe_window")
    if window is None:
        xs = [phi.x for phi in plan if isinstance(phi, Sampling)]
        lo = min(xs) if xs else 0.0
        hi = max(xs) if xs else 1.0
        window = [lo, max(hi, lo + 1.0)]
    t = np.linspace(float(window[0]), float(window[1]), int(probe_points))
    f_t, f_s = quad.evaluate_quadratic(alpha, plan, kernels, t)
    out = {
        "schema": "v1",
        "alpha": alpha.tolist(),
        "lambda": lam,
        "relative_residual": rel,
        "gram_trace": float(np.trace(g)),
        "plan": plan_to_json(plan),
        "seasonal_spread": float(f_s.max() - f_s.min()),
    }
    write_atomic(os.path.join(out_dir, "quadratic.json"), json.dumps(out, indent=2))
    write_atomic(os.path.join(out_dir, "evaluation.csv"),
                 _evaluation_csv(t, f_t, f_s))
    return EXIT_OK


def cmd_converge(cfg, out_dir, base_dir="."):
    _check_keys(cfg, "config",
                required=("operators", "lambda_t", "lambda_s", "ladder",
                          "window", "probe"),
                optional=("data", "plan", "y", "solver", "margin_len",
                          "nested", "monotone_slack"))
    trend, seasonal = parse_operators(cfg["operators"])
    lam_t = _number(cfg, "lambda_t", "config", positive=True)
    lam_s = _number(cfg, "lambda_s", "config", positive=True)
    plan, y = parse_plan_and_y(cfg, base_dir=base_dir)
    solver = parse_solver(cfg.get("solver"), lam_t, lam_s)
    window = cfg["window"]
    if not isinstance(window, list) or len(window) != 2:
        raise ValidationError("config.window must be [lo, hi]")
    margin_len = cfg.get("margin_len", 2.0)
    ladder_cfg = cfg["ladder"]
    if not isinstance(ladder_cfg, list) or len(ladder_cfg) < 2:
        raise ValidationError("config.ladder must list at least two rungs")
    grids = []
    for i, rung in enumerate(ladder_cfg):
        _check_keys(rung, f"ladder[{i}]", required=("h_t", "n_s"))
        h_t = _number(rung, "h_t", f"ladder[{i}]", positive=True)
        n_s = rung["n_s"]
        if not isinstance(n_s, int) or n_s < 1:
            raise ValidationError(f"ladder[{i}].n_s must be a positive integer")
        grids.append(GridSpec(h_t=h_t, t_lo=float(window[0]),
                              t_hi=float(window[1]),
                              margin=int(round(margin_len / h_t)), n_s=n_s))
    probe = cfg["probe"]
    if not isinstance(probe, list) or len(probe) != 2:
        raise ValidationError("config.probe must be [a, b]")
    problem = LadderProblem(trend_op=trend, seasonal_op=seasonal, plan=plan,
                            y=y, lambda_t=lam_t, lambda_s=lam_s, solver=solver)
    report = run_gamma_ladder(
        problem, grids, (float(probe[0]), float(probe[1])),
        nested=cfg.get("nested"),
        monotone_slack=cfg.get("monotone_slack", 1e-9),
    )
    write_atomic(os.path.join(out_dir, "convergence.json"),
                 json.dumps(report.to_json(), indent=2))
    csv_path = os.path.join(out_dir, "convergence.csv")
    os.makedirs(out_dir, exist_ok=True)
    report.to_csv(csv_path)
    ok = report.all_kkt_ok and (not report.nested or report.monotone)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_simulate(cfg, out_dir, seed_override=None, base_dir="."):
    _check_keys(cfg, "config",
                required=("operators", "truth", "plan", "sigma", "seed"))
    trend, seasonal = parse_operators(cfg["operators"])
    tcfg = cfg["truth"]
    _check_keys(tcfg, "truth",
                required=("trend_knots", "trend_weights", "poly",
                          "seasonal_knots", "seasonal_weights"),
                optional=("alpha",))
    truth = GroundTruth(
        trend_op=trend, seasonal_op=seasonal,
        trend_knots=tcfg["trend_knots"], trend_weights=tcfg["trend_weights"],
        poly_coefs=tcfg["poly"],
        seasonal_knots=tcfg["seasonal_knots"],
        seasonal_weights=tcfg["seasonal_weights"],
        alpha=tcfg.get("alpha", 0.0),
    )
    plan = plan_from_json(cfg["plan"])
    sigma = _number(cfg, "sigma", "config")
    if sigma < 0:
        raise ValidationError("config.sigma must be nonnegative")
    seed = seed_override if seed_override is not None else cfg["seed"]
    if not isinstance(seed, int):
        raise ValidationError("config.seed must be an integer")
    y, clean = simulate(truth, plan, sigma, seed)

    if all(isinstance(phi, Sampling) for phi in plan):
        buf = io.StringIO()
        buf.write("t,y\n")
        for phi, yi in zip(plan, y):
            buf.write(f"{float(phi.x)!r},{float(yi)!r}\n")
        write_atomic(os.path.join(out_dir, "dataset.csv"), buf.getvalue())
    else:
        write_atomic(os.path.join(out_dir, "dataset.json"), json.dumps({
            "plan": plan_to_json(plan), "y": y.tolist()}, indent=2))
    write_atomic(os.path.join(out_dir, "truth.json"), json.dumps({
        "schema": "v1",
        "truth": tcfg,
        "sigma": sigma,
        "seed": seed,
        "clean_measurements": clean.tolist(),
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seasonal-spline",
        description="Seasonal-trend reconstruction via TV or kernel regularization",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "quadratic", "converge", "simulate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        if name in ("fit", "quadratic"):
            p.add_argument("--probe-points", type=int, default=None)
        if name == "simulate":
            p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_json(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        if args.command == "fit":
            return cmd_fit(cfg, args.out, args.probe_points, base_dir=base_dir)
        if args.command == "quadratic":
            return cmd_quadratic(cfg, args.out, args.probe_points,
                                 base_dir=base_dir)
        if args.command == "converge":
            return cmd_converge(cfg, args.out, base_dir=base_dir)
        return cmd_simulate(cfg, args.out, seed_override=args.seed,
                            base_dir=base_dir)
    except ValidationError as err:
        print(f"{args.command}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SeasonalSplineError as err:
        print(f"{args.command}: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
