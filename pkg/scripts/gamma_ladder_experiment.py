#!/usr/bin/env python3
"""Grid-refinement experiment: how fast do grid solutions stabilize?

Builds a noiseless piecewise-linear + periodic truth, samples it, then
solves the TV problem on a dyadic ladder of grids and reports objectives,
inter-grid sup-norm differences, and certificate status per rung.  Use
--csv to keep the table for plotting.
"""

import argparse
import pathlib
import sys

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from seasonal_spline import (  # noqa: E402
    GridSpec,
    GroundTruth,
    LadderProblem,
    Sampling,
    SolverConfig,
    derivative,
    run_gamma_ladder,
    simulate,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rungs", type=int, default=5,
                        help="number of dyadic rungs starting at h=1/8")
    parser.add_argument("--lam", type=float, default=0.05,
                        help="regularization weight for both components")
    parser.add_argument("--sigma", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--csv", type=pathlib.Path, default=None)
    args = parser.parse_args()

    truth = GroundTruth(
        trend_op=derivative(2), seasonal_op=derivative(2, "seasonal"),
        trend_knots=[0.37, 0.71], trend_weights=[2.0, -3.0],
        poly_coefs=[0.1, 0.4],
        seasonal_knots=[0.21, 0.58, 0.86], seasonal_weights=[1.2, -0.5, -0.7])
    xs = np.array([0.03, 0.12, 0.24, 0.31, 0.42, 0.55,
                   0.61, 0.72, 0.81, 0.9, 0.96, 1.0])
    plan = [Sampling(float(x)) for x in xs]
    y, _ = simulate(truth, plan, args.sigma, args.seed)

    cfg = SolverConfig(lambda_t=args.lam, lambda_s=args.lam,
                       tol_kkt=1e-8, tol_obj=1e-12)
    problem = LadderProblem(trend_op=derivative(2),
                            seasonal_op=derivative(2, "seasonal"),
                            plan=plan, y=y, lambda_t=args.lam,
                            lambda_s=args.lam, solver=cfg)
    grids = [GridSpec(h_t=1.0 / m, t_lo=0.0, t_hi=1.0,
                      margin=int(round(0.5 * m)), n_s=m)
             for m in (8 * 2**k for k in range(args.rungs))]
    report = run_gamma_ladder(problem, grids, (0.0, 1.0))

    print(f"{'h':>10} {'n_S':>5} {'objective':>14} {'kkt':>5} "
          f"{'sup dT':>10} {'sup dS':>10} {'time':>7}")
    for i, rung in enumerate(report.rungs):
        d_t = f"{report.sup_diff_trend[i - 1]:.2e}" if i else "-"
        d_s = f"{report.sup_diff_seasonal[i - 1]:.2e}" if i else "-"
        print(f"{rung.h_t:>10.5f} {rung.n_s:>5} {rung.objective:>14.9f} "
              f"{str(not rung.failed):>5} {d_t:>10} {d_s:>10} "
              f"{rung.wall_time:>6.2f}s")
    print(f"nested={report.nested} monotone={report.monotone} "
          f"l1 bound={report.l1_bound:.2f}")
    if args.csv is not None:
        report.to_csv(args.csv)
        print(f"wrote {args.csv}")
    return 0 if report.all_kkt_ok else 3


if __name__ == "__main__":
    sys.exit(main())
