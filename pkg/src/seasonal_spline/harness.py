"""Synthetic truths, measure discretization, and grid-refinement ladders.

The measure-discretization operator bins the mass of each grid cell onto
its left endpoint, which never increases total variation and pairs with
continuous test functions up to a modulus-of-continuity error.  The
ladder runner solves the TV problem on a refining sequence of grids and
records objectives, certificates, and inter-grid sup-norm differences so
convergence toward the continuous-domain problem can be checked
empirically.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .atoms import ConstantAtom, MonomialAtom, SeasonalGreenAtom, TrendGreenAtom
from .dictionary import GridSpec, assemble, build_dictionary, evaluate_solution
from .errors import ConvergenceError, ValidationError
from .operators import OperatorSpec, PeriodicGreen, admissibility_order
from .sensing import apply_to_seasonal_atom, apply_to_trend_atom
from .tv import KktReport, SolverConfig, kkt_check, solve_tv


# --------------------------------------------------------------------------
# measures


@dataclass(eq=False)
class AtomicMeasure:
    """Finite atomic measure on the line or the circle.

    Locations are merged on construction (circle locations mod 1) and
    exact-zero weights dropped, so the TV norm is just sum(|weights|).
    """

    locations: np.ndarray
    weights: np.ndarray
    domain: str = "line"

    def __post_init__(self):
        if self.domain not in ("line", "circle"):
            raise ValidationError(f"unknown measure domain {self.domain!r}")
        loc = np.asarray(self.locations, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if loc.shape != wts.shape:
            raise ValidationError("locations and weights must have equal length")
        if self.domain == "circle":
            loc = loc % 1.0
        merged = {}
        for x, w in zip(loc, wts):
            merged[x] = merged.get(x, 0.0) + w
        pairs = sorted((x, w) for x, w in merged.items() if w != 0.0)
        self.locations = np.array([p[0] for p in pairs], dtype=float)
        self.weights = np.array([p[1] for p in pairs], dtype=float)

    @property
    def tv_norm(self) -> float:
        # exactly rounded so merging order cannot perturb the value
        return math.fsum(np.abs(self.weights))

    def pair_with(self, g) -> float:
        """<w, g> for a callable test function."""
        if self.locations.size == 0:
            return 0.0
        return float(np.asarray(g(self.locations), dtype=float) @ self.weights)


@dataclass(eq=False)
class TabulatedDensity:
    """Density samples on a uniform grid, treated as a left-Riemann measure."""

    points: np.ndarray
    values: np.ndarray
    domain: str = "line"

    def as_atomic(self) -> AtomicMeasure:
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if pts.size < 2:
            raise ValidationError("need at least two density samples")
        step = pts[1] - pts[0]
        return AtomicMeasure(pts, vals * step, domain=self.domain)


def discretize_measure(w, h: float) -> AtomicMeasure:
    """Bin the mass of each cell [kh, (k+1)h) onto its left endpoint.

    The TV norm of the output never exceeds that of the input (triangle
    inequality on each cell); on the circle 1/h must be an integer.
    """
    if isinstance(w, TabulatedDensity):
        w = w.as_atomic()
    if not h > 0:
        raise ValidationError("h must be positive")
    if w.domain == "circle":
        n = 1.0 / h
        if abs(n - round(n)) > 1e-9:
            raise ValidationError("1/h must be an integer on the circle")
    if w.locations.size == 0:
        return AtomicMeasure(np.array([]), np.array([]), domain=w.domain)
    cells = np.floor(w.locations / h + 1e-12)
    return AtomicMeasure(cells * h, w.weights.copy(), domain=w.domain)


# --------------------------------------------------------------------------
# ground truth and simulation


@dataclass(eq=False)
class GroundTruth:
    """A composite spline signal respecting the case-flag conventions."""

    trend_op: OperatorSpec
    seasonal_op: OperatorSpec
    trend_knots: np.ndarray
    trend_weights: np.ndarray
    poly_coefs: np.ndarray
    seasonal_knots: np.ndarray
    seasonal_weights: np.ndarray
    alpha: float = 0.0
    _green: PeriodicGreen = field(init=False, repr=False)

    def __post_init__(self):
        self.trend_knots = np.asarray(self.trend_knots, dtype=float)
        self.trend_weights = np.asarray(self.trend_weights, dtype=float)
        self.poly_coefs = np.asarray(self.poly_coefs, dtype=float)
        self.seasonal_knots = np.asarray(self.seasonal_knots, dtype=float)
        self.seasonal_weights = np.asarray(self.seasonal_weights, dtype=float)
        n_t = admissibility_order(self.trend_op)
        n_s = admissibility_order(self.seasonal_op)
        if self.poly_coefs.size != n_t:
            raise ValidationError(
                f"polynomial block must have length N_T = {n_t}"
            )
        zero_sum_required = n_t >= 1 or n_s >= 1
        s = float(self.seasonal_weights.sum())
        if zero_sum_required and abs(s) > 1e-9 * max(
                1.0, float(np.abs(self.seasonal_weights).sum())):
            raise ValidationError(
                "seasonal weights must sum to zero under this operator pair"
            )
        if self.alpha != 0.0 and not (n_t == 0 and n_s >= 1):
            raise ValidationError(
                "a seasonal constant offset is only allowed when N_T = 0 "
                "and N_S >= 1"
            )
        self._green = PeriodicGreen(self.seasonal_op)

    def atoms(self):
        trend = [(float(w), TrendGreenAtom(self.trend_op, float(u)))
                 for u, w in zip(self.trend_knots, self.trend_weights)]
        trend += [(float(cm), MonomialAtom(m))
                  for m, cm in enumerate(self.poly_coefs)]
        seasonal = [(float(w), SeasonalGreenAtom(self._green, float(v)))
                    for v, w in zip(self.seasonal_knots, self.seasonal_weights)]
        if self.alpha != 0.0:
            seasonal.append((self.alpha, ConstantAtom()))
        return trend, seasonal

    def evaluate(self, t):
        """(f_T(t), f_S(t)), vectorized."""
        t = np.asarray(t, dtype=float)
        trend, seasonal = self.atoms()
        f_t = np.zeros_like(t, dtype=float)
        for w, atom in trend:
            f_t = f_t + w * atom.eval(t)
        f_s = np.zeros_like(t, dtype=float)
        for w, atom in seasonal:
            f_s = f_s + w * atom.eval(t)
        return f_t, f_s


def measure_truth(truth: GroundTruth, plan) -> np.ndarray:
    """Exact noiseless measurements Phi(f_T + f_S)."""
    trend, seasonal = truth.atoms()
    y = np.zeros(len(plan))
    for i, phi in enumerate(plan):
        acc = 0.0
        for w, atom in trend:
            acc += w * apply_to_trend_atom(phi, atom)
        for w, atom in seasonal:
            acc += w * apply_to_seasonal_atom(phi, atom)
        y[i] = acc
    return y


def simulate(truth: GroundTruth, plan, sigma: float, seed: int):
    """Noisy measurements y = Phi(f) + sigma * g with seeded Gaussian g.

    Returns (y, clean) where clean are the exact measurements; the same
    seed reproduces y bitwise.
    """
    if sigma < 0:
        raise ValidationError("noise level must be nonnegative")
    clean = measure_truth(truth, plan)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(plan))
    return clean + sigma * noise, clean


# --------------------------------------------------------------------------
# gamma ladder


@dataclass(eq=False)
class LadderProblem:
    """A fixed problem instance solved across a refinement ladder."""

    trend_op: OperatorSpec
    seasonal_op: OperatorSpec
    plan: list
    y: np.ndarray
    lambda_t: float
    lambda_s: float
    solver: SolverConfig | None = None

    def config(self) -> SolverConfig:
        if self.solver is not None:
            return self.solver
        return SolverConfig(lambda_t=self.lambda_t, lambda_s=self.lambda_s)


@dataclass(eq=False)
class RungResult:
    h_t: float
    n_s: int
    objective: float
    kkt: KktReport | None
    failed: bool
    message: str
    wall_time: float
    l1_norm: float
    lipschitz_estimate: float
    solution: object = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "h_t": self.h_t,
            "n_s": self.n_s,
            "objective": self.objective,
            "kkt": self.kkt.to_json() if self.kkt is not None else None,
            "failed": self.failed,
            "message": self.message,
            "wall_time": self.wall_time,
            "l1_norm": self.l1_norm,
            "lipschitz_estimate": self.lipschitz_estimate,
        }


@dataclass(eq=False)
class ConvergenceReport:
    """Per-grid objectives, sup-norm differences, and certificates."""

    rungs: list
    sup_diff_trend: list
    sup_diff_seasonal: list
    nested: bool
    monotone: bool
    probe_points: int
    l1_bound: float
    all_kkt_ok: bool

    def to_json(self) -> dict:
        return {
            "schema": "v1",
            "rungs": [r.to_json() for r in self.rungs],
            "sup_diff_trend": self.sup_diff_trend,
            "sup_diff_seasonal": self.sup_diff_seasonal,
            "nested": self.nested,
            "monotone": self.monotone,
            "probe_points": self.probe_points,
            "l1_bound": self.l1_bound,
            "all_kkt_ok": self.all_kkt_ok,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "h_t", "n_s", "objective", "kkt_ok", "failed", "wall_time",
                "l1_norm", "lipschitz_estimate",
                "sup_diff_trend_prev", "sup_diff_seasonal_prev",
            ])
            for i, r in enumerate(self.rungs):
                writer.writerow([
                    r.h_t, r.n_s, r.objective,
                    "" if r.kkt is None else r.kkt.ok,
                    r.failed, r.wall_time, r.l1_norm, r.lipschitz_estimate,
                    "" if i == 0 else self.sup_diff_trend[i - 1],
                    "" if i == 0 else self.sup_diff_seasonal[i - 1],
                ])


def _grids_nested(grids) -> bool:
    for coarse, fine in zip(grids[:-1], grids[1:]):
        ck, fk = coarse.trend_knots(), fine.trend_knots()
        if not np.all(np.isclose(
                ck[:, None], fk[None, :], rtol=0.0, atol=1e-9).any(axis=1)):
            return False
        if fine.n_s % coarse.n_s != 0:
            return False
    return True


def _trend_lipschitz(dictionary, window, a, c) -> float:
    # ||a||_1 * Lip(psi on the window) + ||c||_2 * monomial Lipschitz bound
    n = dictionary.n_poly
    lo, hi = window
    if n >= 2:
        span = hi - float(dictionary.trend_knots.min())
        lip_psi = max(span, 0.0) ** (n - 2) / math.factorial(n - 2)
    elif n == 1:
        lip_psi = 0.0
    else:
        lip_psi = float("nan")
    lip_poly = 0.0
    scale = max(abs(lo), abs(hi), 1.0)
    for m in range(n):
        lip_poly += (m * scale ** max(m - 1, 0)) ** 2
    return (float(np.abs(a).sum()) * lip_psi
            + float(np.linalg.norm(c)) * math.sqrt(lip_poly))


def _probe_grid(lo, hi, base_points, knot_sets, h_fine):
    probe = [np.linspace(lo, hi, base_points)]
    offsets = np.array([-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0]) * h_fine
    for knots in knot_sets:
        for u in knots:
            probe.append(np.clip(u + offsets, lo, hi))
    return np.unique(np.concatenate(probe))


def run_gamma_ladder(problem: LadderProblem, grids, probe,
                     base_points: int = 2048, nested: bool | None = None,
                     monotone_slack: float = 1e-9,
                     max_workers: int | None = None) -> ConvergenceReport:
    """Solve the problem on every rung and compare across grids.

    ``grids`` is a refining list of GridSpec; ``probe`` the interval
    [a, b] on which trend sup-norm differences of consecutive rungs are
    measured (the seasonal component is probed over one period).  A rung
    that fails to converge is recorded and the ladder continues.  When the
    grids are nested the report checks that objectives are non-increasing
    within ``monotone_slack`` (feasible sets only grow).
    """
    if len(grids) < 2:
        raise ValidationError("a ladder needs at least two rungs")
    for g in grids:
        if not isinstance(g, GridSpec):
            raise ValidationError("ladder rungs must be GridSpec instances")
    steps = [g.h_t for g in grids]
    if any(b >= a for a, b in zip(steps[:-1], steps[1:])):
        raise ValidationError("ladder must strictly refine h_t")
    if nested is None:
        nested = _grids_nested(grids)
    cfg = problem.config()
    y = np.asarray(problem.y, dtype=float)
    lo, hi = float(probe[0]), float(probe[1])

    if max_workers is None:
        max_workers = int(os.environ.get("SEASONAL_SPLINE_THREADS", "1") or "1")

    def solve_rung(grid):
        start = time.perf_counter()
        d = build_dictionary(problem.trend_op, problem.seasonal_op, grid)
        design = assemble(d, problem.plan)
        failed, message, report = False, "", None
        try:
            sol = solve_tv(design, y, cfg)
            report = kkt_check(sol, design, y, cfg)
            failed = not report.ok
            if failed:
                message = "KKT certificate failed"
        except ConvergenceError as err:
            sol = err.solution
            report = err.report
            failed = True
            message = str(err)
        elapsed = time.perf_counter() - start
        l1 = float(np.abs(sol.a).sum() + np.abs(sol.b).sum())
        lip = _trend_lipschitz(d, (lo, hi), sol.a, sol.c)
        return RungResult(
            h_t=grid.h_t, n_s=grid.n_s, objective=sol.objective, kkt=report,
            failed=failed, message=message, wall_time=elapsed, l1_norm=l1,
            lipschitz_estimate=lip, solution=sol,
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rungs = list(pool.map(solve_rung, grids))
    else:
        rungs = [solve_rung(g) for g in grids]

    active_knots = [
        r.solution.dictionary.trend_knots[r.solution.a != 0.0] for r in rungs
    ]
    t_probe = _probe_grid(lo, hi, base_points, active_knots, grids[-1].h_t)
    s_active = [
        r.solution.dictionary.seasonal_knots[r.solution.b != 0.0] for r in rungs
    ]
    s_probe = _probe_grid(0.0, 1.0, base_points, s_active, 1.0 / grids[-1].n_s)

    sup_t, sup_s = [], []
    for prev, cur in zip(rungs[:-1], rungs[1:]):
        ft0, fs0 = evaluate_solution(prev.solution.dictionary, prev.solution, t_probe)
        ft1, fs1 = evaluate_solution(cur.solution.dictionary, cur.solution, t_probe)
        gs0 = evaluate_solution(prev.solution.dictionary, prev.solution, s_probe)[1]
        gs1 = evaluate_solution(cur.solution.dictionary, cur.solution, s_probe)[1]
        sup_t.append(float(np.max(np.abs(ft1 - ft0))))
        sup_s.append(float(np.max(np.abs(gs1 - gs0))))

    monotone = True
    if nested:
        for prev, cur in zip(rungs[:-1], rungs[1:]):
            if cur.objective > prev.objective + monotone_slack * max(
                    1.0, abs(prev.objective)):
                monotone = False
                break
    l1_bound = float(y @ y) / min(cfg.lambda_t, cfg.lambda_s)
    return ConvergenceReport(
        rungs=rungs,
        sup_diff_trend=sup_t,
        sup_diff_seasonal=sup_s,
        nested=nested,
        monotone=monotone,
        probe_points=int(t_probe.size),
        l1_bound=l1_bound,
        all_kkt_ok=all(not r.failed for r in rungs),
    )


def report_to_json_str(report: ConvergenceReport) -> str:
    return json.dumps(report.to_json(), indent=2)
