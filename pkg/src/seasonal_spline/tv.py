"""Accelerated proximal-gradient solver for the discretized TV problem.

Minimizes ``||y - A x||^2 + lambda_T ||a||_1 + lambda_S ||b||_1`` over the
coefficient blocks x = (a, c, b, alpha), with the additional linear
constraint sum(b) = 0 whenever the dictionary case requires it.  The
smooth quadratic plus block-separable proximable terms (including the
coupled zero-sum l1 prox on the seasonal block) fit FISTA with
function-value restart exactly; a plain proximal step is substituted
whenever the accelerated candidate would increase the objective, which
keeps the recorded objective sequence non-increasing.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Case, DesignMatrix, Dictionary
from .errors import ConvergenceError, IllPosedError, ValidationError


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters; the defaults suit desk-scale problems."""

    lambda_t: float
    lambda_s: float
    max_iters: int = 200_000
    tol_obj: float = 1e-10        # relative decrease over `window` iterations
    tol_kkt: float = 1e-6
    window: int = 50
    step_rule: str = "power"      # "power" (fixed 1/L) or "backtracking"
    restart: bool = True
    deterministic: bool = True    # fixed power-iteration start, no RNG anywhere
    check_every: int = 25
    power_iters: int = 20
    power_tol: float = 1e-10

    def __post_init__(self):
        if not (self.lambda_t > 0 and self.lambda_s > 0):
            raise ValidationError("regularization weights must be positive")
        if not (self.tol_obj > 0 and self.tol_kkt > 0):
            raise ValidationError("tolerances must be positive")
        if self.step_rule not in ("power", "backtracking"):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")


@dataclass(eq=False)
class KktReport:
    """First-order optimality certificate of the finite convex program."""

    trend_inactive_excess: float
    seasonal_inactive_excess: float
    active_residual: float
    seasonal_shift: float
    smooth_grad_norm: float
    zero_sum_residual: float
    ok: bool
    tol: float

    def to_json(self) -> dict:
        return {
            "trend_inactive_excess": self.trend_inactive_excess,
            "seasonal_inactive_excess": self.seasonal_inactive_excess,
            "active_residual": self.active_residual,
            "seasonal_shift": self.seasonal_shift,
            "smooth_grad_norm": self.smooth_grad_norm,
            "zero_sum_residual": self.zero_sum_residual,
            "ok": self.ok,
            "tol": self.tol,
        }


@dataclass(eq=False)
class CompositeSolution:
    """Coefficient blocks identifying (f_T, f_S), with solve metadata."""

    a: np.ndarray
    c: np.ndarray
    b: np.ndarray
    alpha: float | None
    objective: float
    design: DesignMatrix
    y: np.ndarray
    lambda_t: float
    lambda_s: float
    iterations: int = 0
    converged: bool = True
    objective_trace: np.ndarray = field(default=None, repr=False)

    @property
    def dictionary(self) -> Dictionary:
        return self.design.dictionary

    def coefficients(self) -> np.ndarray:
        return self.dictionary.stack(self.a, self.c, self.b, self.alpha)

    def recompute_objective(self) -> float:
        x = self.coefficients()
        resid = self.y - self.design.matrix @ x
        return float(resid @ resid
                     + self.lambda_t * np.abs(self.a).sum()
                     + self.lambda_s * np.abs(self.b).sum())

    def to_json(self, kkt: KktReport | None = None, support=None) -> dict:
        out = {
            "schema": "v1",
            "blocks": {
                "a": self.a.tolist(),
                "c": self.c.tolist(),
                "b": self.b.tolist(),
                "alpha": self.alpha,
            },
            "objective": self.objective,
            "lambda_t": self.lambda_t,
            "lambda_s": self.lambda_s,
            "iterations": self.iterations,
            "converged": self.converged,
            "dictionary": self.dictionary.to_json(),
        }
        if kkt is not None:
            out["kkt"] = kkt.to_json()
        if support is not None:
            out["support"] = support.to_json()
        return out


def soft_threshold(v: np.ndarray, theta: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def prox_l1_zero_sum(v, theta: float) -> np.ndarray:
    """argmin_b theta*||b||_1 + (1/2)||b - v||^2  subject to sum(b) = 0.

    The optimum is b_k = soft_theta(v_k - mu) where mu is the root of the
    monotone map mu -> sum_k soft_theta(v_k - mu); mu is bracketed on
    [min(v) - theta, max(v) + theta] and located by 48 bisection steps,
    followed by one exact solve on the identified active set so the
    zero-sum holds to machine precision.  The map is evaluated in
    O(log n) from sorted prefix sums (this is the solver's inner loop).
    """
    v = np.asarray(v, dtype=float)
    if theta < 0:
        raise ValidationError("threshold must be nonnegative")
    if v.size == 0:
        return v.copy()
    vs = np.sort(v)
    prefix = np.concatenate(([0.0], np.cumsum(vs)))
    total = float(prefix[-1])
    vs_list = vs.tolist()
    prefix_list = prefix.tolist()
    n = v.size

    def soft_sum(mu):
        i_hi = bisect_right(vs_list, mu + theta)
        i_lo = bisect_left(vs_list, mu - theta)
        upper = (total - prefix_list[i_hi]) - (n - i_hi) * (mu + theta)
        lower = prefix_list[i_lo] - i_lo * (mu - theta)
        return upper + lower

    lo = vs_list[0] - theta
    hi = vs_list[-1] + theta
    for _ in range(48):
        mu = 0.5 * (lo + hi)
        if soft_sum(mu) > 0.0:
            lo = mu
        else:
            hi = mu
    mu = 0.5 * (lo + hi)
    b = soft_threshold(v - mu, theta)
    active = b != 0.0
    if not np.any(active):
        return np.zeros_like(v)
    signs = np.sign(v[active] - mu)
    mu_star = (v[active].sum() - theta * signs.sum()) / active.sum()
    b_star = soft_threshold(v - mu_star, theta)
    if abs(b_star.sum()) <= abs(b.sum()):
        return b_star
    return b


def _estimate_lipschitz(A: np.ndarray, iters: int, tol: float) -> float:
    """2 * sigma_max(A)^2 by power iteration on A^T A, deterministic start."""
    k = A.shape[1]
    v = np.ones(k) / math.sqrt(k)
    lam = 0.0
    for _ in range(max(iters, 1)):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 2.0  # A == 0; any positive step works
        v_new = w / nw
        lam_new = float(v_new @ (A.T @ (A @ v_new)))
        if lam > 0 and abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam, v = lam_new, v_new
    # small safety margin against power-iteration underestimation
    return 2.0 * lam * 1.02


def _prox(x: np.ndarray, a_sl: slice, b_sl: slice, zero_sum: bool,
          theta_t: float, theta_s: float) -> np.ndarray:
    out = x.copy()
    out[a_sl] = soft_threshold(x[a_sl], theta_t)
    if zero_sum:
        out[b_sl] = prox_l1_zero_sum(x[b_sl], theta_s)
    else:
        out[b_sl] = soft_threshold(x[b_sl], theta_s)
    return out


def solve_tv(A: DesignMatrix, y, cfg: SolverConfig) -> CompositeSolution:
    """Solve the discretized seasonal-trend TV problem.

    Returns an accelerated proximal-gradient iterate whose objective has
    stalled (relative decrease <= tol_obj over the trailing window) and
    whose KKT certificate holds at tol_kkt.  Raises ``IllPosedError`` when
    the unregularized polynomial block is rank deficient on the plan and
    ``ConvergenceError`` (carrying the best iterate and its report) when
    max_iters is exhausted first.
    """
    d = A.dictionary
    mat = A.matrix
    y = np.asarray(y, dtype=float)
    length = y.size
    if mat.shape[0] != length:
        raise ValidationError("y length does not match the design matrix")
    if length < 1:
        raise ValidationError("need at least one measurement")
    if not np.all(np.isfinite(mat)) or not np.all(np.isfinite(y)):
        raise ValidationError("non-finite entries in the problem data")
    n_poly = d.n_poly
    if length < n_poly:
        raise IllPosedError(
            f"L={length} measurements cannot determine a polynomial block of "
            f"dimension N_T={n_poly}"
        )
    smooth_cols = list(range(d.c_slice.start, d.c_slice.stop))
    if d.has_constant:
        smooth_cols.append(d.alpha_index)
    if smooth_cols:
        rank = np.linalg.matrix_rank(mat[:, smooth_cols])
        if rank < len(smooth_cols):
            raise IllPosedError(
                "the unregularized block (polynomials/constant) is rank "
                "deficient on this sensing plan"
            )

    lam_t, lam_s = cfg.lambda_t, cfg.lambda_s
    a_sl, b_sl, zero_sum = d.a_slice, d.b_slice, d.zero_sum
    mat_t = mat.T.copy()

    def objective(x):
        r = y - mat @ x
        return float(r @ r + lam_t * np.abs(x[a_sl]).sum()
                     + lam_s * np.abs(x[b_sl]).sum())

    def gradient(x):
        return 2.0 * (mat_t @ (mat @ x - y))

    lip = _estimate_lipschitz(mat, cfg.power_iters, cfg.power_tol)
    step = 1.0 / lip

    x = np.zeros(d.n_columns)
    z = x.copy()
    t_mom = 1.0
    f_x = objective(x)
    trace = [f_x]
    converged = False
    iterations = 0

    def pg_step(base, s):
        return _prox(base - s * gradient(base), a_sl, b_sl, zero_sum,
                     lam_t * s, lam_s * s)

    for it in range(1, cfg.max_iters + 1):
        iterations = it
        x_new = pg_step(z, step)
        f_new = objective(x_new)
        if cfg.step_rule == "backtracking":
            # local Lipschitz check around z; shrink until satisfied
            while True:
                diff = x_new - z
                r_z = y - mat @ z
                quad = (float(r_z @ r_z) - 2.0 * float((r_z @ mat) @ diff)
                        + float(diff @ diff) / (2.0 * step))
                smooth_new = float((y - mat @ x_new) @ (y - mat @ x_new))
                if smooth_new <= quad + 1e-14 * max(1.0, abs(quad)):
                    break
                step *= 0.5
                x_new = pg_step(z, step)
                f_new = objective(x_new)
        if cfg.restart and f_new > f_x:
            # function-value restart: drop momentum, take a plain
            # proximal-gradient step from x (non-increasing up to prox
            # rounding for step <= 1/L)
            z = x.copy()
            t_mom = 1.0
            x_new = pg_step(x, step)
            f_new = objective(x_new)
            if f_new > f_x + 1e-14 * max(1.0, abs(f_x)):
                # step was too long after all: the Lipschitz estimate was
                # optimistic; halve the step and retry once
                lip *= 2.0
                step = 1.0 / lip
                x_new = pg_step(x, step)
                f_new = objective(x_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        z = x_new + ((t_mom - 1.0) / t_new) * (x_new - x)
        x, f_x, t_mom = x_new, f_new, t_new
        trace.append(f_x)
        if it % cfg.check_every == 0 and it >= cfg.window:
            f_old = trace[-cfg.window - 1]
            stalled = (f_old - f_x) <= cfg.tol_obj * max(1.0, abs(f_old))
            if stalled:
                sol = _make_solution(x, d, A, y, cfg, it, trace, True)
                report = kkt_check(sol, A, y, cfg)
                if report.ok:
                    converged = True
                    break

    sol = _make_solution(x, d, A, y, cfg, iterations, trace, converged)
    if not converged:
        report = kkt_check(sol, A, y, cfg)
        if report.ok:
            sol.converged = True
            return sol
        raise ConvergenceError(
            f"no KKT-certified iterate within {cfg.max_iters} iterations "
            f"(active residual {report.active_residual:.3e}, "
            f"inactive excess {max(report.trend_inactive_excess, report.seasonal_inactive_excess):.3e}, "
            f"smooth gradient {report.smooth_grad_norm:.3e})",
            solution=sol,
            report=report,
        )
    return sol


def _make_solution(x, d, A, y, cfg, iterations, trace, converged):
    a, c, b, alpha = d.split(x)
    return CompositeSolution(
        a=a.copy(), c=c.copy(), b=b.copy(), alpha=alpha,
        objective=float(trace[-1]), design=A, y=np.asarray(y, dtype=float),
        lambda_t=cfg.lambda_t, lambda_s=cfg.lambda_s,
        iterations=iterations, converged=converged,
        objective_trace=np.asarray(trace),
    )


def kkt_check(sol: CompositeSolution, A: DesignMatrix, y,
              cfg: SolverConfig) -> KktReport:
    """First-order optimality of the discretized convex program.

    With r = 2 A^T (A x - y): inactive trend atoms need |r_j| <= lambda_T,
    active ones r_j + lambda_T sign(a_j) = 0; the seasonal block satisfies
    the same conditions after subtracting the scalar multiplier mu of the
    zero-sum constraint; unregularized blocks need r_j = 0.  All residuals
    are compared against cfg.tol_kkt.
    """
    d = A.dictionary
    x = d.stack(sol.a, sol.c, sol.b, sol.alpha)
    r = 2.0 * (A.matrix.T @ (A.matrix @ x - np.asarray(y, dtype=float)))
    tol = cfg.tol_kkt

    r_a = r[d.a_slice]
    active_a = sol.a != 0.0
    trend_excess = 0.0
    active_resid = 0.0
    if np.any(~active_a):
        trend_excess = float(np.max(np.abs(r_a[~active_a])) - cfg.lambda_t)
        trend_excess = max(trend_excess, 0.0)
    if np.any(active_a):
        active_resid = float(
            np.max(np.abs(r_a[active_a] + cfg.lambda_t * np.sign(sol.a[active_a])))
        )

    r_b = r[d.b_slice]
    active_b = sol.b != 0.0
    if d.zero_sum:
        if np.any(active_b):
            mu = float(np.mean(-r_b[active_b]
                               - cfg.lambda_s * np.sign(sol.b[active_b])))
        else:
            mu = -0.5 * float(r_b.max() + r_b.min())
    else:
        mu = 0.0
    seasonal_excess = 0.0
    if np.any(~active_b):
        seasonal_excess = float(np.max(np.abs(r_b[~active_b] + mu)) - cfg.lambda_s)
        seasonal_excess = max(seasonal_excess, 0.0)
    if np.any(active_b):
        active_resid = max(active_resid, float(
            np.max(np.abs(r_b[active_b] + mu
                          + cfg.lambda_s * np.sign(sol.b[active_b])))
        ))

    smooth_idx = list(range(d.c_slice.start, d.c_slice.stop))
    if d.has_constant:
        smooth_idx.append(d.alpha_index)
    smooth_grad = float(np.max(np.abs(r[smooth_idx]))) if smooth_idx else 0.0

    zero_sum_resid = abs(float(sol.b.sum())) if d.zero_sum else 0.0
    feasible = zero_sum_resid <= 1e-9 * max(1.0, float(np.abs(sol.b).sum()))

    ok = (trend_excess <= tol and seasonal_excess <= tol
          and active_resid <= tol and smooth_grad <= tol and feasible)
    return KktReport(
        trend_inactive_excess=trend_excess,
        seasonal_inactive_excess=seasonal_excess,
        active_residual=active_resid,
        seasonal_shift=mu,
        smooth_grad_norm=smooth_grad,
        zero_sum_residual=zero_sum_resid,
        ok=bool(ok),
        tol=tol,
    )


@dataclass(eq=False)
class SupportReport:
    """Sparse supports after thresholding, with a least-squares refit."""

    trend_knots: np.ndarray
    trend_weights: np.ndarray
    seasonal_knots: np.ndarray
    seasonal_weights: np.ndarray
    k_t: int
    k_s: int
    knot_bound: int
    refit: CompositeSolution
    refit_ok: bool

    def to_json(self) -> dict:
        return {
            "trend_knots": self.trend_knots.tolist(),
            "trend_weights": self.trend_weights.tolist(),
            "seasonal_knots": self.seasonal_knots.tolist(),
            "seasonal_weights": self.seasonal_weights.tolist(),
            "k_t": self.k_t,
            "k_s": self.k_s,
            "knot_bound": self.knot_bound,
            "refit_ok": self.refit_ok,
        }


def extract_support(sol: CompositeSolution, eta: float) -> SupportReport:
    """Knots whose weight exceeds ``eta`` times the block maximum.

    The retained coefficients together with the unregularized blocks are
    refit by (zero-sum-constrained) least squares on the support; if that
    refit is rank deficient the pre-refit coefficients are kept and the
    report is flagged.  Also reports the extreme-point knot bound
    L + 1 - N_T for reference.
    """
    if not (0.0 < eta < 1.0):
        raise ValidationError("eta must lie in (0, 1)")
    d = sol.dictionary
    keep_a = _threshold_mask(sol.a, eta)
    keep_b = _threshold_mask(sol.b, eta)
    k_t, k_s = int(keep_a.sum()), int(keep_b.sum())
    length = sol.y.size
    n_t = d.n_poly
    bound = length if d.case is Case.BOTH_INVERTIBLE else length + 1 - n_t

    refit_a = np.zeros_like(sol.a)
    refit_b = np.zeros_like(sol.b)
    refit_c = sol.c.copy()
    refit_alpha = sol.alpha
    refit_ok = True

    cols = list(np.flatnonzero(keep_a))
    cols += list(range(d.c_slice.start, d.c_slice.stop))
    b_offset = len(cols)
    cols += list(d.b_slice.start + np.flatnonzero(keep_b))
    if d.has_constant:
        cols.append(d.alpha_index)
    sub = sol.design.matrix[:, cols]
    n_sub = len(cols)
    constrain = d.zero_sum and k_s > 0
    try:
        if np.linalg.matrix_rank(sub) < min(n_sub, length):
            raise np.linalg.LinAlgError("rank deficient support")
        if constrain:
            e = np.zeros(n_sub)
            e[b_offset:b_offset + k_s] = 1.0
            kkt = np.zeros((n_sub + 1, n_sub + 1))
            kkt[:n_sub, :n_sub] = 2.0 * sub.T @ sub
            kkt[:n_sub, n_sub] = e
            kkt[n_sub, :n_sub] = e
            rhs = np.concatenate([2.0 * sub.T @ sol.y, [0.0]])
            coef = np.linalg.solve(kkt, rhs)[:n_sub]
        else:
            coef, _, rank, _ = np.linalg.lstsq(sub, sol.y, rcond=None)
            if rank < n_sub:
                raise np.linalg.LinAlgError("rank deficient support")
    except np.linalg.LinAlgError:
        refit_ok = False
        refit_a, refit_b = sol.a.copy(), sol.b.copy()
        refit_a[~keep_a] = 0.0
        refit_b[~keep_b] = 0.0
    else:
        refit_a[keep_a] = coef[:k_t]
        refit_c = coef[k_t:k_t + d.n_poly]
        refit_b[keep_b] = coef[b_offset:b_offset + k_s]
        if d.has_constant:
            refit_alpha = float(coef[-1])

    refit = CompositeSolution(
        a=refit_a, c=refit_c, b=refit_b, alpha=refit_alpha,
        objective=float("nan"), design=sol.design, y=sol.y,
        lambda_t=sol.lambda_t, lambda_s=sol.lambda_s,
        iterations=sol.iterations, converged=sol.converged,
    )
    refit.objective = refit.recompute_objective()
    return SupportReport(
        trend_knots=d.trend_knots[keep_a],
        trend_weights=refit_a[keep_a],
        seasonal_knots=d.seasonal_knots[keep_b],
        seasonal_weights=refit_b[keep_b],
        k_t=k_t,
        k_s=k_s,
        knot_bound=bound,
        refit=refit,
        refit_ok=refit_ok,
    )


def _threshold_mask(block: np.ndarray, eta: float) -> np.ndarray:
    if block.size == 0 or not np.any(block != 0.0):
        return np.zeros(block.shape, dtype=bool)
    return np.abs(block) > eta * np.max(np.abs(block))


def solution_to_json_str(sol: CompositeSolution, kkt: KktReport | None = None,
                         support: SupportReport | None = None) -> str:
    return json.dumps(sol.to_json(kkt=kkt, support=support), indent=2)


@dataclass(eq=False)
class LoadedSolution:
    """Coefficient blocks parsed back from a serialized solution."""

    a: np.ndarray
    c: np.ndarray
    b: np.ndarray
    alpha: float | None
    objective: float
    dictionary: Dictionary


def load_solution_json(obj: dict) -> LoadedSolution:
    """Parse a v1 solution JSON back into evaluable blocks."""
    from .dictionary import dictionary_from_json

    if obj.get("schema") != "v1":
        raise ValidationError("unsupported solution schema")
    dictionary = dictionary_from_json(obj["dictionary"])
    blocks = obj["blocks"]
    loaded = LoadedSolution(
        a=np.asarray(blocks["a"], dtype=float),
        c=np.asarray(blocks["c"], dtype=float),
        b=np.asarray(blocks["b"], dtype=float),
        alpha=blocks.get("alpha"),
        objective=float(obj["objective"]),
        dictionary=dictionary,
    )
    if loaded.a.shape != (dictionary.n_trend,) \
            or loaded.b.shape != (dictionary.n_seasonal,):
        raise ValidationError("serialized blocks do not match the dictionary")
    return loaded
