"""Measurement functionals, their periodizations, and atom pairings.

A sensing functional phi acts on a pair (f_T, f_S) as
<f_T, phi> + <f_S, Per{phi}>, where Per{phi} = sum_k phi(. - k).  Three
kinds are supported: point sampling (periodizes to a Dirac-comb offset),
box averages (periodize to an exactly computable piecewise-constant
periodic function, a constant when the box length is an integer), and
tabulated weighted densities with declared polynomial decay, whose
periodization is a truncated shift sum with a certified tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .atoms import (
    ConstantAtom,
    MonomialAtom,
    SeasonalGreenAtom,
    TrendGreenAtom,
)
from .errors import (
    AdmissibilityError,
    IntegrationError,
    NotPeriodizableError,
    ValidationError,
)
from .operators import admissibility_order, sampling_admissible

DEFAULT_PERIODIZE_TOL = 1e-9


# --------------------------------------------------------------------------
# periodized representations


@dataclass(frozen=True)
class CombOffset:
    """Dirac comb Sha(. - offset), offset in [0, 1)."""

    offset: float


@dataclass(frozen=True)
class ConstantValue:
    """The constant periodic function."""

    value: float


@dataclass(frozen=True)
class PeriodicBoxSum:
    """Exact periodization of an indicator 1_[start, start+length).

    Takes the value floor(length) + 1 on a sub-interval of the period of
    width frac(length) and floor(length) elsewhere.
    """

    start: float
    length: float

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.floor(t - self.start) - np.floor(t - self.start - self.length)

    def mean(self):
        return self.length


@dataclass(eq=False)
class TabulatedPeriodic:
    """Periodized density tabulated on a uniform grid over [0, 1]."""

    grid: np.ndarray
    values: np.ndarray
    tail_bound: float

    def eval(self, t):
        return np.interp(np.asarray(t, dtype=float) % 1.0, self.grid, self.values)


# --------------------------------------------------------------------------
# sensing functionals


@dataclass(frozen=True)
class Sampling:
    """Point evaluation at x."""

    x: float

    def describe(self):
        return f"sampling at x={self.x}"


@dataclass(frozen=True)
class BoxAverage:
    """Integral over the window [start, start + length)."""

    start: float
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValidationError("box length must be positive")

    def describe(self):
        return f"box average over [{self.start}, {self.start + self.length})"


class WeightedDensity:
    """Integration against a tabulated density with declared decay.

    Parameters
    ----------
    func : callable, optional
        Density evaluated pointwise; sampled onto the quadrature grid at
        construction.  Either ``func`` or ``(grid, values)`` is required.
    grid, values : array_like, optional
        Pre-tabulated samples; linearly interpolated, zero outside.
    support : (float, float)
        Interval outside which the density is treated as negligible for
        quadrature (the decay bound still accounts for the tail).
    decay : (float, float)
        Constants (C, p) of the envelope |phi(t)| <= C / (1 + |t|^p).
        Periodization requires p > 1.
    n_samples : int
        Quadrature grid size, 2^k + 1 for nested Simpson refinement.
    """

    kind = "density"

    def __init__(self, func=None, grid=None, values=None, support=(-8.0, 8.0),
                 decay=(1.0, 2.0), n_samples=4097,
                 periodize_tol=DEFAULT_PERIODIZE_TOL):
        if func is None:
            if grid is None or values is None:
                raise ValidationError("WeightedDensity needs func or (grid, values)")
            grid = np.asarray(grid, dtype=float)
            values = np.asarray(values, dtype=float)

            def func(t, _g=grid, _v=values):
                return np.interp(np.asarray(t, dtype=float), _g, _v,
                                 left=0.0, right=0.0)

            support = (float(grid[0]), float(grid[-1]))
        self.support = (float(support[0]), float(support[1]))
        # the tabulated window is the density's support: zero outside
        lo, hi = self.support

        def masked(t, _f=func, _lo=lo, _hi=hi):
            t = np.asarray(t, dtype=float)
            inside = (t >= _lo) & (t <= _hi)
            out = np.zeros_like(t)
            if np.any(inside):
                out[inside] = np.asarray(_f(t[inside]), dtype=float)
            return out

        self.func = masked
        self.decay_c, self.decay_p = float(decay[0]), float(decay[1])
        if not math.log2(n_samples - 1).is_integer():
            raise ValidationError("n_samples must be 2^k + 1")
        self.n_samples = int(n_samples)
        self.grid = np.linspace(*self.support, self.n_samples)
        self.values = np.asarray(func(self.grid), dtype=float)
        self._periodized = None
        if self.decay_p > 1.0:
            self._periodized = _periodize_density(self, periodize_tol)

    def describe(self):
        return (f"weighted density on [{self.support[0]}, {self.support[1]}] "
                f"with decay p={self.decay_p}")


SensingFunctional = (Sampling, BoxAverage, WeightedDensity)


def plan_to_json(plan) -> list:
    out = []
    for phi in plan:
        if isinstance(phi, Sampling):
            out.append({"kind": "sampling", "x": phi.x})
        elif isinstance(phi, BoxAverage):
            out.append({"kind": "box", "start": phi.start, "len": phi.length})
        elif isinstance(phi, WeightedDensity):
            out.append({
                "kind": "density",
                "grid": phi.grid.tolist(),
                "values": phi.values.tolist(),
                "decay_c": phi.decay_c,
                "decay_p": phi.decay_p,
            })
        else:
            raise ValidationError(f"unknown sensing functional {phi!r}")
    return out


def plan_from_json(obj) -> list:
    if not isinstance(obj, list):
        raise ValidationError("sensing plan must be a JSON array")
    plan = []
    for i, item in enumerate(obj):
        if not isinstance(item, dict) or "kind" not in item:
            raise ValidationError(f"plan entry {i} must be an object with 'kind'")
        kind = item["kind"]
        if kind == "sampling":
            _require_keys(item, {"kind", "x"}, i)
            plan.append(Sampling(float(item["x"])))
        elif kind == "box":
            _require_keys(item, {"kind", "start", "len"}, i)
            plan.append(BoxAverage(float(item["start"]), float(item["len"])))
        elif kind == "density":
            _require_keys(item, {"kind", "grid", "values", "decay_c", "decay_p"}, i)
            plan.append(WeightedDensity(grid=item["grid"], values=item["values"],
                                        decay=(item["decay_c"], item["decay_p"])))
        else:
            raise ValidationError(f"plan entry {i}: unknown kind {kind!r}")
    return plan


def _require_keys(item, allowed, index):
    extra = set(item) - allowed
    if extra:
        raise ValidationError(f"plan entry {index}: unknown keys {sorted(extra)}")
    missing = allowed - set(item)
    if missing:
        raise ValidationError(f"plan entry {index}: missing keys {sorted(missing)}")


# --------------------------------------------------------------------------
# periodization


def periodize(phi, tol: float = DEFAULT_PERIODIZE_TOL):
    """Periodized representation of ``phi``, exact where possible.

    Sampling periodizes to a comb offset, box averages to an exact
    piecewise-constant periodic function (a constant when the length is
    an integer), and weighted densities to a tabulated periodic function
    whose truncated shift sum carries a tail bound <= ``tol``.
    """
    if isinstance(phi, Sampling):
        return CombOffset(phi.x % 1.0)
    if isinstance(phi, BoxAverage):
        if float(phi.length).is_integer():
            return ConstantValue(phi.length)
        return PeriodicBoxSum(phi.start, phi.length)
    if isinstance(phi, WeightedDensity):
        if phi.decay_p <= 1.0:
            raise NotPeriodizableError(
                f"declared decay exponent p={phi.decay_p} <= 1: the shift sum "
                "need not converge"
            )
        if phi._periodized is not None and phi._periodized.tail_bound <= tol:
            return phi._periodized
        return _periodize_density(phi, tol)
    raise ValidationError(f"unknown sensing functional {phi!r}")


def _periodize_density(phi: WeightedDensity, tol: float) -> TabulatedPeriodic:
    c, p = phi.decay_c, phi.decay_p
    # tail of sum_{|k| > K} C/(1+|t-k|^p) for t in [0,1]
    k = 2
    while True:
        tail = 2.0 * c * ((k - 1.0) ** -p + (k - 1.0) ** (1.0 - p) / (p - 1.0))
        if tail <= tol or k > 10**7:
            break
        k *= 2
    if tail > tol:
        raise NotPeriodizableError(
            f"cannot reach periodization tolerance {tol:.3e} with decay "
            f"(C={c}, p={p})"
        )
    n = 16384
    grid = np.linspace(0.0, 1.0, n + 1)
    # shifts outside the support window contribute exactly zero
    lo, hi = phi.support
    k_lo = max(-k, math.floor(0.0 - hi))
    k_hi = min(k, math.ceil(1.0 - lo))
    vals = np.zeros_like(grid)
    for s in range(k_lo, k_hi + 1):
        vals += np.asarray(phi.func(grid - s), dtype=float)
    return TabulatedPeriodic(grid=grid, values=vals, tail_bound=float(tail))


# --------------------------------------------------------------------------
# quadrature helpers


def _simpson_refine(f, a, b, tol, n0=64, max_doublings=12):
    """Composite Simpson with doubling until successive values agree."""
    if b <= a:
        return 0.0
    n = n0
    prev = None
    for _ in range(max_doublings + 1):
        x = np.linspace(a, b, n + 1)
        y = np.asarray(f(x), dtype=float)
        h = (b - a) / n
        val = h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise IntegrationError(
        f"Simpson quadrature did not reach tolerance {tol:.3e} on [{a}, {b}]"
    )


def _density_integral(phi: WeightedDensity, g, breakpoints=(), tol=1e-9):
    """Integral of phi.func * g over the tabulated support.

    The support is split at ``breakpoints`` (atom kinks) so the composite
    rule only ever sees smooth integrands.
    """
    lo, hi = phi.support
    pts = [lo] + sorted(float(u) for u in breakpoints if lo < u < hi) + [hi]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += _simpson_refine(
            lambda x: np.asarray(phi.func(x), dtype=float) * np.asarray(g(x), dtype=float),
            a, b, tol,
        )
    return total


# --------------------------------------------------------------------------
# applying functionals to atoms


def apply_to_trend_atom(phi, atom, tol: float = 1e-9) -> float:
    """<atom, phi> for a trend atom (Green shift or monomial)."""
    if not isinstance(atom, (TrendGreenAtom, MonomialAtom)):
        raise ValidationError(f"not a trend atom: {atom!r}")
    if isinstance(phi, Sampling):
        return float(atom.eval(phi.x))
    if isinstance(phi, BoxAverage):
        return float(atom.integral(phi.start, phi.start + phi.length))
    if isinstance(phi, WeightedDensity):
        kinks = (atom.knot,) if isinstance(atom, TrendGreenAtom) else ()
        return _density_integral(phi, atom.eval, breakpoints=kinks, tol=tol)
    raise ValidationError(f"unknown sensing functional {phi!r}")


def apply_to_seasonal_atom(phi, atom, tol: float = 1e-9) -> float:
    """<atom, Per{phi}> for a seasonal atom (periodic Green shift or constant)."""
    if not isinstance(atom, (SeasonalGreenAtom, ConstantAtom)):
        raise ValidationError(f"not a seasonal atom: {atom!r}")
    if isinstance(phi, Sampling):
        return float(atom.eval(phi.x))
    if isinstance(phi, BoxAverage):
        # whole periods contribute the exact mean; only the fractional
        # remainder needs the antiderivative
        whole, frac = divmod(phi.length, 1.0)
        out = whole * atom.mean()
        if frac > 0.0:
            out += float(atom.integral(phi.start, phi.start + frac))
        return float(out)
    if isinstance(phi, WeightedDensity):
        per = periodize(phi, tol=min(tol, DEFAULT_PERIODIZE_TOL))
        n = per.grid.size - 1
        y = per.values * np.asarray(atom.eval(per.grid), dtype=float)
        h = 1.0 / n
        coarse = 2 * h / 3.0 * (y[0] + y[-1] + 4.0 * y[2:-1:4].sum()
                                + 2.0 * y[4:-1:4].sum())
        fine = h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        # Richardson estimate of the fine-rule error; second order is the
        # worst case (atom kinks between nodes)
        if abs(fine - coarse) / 3.0 > tol * max(1.0, abs(fine)):
            raise IntegrationError(
                "periodic quadrature did not converge on the cached grid"
            )
        return float(fine)
    raise ValidationError(f"unknown sensing functional {phi!r}")


def check_admissible(phi, trend_op, seasonal_op) -> None:
    """Raise AdmissibilityError if ``phi`` cannot sense this operator pair."""
    if isinstance(phi, Sampling):
        if not sampling_admissible(trend_op, seasonal_op):
            nt = admissibility_order(trend_op)
            ns = admissibility_order(seasonal_op)
            raise AdmissibilityError(
                f"{phi.describe()} is not admissible: sampling with "
                f"N_T={nt}, N_S={ns} requires derivative orders >= 2 "
                "(or Sobolev exponents > 1)"
            )
    elif isinstance(phi, WeightedDensity):
        if phi.decay_p <= 1.0:
            raise AdmissibilityError(
                f"{phi.describe()} is not admissible: decay exponent must "
                "exceed 1 for periodization"
            )
    elif not isinstance(phi, BoxAverage):
        raise ValidationError(f"unknown sensing functional {phi!r}")
