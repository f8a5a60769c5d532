"""Discretized search space and design-matrix assembly.

The search space restricts trend innovations to a uniform grid of step
h_T (truncated to the observation window plus a margin) and seasonal
innovations to the n_S-point uniform grid on the circle.  Solutions are
parameterized by coefficient blocks (a, c, b, alpha); which blocks exist
and whether the seasonal block is constrained to zero sum depends only
on the operator orders (the case flag).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .atoms import ConstantAtom, MonomialAtom, SeasonalGreenAtom, TrendGreenAtom
from .errors import AdmissibilityError, ValidationError
from .operators import (
    OperatorSpec,
    PeriodicGreen,
    admissibility_order,
    operator_to_json,
)
from .sensing import apply_to_seasonal_atom, apply_to_trend_atom, check_admissible


class Case(enum.Enum):
    """Structure of the native space by operator orders."""

    BOTH_INVERTIBLE = "both_invertible"                    # N_T = 0, N_S = 0
    TREND_ORDER_POSITIVE = "trend_order_positive"          # N_T >= 1
    TREND_INVERTIBLE_SEASONAL_NOT = "trend_invertible_seasonal_not"  # N_T = 0, N_S >= 1


def default_margin(h_t: float) -> int:
    """Default truncation margin: atoms covering 2 length units per side."""
    return math.ceil(2.0 / h_t)


@dataclass(frozen=True)
class GridSpec:
    """Grid parameters: trend step and window, seasonal resolution.

    Trend knots are the multiples of ``h_t`` inside
    [t_lo - margin*h_t, t_hi + margin*h_t]; seasonal knots are k/n_s for
    0 <= k < n_s.
    """

    h_t: float
    t_lo: float
    t_hi: float
    margin: int
    n_s: int

    def __post_init__(self):
        if not self.h_t > 0:
            raise ValidationError("h_t must be positive")
        if self.t_hi < self.t_lo:
            raise ValidationError("empty trend window")
        if self.margin < 0:
            raise ValidationError("margin must be nonnegative")
        if not (isinstance(self.n_s, int) and self.n_s >= 1):
            raise ValidationError("n_s = 1/h_s must be a positive integer")

    @property
    def h_s(self) -> float:
        return 1.0 / self.n_s

    def trend_knots(self) -> np.ndarray:
        lo = self.t_lo - self.margin * self.h_t
        hi = self.t_hi + self.margin * self.h_t
        k_min = math.ceil(lo / self.h_t - 1e-9)
        k_max = math.floor(hi / self.h_t + 1e-9)
        return np.arange(k_min, k_max + 1) * self.h_t

    def seasonal_knots(self) -> np.ndarray:
        return np.arange(self.n_s) / self.n_s


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Finite atom set of the discretized native space."""

    trend_op: OperatorSpec
    seasonal_op: OperatorSpec
    grid: GridSpec
    case: Case
    trend_knots: np.ndarray
    poly_degrees: tuple
    seasonal_knots: np.ndarray
    has_constant: bool
    zero_sum: bool
    periodic_green: PeriodicGreen

    @property
    def n_trend(self) -> int:
        return self.trend_knots.size

    @property
    def n_poly(self) -> int:
        return len(self.poly_degrees)

    @property
    def n_seasonal(self) -> int:
        return self.seasonal_knots.size

    @property
    def n_columns(self) -> int:
        return self.n_trend + self.n_poly + self.n_seasonal + int(self.has_constant)

    @property
    def a_slice(self) -> slice:
        return slice(0, self.n_trend)

    @property
    def c_slice(self) -> slice:
        return slice(self.n_trend, self.n_trend + self.n_poly)

    @property
    def b_slice(self) -> slice:
        start = self.n_trend + self.n_poly
        return slice(start, start + self.n_seasonal)

    @property
    def alpha_index(self):
        return self.n_columns - 1 if self.has_constant else None

    def atoms(self) -> list:
        """All atoms in canonical column order."""
        out = [TrendGreenAtom(self.trend_op, float(u)) for u in self.trend_knots]
        out += [MonomialAtom(d) for d in self.poly_degrees]
        out += [SeasonalGreenAtom(self.periodic_green, float(v))
                for v in self.seasonal_knots]
        if self.has_constant:
            out.append(ConstantAtom())
        return out

    def split(self, x: np.ndarray):
        """Split a stacked coefficient vector into (a, c, b, alpha)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_columns,):
            raise ValidationError(
                f"coefficient vector has length {x.size}, expected {self.n_columns}"
            )
        alpha = float(x[self.alpha_index]) if self.has_constant else None
        return x[self.a_slice], x[self.c_slice], x[self.b_slice], alpha

    def stack(self, a, c, b, alpha=None) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        c = np.asarray(c, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (self.n_trend,) or c.shape != (self.n_poly,) \
                or b.shape != (self.n_seasonal,):
            raise ValidationError("coefficient block lengths do not match dictionary")
        parts = [a, c, b]
        if self.has_constant:
            parts.append(np.array([0.0 if alpha is None else float(alpha)]))
        elif alpha not in (None, 0.0):
            raise ValidationError("constant coefficient given but no constant column")
        return np.concatenate(parts)

    def to_json(self) -> dict:
        return {
            "schema": "v1",
            "trend_operator": operator_to_json(self.trend_op),
            "seasonal_operator": operator_to_json(self.seasonal_op),
            "case": self.case.value,
            "grid": {
                "h_t": self.grid.h_t,
                "window": [self.grid.t_lo, self.grid.t_hi],
                "margin": self.grid.margin,
                "n_s": self.grid.n_s,
            },
            "trend_knots": self.trend_knots.tolist(),
            "poly_degrees": list(self.poly_degrees),
            "seasonal_knots": self.seasonal_knots.tolist(),
            "has_constant": self.has_constant,
            "zero_sum": self.zero_sum,
        }


def build_dictionary(trend: OperatorSpec, seasonal: OperatorSpec, grid: GridSpec,
                     m_terms: int = 2048, tail_tol: float | None = None) -> Dictionary:
    """Build the atom set for an operator pair on a grid.

    The case flag, the polynomial block, the constant column, and the
    zero-sum convention all follow from the operator orders alone.
    """
    n_t = admissibility_order(trend)
    n_s_order = admissibility_order(seasonal)
    if n_t >= 1:
        case = Case.TREND_ORDER_POSITIVE
    elif n_s_order >= 1:
        case = Case.TREND_INVERTIBLE_SEASONAL_NOT
    else:
        case = Case.BOTH_INVERTIBLE
    return Dictionary(
        trend_op=trend,
        seasonal_op=seasonal,
        grid=grid,
        case=case,
        trend_knots=grid.trend_knots(),
        poly_degrees=tuple(range(n_t)),
        seasonal_knots=grid.seasonal_knots(),
        has_constant=case is Case.TREND_INVERTIBLE_SEASONAL_NOT,
        zero_sum=case is not Case.BOTH_INVERTIBLE,
        periodic_green=PeriodicGreen(seasonal, m_terms=m_terms, tail_tol=tail_tol),
    )


@dataclass(eq=False)
class DesignMatrix:
    """L x K matrix of functionals applied to atoms, with block structure."""

    matrix: np.ndarray
    dictionary: Dictionary

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def blocks(self) -> dict:
        d = self.dictionary
        out = {
            "trend_green": (d.a_slice.start, d.a_slice.stop),
            "poly": (d.c_slice.start, d.c_slice.stop),
            "seasonal_green": (d.b_slice.start, d.b_slice.stop),
        }
        if d.has_constant:
            out["constant"] = (d.alpha_index, d.alpha_index + 1)
        return out

    def to_csv(self, path) -> None:
        header = []
        d = self.dictionary
        header += [f"psi@{u:g}" for u in d.trend_knots]
        header += [f"t^{m}" for m in d.poly_degrees]
        header += [f"rho@{v:g}" for v in d.seasonal_knots]
        if d.has_constant:
            header.append("const")
        np.savetxt(path, self.matrix, delimiter=",", header=",".join(header),
                   comments="")


def assemble(dictionary: Dictionary, plan, tol: float = 1e-9) -> DesignMatrix:
    """Design matrix of a sensing plan against the dictionary atoms.

    Admissibility of every functional for the operator pair is enforced
    here (the single validation site); the error names the offending
    functional and the violated rule.
    """
    if not plan:
        raise ValidationError("sensing plan is empty")
    for i, phi in enumerate(plan):
        try:
            check_admissible(phi, dictionary.trend_op, dictionary.seasonal_op)
        except AdmissibilityError as err:
            raise AdmissibilityError(f"plan entry {i}: {err}") from None
    atoms = dictionary.atoms()
    n_trend_cols = dictionary.n_trend + dictionary.n_poly
    rows = []
    for phi in plan:
        row = [
            apply_to_trend_atom(phi, atom, tol=tol) if j < n_trend_cols
            else apply_to_seasonal_atom(phi, atom, tol=tol)
            for j, atom in enumerate(atoms)
        ]
        rows.append(row)
    matrix = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("design matrix contains non-finite entries")
    return DesignMatrix(matrix=matrix, dictionary=dictionary)


def evaluate_solution(dictionary: Dictionary, solution, t):
    """Evaluate (f_T, f_S) of a coefficient-block solution at ``t``.

    ``solution`` only needs attributes a, c, b, alpha.  f_S is 1-periodic
    by construction of its atoms.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(solution.a, dtype=float)
    c = np.asarray(solution.c, dtype=float)
    b = np.asarray(solution.b, dtype=float)
    if a.shape != (dictionary.n_trend,) or c.shape != (dictionary.n_poly,) \
            or b.shape != (dictionary.n_seasonal,):
        raise ValidationError("coefficient block lengths do not match dictionary")
    f_t = np.zeros_like(t, dtype=float)
    if np.any(a != 0.0):
        from .operators import trend_green_eval

        diffs = t[..., None] - dictionary.trend_knots
        f_t = f_t + trend_green_eval(dictionary.trend_op, diffs) @ a
    for coef, deg in zip(c, dictionary.poly_degrees):
        if coef != 0.0:
            f_t = f_t + coef * t**deg
    f_s = np.zeros_like(t, dtype=float)
    if np.any(b != 0.0):
        diffs = t[..., None] - dictionary.seasonal_knots
        f_s = f_s + dictionary.periodic_green.eval(diffs) @ b
    alpha = getattr(solution, "alpha", None)
    if dictionary.has_constant and alpha is not None:
        f_s = f_s + alpha
    return f_t, f_s


def regularization_value(dictionary: Dictionary, a, b,
                         lambda_t: float, lambda_s: float) -> float:
    """lambda_T ||a||_1 + lambda_S ||b||_1.

    By the coefficient isometry of the discretized space this equals
    lambda_T ||L_T f_T||_M + lambda_S ||L_S f_S||_M.  Sums are exactly
    rounded (fsum) so the equality with the independently computed
    measure norms holds bitwise.
    """
    return (lambda_t * math.fsum(np.abs(a))
            + lambda_s * math.fsum(np.abs(b)))


def composite_norm(dictionary: Dictionary, a, c, b, alpha=None, p: float = 1.0) -> float:
    """Case-dependent p-composite norm of the pair (f_T, f_S)."""
    a1 = float(np.abs(a).sum())
    b1 = float(np.abs(b).sum())
    if dictionary.case is Case.BOTH_INVERTIBLE:
        parts = (a1, b1)
    elif dictionary.case is Case.TREND_ORDER_POSITIVE:
        parts = (a1 + float(np.linalg.norm(c)), b1)
    else:
        parts = (a1, b1 + abs(alpha or 0.0))
    if math.isinf(p):
        return max(parts)
    return float((parts[0] ** p + parts[1] ** p) ** (1.0 / p))


def dictionary_description_json(dictionary: Dictionary) -> str:
    return json.dumps(dictionary.to_json(), indent=2)


def dictionary_from_json(obj: dict) -> Dictionary:
    """Rebuild a Dictionary from its serialized description."""
    from .operators import operator_from_json

    if obj.get("schema") != "v1":
        raise ValidationError("unsupported dictionary schema")
    grid = GridSpec(
        h_t=float(obj["grid"]["h_t"]),
        t_lo=float(obj["grid"]["window"][0]),
        t_hi=float(obj["grid"]["window"][1]),
        margin=int(obj["grid"]["margin"]),
        n_s=int(obj["grid"]["n_s"]),
    )
    rebuilt = build_dictionary(
        operator_from_json(obj["trend_operator"], "trend"),
        operator_from_json(obj["seasonal_operator"], "seasonal"),
        grid,
    )
    if rebuilt.case.value != obj["case"]:
        raise ValidationError("serialized case flag does not match operators")
    return rebuilt
