"""Regularization operators and their (periodic) Green's functions.

An operator is either a pure derivative D^N, a Sobolev operator
(Id - Laplacian)^(gamma/2), or a composition of such factors.  Trend
operators act on the real line through their frequency response; seasonal
operators act on 1-periodic functions through their frequency sequence.
The Green's function of D^N is the causal truncated power
t_+^(N-1)/(N-1)!, and the zero-mean periodic Green's function of D^N is
the rescaled Bernoulli polynomial -B_N({t})/N!.  Everything else goes
through truncated Fourier series with explicit tail control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TruncationError, UnsupportedOperatorError, ValidationError

TREND = "trend"
SEASONAL = "seasonal"

_TWO_PI = 2.0 * math.pi

# Bernoulli numbers B_0..B_7 (B_1 = -1/2 convention).
_BERNOULLI_NUMBERS = (1.0, -0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0, 0.0, 1.0 / 42.0, 0.0)

MAX_BERNOULLI_ORDER = 6


@dataclass(frozen=True)
class OperatorSpec:
    """A trend- or seasonal-admissible operator.

    Parameters
    ----------
    kind : {"derivative", "sobolev", "composition"}
    role : {"trend", "seasonal"}
    order : int
        Derivative order, ``kind == "derivative"`` only; must be >= 1.
        The identity is represented as an empty composition.
    gamma : float
        Sobolev exponent, ``kind == "sobolev"`` only.
    factors : tuple of OperatorSpec
        Factors of a composition, all sharing this spec's role.
    """

    kind: str
    role: str
    order: int = 0
    gamma: float = 0.0
    factors: tuple = ()

    def __post_init__(self):
        if self.role not in (TREND, SEASONAL):
            raise ValidationError(f"unknown operator role {self.role!r}")
        if self.kind == "derivative":
            if not isinstance(self.order, int) or self.order < 1:
                raise ValidationError(
                    "derivative order must be an integer >= 1; represent the "
                    "identity as an empty composition"
                )
        elif self.kind == "sobolev":
            if not math.isfinite(self.gamma):
                raise ValidationError("sobolev exponent must be finite")
        elif self.kind == "composition":
            for f in self.factors:
                if f.role != self.role:
                    raise ValidationError("composition factors must share the role")
        else:
            raise ValidationError(f"unknown operator kind {self.kind!r}")


def derivative(order: int, role: str = TREND) -> OperatorSpec:
    """D^order in the given role."""
    return OperatorSpec(kind="derivative", role=role, order=order)


def sobolev(gamma: float, role: str = TREND) -> OperatorSpec:
    """(Id - Laplacian)^(gamma/2) in the given role."""
    return OperatorSpec(kind="sobolev", role=role, gamma=float(gamma))


def composition(factors, role: str = TREND) -> OperatorSpec:
    """Composition of factors; the empty composition is the identity."""
    return OperatorSpec(kind="composition", role=role, factors=tuple(factors))


def admissibility_order(spec: OperatorSpec) -> int:
    """Order of the operator: derivative order, summed over compositions."""
    if spec.kind == "derivative":
        return spec.order
    if spec.kind == "sobolev":
        return 0
    return sum(admissibility_order(f) for f in spec.factors)


def null_space_dimension(spec: OperatorSpec) -> int:
    """Dimension of the null space in the operator's own role."""
    n = admissibility_order(spec)
    if spec.role == SEASONAL:
        return min(1, n)
    return n


def _flatten(spec: OperatorSpec):
    """Return (total derivative order, list of sobolev gammas)."""
    if spec.kind == "derivative":
        return spec.order, []
    if spec.kind == "sobolev":
        return 0, [spec.gamma]
    n, gammas = 0, []
    for f in spec.factors:
        fn, fg = _flatten(f)
        n += fn
        gammas.extend(fg)
    return n, gammas


def is_pure_derivative(spec: OperatorSpec) -> bool:
    n, gammas = _flatten(spec)
    return n >= 1 and not gammas


def frequency_response(spec: OperatorSpec, omega):
    """Frequency response L_hat(omega) of a trend operator.

    (i*omega)^N for derivatives, (1 + omega^2)^(gamma/2) for Sobolev
    operators, products over compositions.  Vectorized in ``omega``.
    """
    if spec.role != TREND:
        raise ValidationError("frequency_response is defined for trend operators")
    return _symbol(spec, np.asarray(omega, dtype=float))


def frequency_sequence(spec: OperatorSpec, n):
    """Frequency sequence L_hat[n] of a seasonal operator.

    (2*pi*i*n)^N for derivatives, (1 + 4*pi^2*n^2)^(gamma/2) for Sobolev
    operators, products over compositions.  Vectorized in ``n``.
    """
    if spec.role != SEASONAL:
        raise ValidationError("frequency_sequence is defined for seasonal operators")
    return _symbol(spec, _TWO_PI * np.asarray(n, dtype=float))


def _symbol(spec: OperatorSpec, omega: np.ndarray):
    # Shared symbol: the frequency sequence is the response sampled at 2*pi*n.
    if spec.kind == "derivative":
        return (1j * omega) ** spec.order
    if spec.kind == "sobolev":
        return (1.0 + omega**2) ** (spec.gamma / 2.0) + 0j
    out = np.ones_like(omega, dtype=complex)
    for f in spec.factors:
        out = out * _symbol(f, omega)
    return out


def _bernoulli_poly(n: int, x):
    """Bernoulli polynomial B_n(x), exact binomial expansion, n <= 7."""
    k = np.arange(n + 1)
    coeffs = np.array(
        [math.comb(n, j) * _BERNOULLI_NUMBERS[n - j] for j in k], dtype=float
    )
    return np.polynomial.polynomial.polyval(x, coeffs)


def trend_green_eval(spec: OperatorSpec, t):
    """Green's function of a derivative trend operator at ``t``.

    psi(t) = t_+^(N-1)/(N-1)!; applying D^N to it recovers a unit Dirac
    at the origin.  Only pure-derivative operators have a closed form
    here; anything else raises ``UnsupportedOperatorError``.
    """
    if spec.role != TREND:
        raise ValidationError("trend_green_eval expects a trend operator")
    if not is_pure_derivative(spec):
        raise UnsupportedOperatorError(
            "closed-form trend Green's functions are only available for "
            "pure derivative operators"
        )
    n = admissibility_order(spec)
    return _truncated_power(n, t)


def _truncated_power(n: int, t):
    """t_+^(n-1)/(n-1)! with the Heaviside convention psi(0) = 1 at n = 1."""
    t = np.asarray(t, dtype=float)
    if n == 1:
        return np.where(t >= 0.0, 1.0, 0.0)
    return np.where(t >= 0.0, t, 0.0) ** (n - 1) / math.factorial(n - 1)


def trend_green_antiderivative(spec: OperatorSpec, a, b):
    """Exact integral of the trend Green's function over [a, b]."""
    n = admissibility_order(spec)
    if not is_pure_derivative(spec):
        raise UnsupportedOperatorError("integral needs a pure derivative operator")

    def prim(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0.0, t, 0.0) ** n / math.factorial(n)

    return prim(b) - prim(a)


@dataclass
class PeriodicGreen:
    """Periodic Green's function of a seasonal operator.

    For invertible operators rho satisfies L rho = Sha (the unit Dirac
    comb); for order >= 1 it satisfies L rho = Sha - 1 and has zero mean
    over one period.  Pure derivatives of order <= 6 use the Bernoulli
    closed form -B_N({t})/N!; everything else uses a truncated Fourier
    series with ``m_terms`` coefficient pairs and a certified tail bound.

    The N = 1 closed form adopts the Fourier midpoint convention at the
    jump: rho(k) = 0 for integer k.
    """

    spec: OperatorSpec
    m_terms: int = 2048
    tail_tol: float | None = None
    force_fourier: bool = False
    _coeffs: np.ndarray = field(init=False, repr=False, default=None)
    _c0: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if self.spec.role != SEASONAL:
            raise ValidationError("PeriodicGreen expects a seasonal operator")
        self.order = admissibility_order(self.spec)
        self.pure_derivative = is_pure_derivative(self.spec)
        self.use_bernoulli = (
            self.pure_derivative and self.order <= MAX_BERNOULLI_ORDER
            and not self.force_fourier
        )
        if not self.use_bernoulli:
            self._prepare_fourier()
            if self.tail_tol is not None:
                bound = self.uniform_tail_bound()
                if not math.isfinite(bound) or bound > self.tail_tol:
                    raise TruncationError(
                        f"tail bound {bound:.3e} with {self.m_terms} terms "
                        f"exceeds requested tolerance {self.tail_tol:.3e}"
                    )

    def _prepare_fourier(self):
        n = np.arange(1, self.m_terms + 1)
        seq = frequency_sequence(self.spec, n)
        if np.any(seq == 0):
            raise ValidationError(
                "frequency sequence vanishes at a nonzero index; the operator "
                "is not seasonal-admissible"
            )
        self._coeffs = 1.0 / seq
        if self.order == 0:
            c0 = frequency_sequence(self.spec, 0)
            self._c0 = float(np.real(1.0 / c0))
        else:
            self._c0 = 0.0

    def _decay_exponent(self) -> float:
        n, gammas = _flatten(self.spec)
        if any(g < 0 for g in gammas):
            return float("nan")
        return n + sum(gammas)

    def uniform_tail_bound(self) -> float:
        """Upper bound on the truncation error, uniform in t.

        Valid when |L_hat[n]| >= (2 pi n)^g with g > 1 (derivative and
        nonnegative-gamma Sobolev factors); infinite otherwise.
        """
        if self.use_bernoulli:
            return 0.0
        g = self._decay_exponent()
        if not math.isfinite(g) or g <= 1.0:
            return float("inf")
        m = self.m_terms
        return 2.0 * (_TWO_PI**-g) * m ** (1.0 - g) / (g - 1.0)

    def pointwise_tail_bound(self, t) -> np.ndarray:
        """Abel-summation tail bound 2|c_{M+1}| / |sin(pi t)| at each point.

        Applies because |1/L_hat[n]| decreases with constant phase for the
        supported operator family; useful when the uniform bound diverges
        (slow 1/n coefficient decay).
        """
        if self.use_bernoulli:
            return np.zeros_like(np.asarray(t, dtype=float))
        c_next = 1.0 / np.abs(frequency_sequence(self.spec, self.m_terms + 1))
        s = np.sin(np.pi * (np.asarray(t, dtype=float) % 1.0))
        with np.errstate(divide="ignore"):
            return np.where(s == 0.0, np.inf, 2.0 * float(np.real(c_next)) / np.abs(s))

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Evaluate rho at ``t`` (1-periodic, vectorized)."""
        t = np.asarray(t, dtype=float)
        s = t % 1.0
        if self.use_bernoulli:
            n = self.order
            out = -_bernoulli_poly(n, s) / math.factorial(n)
            if n == 1:
                out = np.where(s == 0.0, 0.0, out)
            return out
        return self._fourier_eval(s)

    def _fourier_eval(self, s: np.ndarray):
        flat = np.atleast_1d(s).ravel()
        n = np.arange(1, self.m_terms + 1)
        # sum over conjugate pairs: 2 Re(c_n e^{2 pi i n s}), chunked in s
        # to bound the size of the phase matrix
        chunk = max(1, (1 << 22) // self.m_terms)
        vals = np.empty(flat.size)
        for start in range(0, flat.size, chunk):
            block = flat[start:start + chunk]
            phases = np.exp(2j * np.pi * np.outer(block, n))
            vals[start:start + chunk] = 2.0 * np.real(phases @ self._coeffs)
        vals += self._c0
        if self.tail_tol is not None and not math.isfinite(self.uniform_tail_bound()):
            bound = self.pointwise_tail_bound(flat)
            if np.any(bound > self.tail_tol):
                worst = float(np.max(bound))
                raise TruncationError(
                    f"pointwise tail bound {worst:.3e} exceeds requested "
                    f"tolerance {self.tail_tol:.3e} at an evaluation point"
                )
        return vals.reshape(np.shape(s)) if np.ndim(s) else float(vals[0])

    def mean(self) -> float:
        """Exact mean over one period of the represented function."""
        return self._c0 if not self.use_bernoulli else 0.0

    def integral(self, a, b):
        """Exact integral of rho over the line interval [a, b].

        Uses the periodic Bernoulli antiderivative in the closed-form case
        and term-by-term integration of the truncated series otherwise, so
        full periods contribute exactly ``mean()`` each.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.use_bernoulli:
            n = self.order

            def prim(t):
                # periodic antiderivative of the zero-mean closed form
                return -_bernoulli_poly(n + 1, t % 1.0) / math.factorial(n + 1)

            return prim(b) - prim(a)
        # term-wise: int_a^b e^{2 pi i n t} dt = (e^{2 pi i n b}-e^{2 pi i n a})/(2 pi i n)
        n = np.arange(1, self.m_terms + 1)
        eb = np.exp(2j * np.pi * np.outer(np.atleast_1d(b).ravel(), n))
        ea = np.exp(2j * np.pi * np.outer(np.atleast_1d(a).ravel(), n))
        terms = (eb - ea) @ (self._coeffs / (2j * np.pi * n))
        out = self._c0 * (np.atleast_1d(b).ravel() - np.atleast_1d(a).ravel())
        out = out + 2.0 * np.real(terms)
        return out.reshape(np.shape(b)) if np.ndim(b) else float(out[0])


def periodic_green_eval(spec: OperatorSpec, t, m_terms: int = 2048,
                        tail_tol: float | None = None):
    """Evaluate the periodic Green's function of ``spec`` at ``t``."""
    return PeriodicGreen(spec, m_terms=m_terms, tail_tol=tail_tol).eval(t)


def _side_sampling_ok(spec: OperatorSpec) -> bool:
    # Conservative criterion on the flattened factors: a pure polynomial
    # frequency growth of exponent > 1 guarantees a continuous (periodic)
    # Green's function.  Derivative total >= 2 with no roughening factors,
    # or purely Sobolev with summed exponent > 1.
    n, gammas = _flatten(spec)
    if n == 0:
        return sum(gammas) > 1.0
    return n >= 2 and all(g >= 0 for g in gammas)


def sampling_admissible(trend: OperatorSpec, seasonal: OperatorSpec) -> bool:
    """Whether point evaluations are continuous on the native space.

    Derivative pairs need N_T >= 2 and N_S >= 2; Sobolev pairs need
    gamma_T > 1 and gamma_S > 1.  Compositions are judged conservatively
    by the same exponent arithmetic on their factors.
    """
    if trend.role != TREND or seasonal.role != SEASONAL:
        raise ValidationError("sampling_admissible expects a (trend, seasonal) pair")
    return _side_sampling_ok(trend) and _side_sampling_ok(seasonal)


def operator_to_json(spec: OperatorSpec) -> dict:
    if spec.kind == "derivative":
        return {"kind": "derivative", "order": spec.order}
    if spec.kind == "sobolev":
        return {"kind": "sobolev", "gamma": spec.gamma}
    return {"kind": "composition",
            "factors": [operator_to_json(f) for f in spec.factors]}


def operator_from_json(obj: dict, role: str) -> OperatorSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("operator JSON must be an object with a 'kind' key")
    kind = obj["kind"]
    known = {"derivative": {"kind", "order"},
             "sobolev": {"kind", "gamma"},
             "composition": {"kind", "factors"}}
    if kind not in known:
        raise ValidationError(f"unknown operator kind {kind!r}")
    extra = set(obj) - known[kind]
    if extra:
        raise ValidationError(f"unknown keys in operator JSON: {sorted(extra)}")
    if kind == "derivative":
        order = obj.get("order")
        if not isinstance(order, int):
            raise ValidationError("derivative operator needs an integer 'order'")
        return derivative(order, role)
    if kind == "sobolev":
        gamma = obj.get("gamma")
        if not isinstance(gamma, (int, float)):
            raise ValidationError("sobolev operator needs a numeric 'gamma'")
        return sobolev(float(gamma), role)
    factors = obj.get("factors", [])
    if not isinstance(factors, list):
        raise ValidationError("composition 'factors' must be a list")
    return composition([operator_from_json(f, role) for f in factors], role)
