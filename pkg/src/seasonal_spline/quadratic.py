"""Kernel solver for quadratically regularized seasonal-trend recovery.

With invertible (Sobolev) operators and squared-L2 regularization the
problem has a unique solution spanned by one coupled kernel section per
measurement: the trend part uses the Green's function of L_T* L_T (the
inverse Fourier transform of |L_T_hat|^-2) and the seasonal part the
periodic Green's function of L_S* L_S.  Both components share the same
coefficient vector alpha = (G + lambda I)^-1 y, which is what makes this
path a structurally coupled contrast to the TV solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    ConditioningError,
    TruncationError,
    UnsupportedOperatorError,
    ValidationError,
)
from .operators import OperatorSpec, PeriodicGreen, _flatten, sobolev
from .sensing import BoxAverage, Sampling, WeightedDensity, periodize


def _effective_gamma(spec: OperatorSpec, side: str) -> float:
    n, gammas = _flatten(spec)
    if n > 0:
        raise UnsupportedOperatorError(
            f"the quadratic path needs an invertible {side} operator; "
            f"got derivative order {n}"
        )
    return float(sum(gammas))


class _ExponentialKernel:
    """Closed form for gamma = 1: k(t) = exp(-|t|)/2."""

    def eval(self, t):
        return 0.5 * np.exp(-np.abs(np.asarray(t, dtype=float)))

    def int1(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * 0.5 * (1.0 - np.exp(-np.abs(u)))

    def int2(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        return 0.5 * (u - 1.0 + np.exp(-u))


class _TabulatedKernel:
    """Even kernel tabulated by an FFT inverse transform of (1+w^2)^-gamma.

    The frequency extent is chosen so the neglected spectral tail is below
    ``tol``; the time period is large enough that aliasing of the
    exponentially decaying kernel is negligible.  Cubic interpolation on
    |t| with two spline antiderivatives supplies the window pairings.
    """

    def __init__(self, gamma: float, spatial_range: float, tol: float):
        if gamma <= 0.5:
            raise UnsupportedOperatorError(
                "trend kernel requires an effective Sobolev exponent > 1/2"
            )
        omega_max = ((2.0 * gamma - 1.0) * math.pi * tol) ** (-1.0 / (2.0 * gamma - 1.0))
        period = max(4.0 * spatial_range, 64.0)
        n = 1 << max(12, math.ceil(math.log2(period * omega_max / math.pi)))
        if n > 1 << 24:
            raise TruncationError(
                f"cannot tabulate trend kernel for gamma={gamma} at tol={tol}"
            )
        dt = period / n
        d_omega = 2.0 * math.pi / period
        m = np.arange(n)
        omega = (m - n / 2) * d_omega
        spectrum = (1.0 + omega**2) ** (-gamma)
        # k(j*dt) = d_omega/(2 pi) * (-1)^j * sum_m spectrum_m e^{2 pi i j m / n}
        vals = (d_omega / (2.0 * math.pi)) * np.real(
            (-1.0) ** m * n * np.fft.ifft(spectrum)
        )
        keep = int(min(period / 2.0, max(2.0 * spatial_range, 48.0)) / dt)
        self.r_max = keep * dt
        grid = m[: keep + 1] * dt
        self._spline = CubicSpline(grid, vals[: keep + 1])
        self._anti1 = self._spline.antiderivative()
        self._anti2 = self._anti1.antiderivative()
        self._a1_max = float(self._anti1(self.r_max))
        self._a2_max = float(self._anti2(self.r_max))

    def eval(self, t):
        u = np.abs(np.asarray(t, dtype=float))
        return np.where(u <= self.r_max, self._spline(np.minimum(u, self.r_max)), 0.0)

    def int1(self, u):
        u = np.asarray(u, dtype=float)
        mag = np.minimum(np.abs(u), self.r_max)
        return np.sign(u) * np.where(np.abs(u) <= self.r_max,
                                     self._anti1(mag), self._a1_max)

    def int2(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        inside = self._anti2(np.minimum(u, self.r_max))
        outside = self._a2_max + self._a1_max * (u - self.r_max)
        return np.where(u <= self.r_max, inside, outside)


@dataclass(eq=False)
class KernelPair:
    """Trend kernel psi_{L_T* L_T}(x - y) and its periodic counterpart.

    Both kernels are symmetric; the periodic one is 1-periodic in each
    argument with Fourier truncation tail below ``tail_tol``.
    """

    trend_gamma: float
    seasonal_gamma: float
    trend_kernel: object
    seasonal_green: PeriodicGreen
    m_terms: int
    tail_tol: float

    def k_t(self, dx):
        return self.trend_kernel.eval(dx)

    def k_t_window(self, lo, hi, dx0=0.0):
        """Integral of k_t(dx0 - s) over s in [lo, hi]."""
        return self.trend_kernel.int1(dx0 - lo) - self.trend_kernel.int1(dx0 - hi)

    def k_s(self, dx):
        return self.seasonal_green.eval(dx)


def build_kernel_pair(trend: OperatorSpec, seasonal: OperatorSpec,
                      m_terms: int = 2048, tail_tol: float = 1e-6,
                      spatial_range: float = 16.0) -> KernelPair:
    """Construct the coupled kernels for an invertible operator pair.

    gamma_T = 1 uses the closed form exp(-|t|)/2; other exponents fall
    back to a tabulated numeric inverse Fourier transform.  The seasonal
    kernel is the periodic Green's function of the squared-modulus
    operator, i.e. a Sobolev operator with doubled exponent; ``m_terms``
    is raised automatically if needed to push the truncation tail below
    ``tail_tol``.
    """
    gamma_t = _effective_gamma(trend, "trend")
    gamma_s = _effective_gamma(seasonal, "seasonal")
    if gamma_t == 1.0:
        trend_kernel = _ExponentialKernel()
    else:
        trend_kernel = _TabulatedKernel(gamma_t, spatial_range, tail_tol)
    g = 2.0 * gamma_s
    if g > 1.0:
        needed = (2.0 * (2.0 * math.pi) ** -g / ((g - 1.0) * tail_tol)) ** (1.0 / (g - 1.0))
        m_terms = max(m_terms, math.ceil(needed))
    if m_terms > 1 << 23:
        raise TruncationError(
            f"seasonal kernel needs {m_terms} terms for tail {tail_tol:.1e}; "
            "raise tail_tol or the seasonal exponent"
        )
    seasonal_green = PeriodicGreen(
        sobolev(g, role="seasonal"), m_terms=m_terms, tail_tol=tail_tol
    )
    return KernelPair(
        trend_gamma=gamma_t,
        seasonal_gamma=gamma_s,
        trend_kernel=trend_kernel,
        seasonal_green=seasonal_green,
        m_terms=m_terms,
        tail_tol=tail_tol,
    )


# --------------------------------------------------------------------------
# Gram assembly


def _trend_pairing(phi_i, phi_j, kernels: KernelPair) -> float:
    """<L_T^{-1*} phi_i, L_T^{-1*} phi_j> over the line."""
    k = kernels.trend_kernel
    if isinstance(phi_i, Sampling) and isinstance(phi_j, Sampling):
        return float(k.eval(phi_i.x - phi_j.x))
    if isinstance(phi_i, Sampling) and isinstance(phi_j, BoxAverage):
        return float(kernels.k_t_window(phi_j.start, phi_j.start + phi_j.length,
                                        dx0=phi_i.x))
    if isinstance(phi_i, BoxAverage) and isinstance(phi_j, Sampling):
        return _trend_pairing(phi_j, phi_i, kernels)
    if isinstance(phi_i, BoxAverage) and isinstance(phi_j, BoxAverage):
        a, b = phi_i.start, phi_i.start + phi_i.length
        c, d = phi_j.start, phi_j.start + phi_j.length
        return float(k.int2(b - c) - k.int2(a - c) - k.int2(b - d) + k.int2(a - d))
    # weighted densities: quadrature of phi_i against the section of phi_j
    from .sensing import _density_integral

    if isinstance(phi_i, WeightedDensity):
        section = _trend_section(phi_j, kernels)
        return _density_integral(phi_i, section, tol=1e-9)
    if isinstance(phi_j, WeightedDensity):
        return _trend_pairing(phi_j, phi_i, kernels)
    raise ValidationError(f"unsupported functional pair ({phi_i!r}, {phi_j!r})")


def _trend_section(phi, kernels: KernelPair):
    """The function (phi * psi_{L_T* L_T}) as a callable."""
    if isinstance(phi, Sampling):
        return lambda t: kernels.k_t(np.asarray(t) - phi.x)
    if isinstance(phi, BoxAverage):
        lo, hi = phi.start, phi.start + phi.length
        return lambda t: kernels.k_t_window(lo, hi, dx0=np.asarray(t))
    if isinstance(phi, WeightedDensity):
        from .sensing import _simpson_refine

        def section(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            out = np.array([
                _simpson_refine(
                    lambda s: np.asarray(phi.func(s)) * kernels.k_t(ti - s),
                    phi.support[0], phi.support[1], 1e-9)
                for ti in t
            ])
            return out if out.size > 1 else float(out[0])

        return section
    raise ValidationError(f"unknown sensing functional {phi!r}")


def _seasonal_coeffs(phi, n: np.ndarray) -> np.ndarray:
    """Fourier coefficients of Per{phi} at nonnegative indices ``n``."""
    if isinstance(phi, Sampling):
        return np.exp(-2j * np.pi * n * phi.x)
    if isinstance(phi, BoxAverage):
        out = np.empty(n.size, dtype=complex)
        nz = n != 0
        out[~nz] = phi.length
        nn = n[nz]
        out[nz] = (np.exp(-2j * np.pi * nn * phi.start)
                   * (1.0 - np.exp(-2j * np.pi * nn * phi.length))
                   / (2j * np.pi * nn))
        return out
    if isinstance(phi, WeightedDensity):
        per = periodize(phi)
        vals = per.values[:-1]
        spectrum = np.fft.fft(vals) / vals.size
        out = np.zeros(n.size, dtype=complex)
        in_range = n < vals.size // 2
        out[in_range] = spectrum[n[in_range]]
        return out
    raise ValidationError(f"unknown sensing functional {phi!r}")


def _seasonal_pairing_matrix(plan, kernels: KernelPair) -> np.ndarray:
    """<L_S^{-1*} Per phi_i, L_S^{-1*} Per phi_j> for all pairs, spectrally."""
    n = np.arange(kernels.m_terms + 1)
    seq = (1.0 + (2.0 * np.pi * n) ** 2) ** (-kernels.seasonal_gamma)
    coeffs = np.stack([_seasonal_coeffs(phi, n) for phi in plan])
    weights = seq.copy()
    weights[1:] *= 2.0  # conjugate pairs
    return np.real((coeffs * weights) @ coeffs.conj().T)


def gram(plan, kernels: KernelPair) -> np.ndarray:
    """Symmetric L x L Gram matrix of the coupled kernel sections.

    Entry (i, j) is k_T-pairing + k_S-pairing of functionals i and j;
    the upper triangle is computed once and mirrored, so G is bitwise
    symmetric.  Raises if the result is not numerically PSD.
    """
    length = len(plan)
    if length == 0:
        raise ValidationError("sensing plan is empty")
    g = _seasonal_pairing_matrix(plan, kernels)
    g = 0.5 * (g + g.T)
    for i in range(length):
        for j in range(i, length):
            v = g[i, j] + _trend_pairing(plan[i], plan[j], kernels)
            g[i, j] = v
            g[j, i] = v
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] < -1e-10 * np.trace(g) / length:
        raise ValidationError(
            f"Gram matrix is not PSD (lambda_min = {eigs[0]:.3e}); kernel "
            "tabulation tolerance is too loose"
        )
    return g


def solve_quadratic(g: np.ndarray, y, lam: float) -> np.ndarray:
    """alpha = (G + lambda I)^-1 y by Cholesky with iterative refinement.

    Escalating diagonal jitter is applied if the factorization fails;
    exhaustion raises ``ConditioningError`` reporting the jitter used.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] != y.size:
        raise ValidationError("shape mismatch between G and y")
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise ValidationError("G must be symmetric")
    m = g + lam * np.eye(g.shape[0])
    scale = max(np.trace(m) / g.shape[0], 1.0)
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(m + jitter * np.eye(g.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = 1e-14 * scale if jitter == 0.0 else jitter * 100.0
            if jitter > 1e-6 * scale:
                raise ConditioningError(
                    f"Cholesky failed even with jitter {jitter:.3e}",
                    jitter=jitter,
                ) from None
    alpha = cho_solve(factor, y)
    for _ in range(5):
        resid = y - m @ alpha
        if np.linalg.norm(resid) <= 1e-12 * max(np.linalg.norm(y), 1e-300):
            break
        alpha = alpha + cho_solve(factor, resid)
    return alpha


def evaluate_quadratic(alpha, plan, kernels: KernelPair, t):
    """(f_T(t), f_S(t)) of the coupled solution, vectorized in ``t``.

    Both components share the same alpha: f_T sums the trend kernel
    sections and f_S the periodized seasonal sections.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != len(plan):
        raise ValidationError("alpha length does not match the plan")
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    f_t = np.zeros(flat.size)
    for coef, phi in zip(alpha, plan):
        if coef != 0.0:
            section = _trend_section(phi, kernels)
            f_t += coef * np.asarray(section(flat), dtype=float)
    n = np.arange(kernels.m_terms + 1)
    seq = (1.0 + (2.0 * np.pi * n) ** 2) ** (-kernels.seasonal_gamma)
    coeffs = np.stack([_seasonal_coeffs(phi, n) for phi in plan])
    f_hat = seq * (alpha @ coeffs)
    phases = np.exp(2j * np.pi * np.outer(flat, n))
    f_s = np.real(phases[:, :1] @ f_hat[:1][:, None]).ravel() \
        + 2.0 * np.real(phases[:, 1:] @ f_hat[1:])
    if t.ndim == 0:
        return float(f_t[0]), float(f_s[0])
    return f_t.reshape(t.shape), f_s.reshape(t.shape)
