import numpy as np
import pytest


def gauss_piecewise(f, breaks, nodes=24):
    """Composite Gauss-Legendre quadrature with interval splits at breaks.

    Exact (to rounding) for piecewise polynomials of degree < 2*nodes,
    which covers every closed-form atom in the package.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total += half * float(w @ np.asarray(f(mid + half * x), dtype=float))
    return total


def tv_reference_objective(matrix, y, lam_t, lam_s, a_slice, b_slice, zero_sum):
    """Independent interior-point solution of the finite TV program (cvxpy)."""
    import cvxpy as cp

    x = cp.Variable(matrix.shape[1])
    obj = (cp.sum_squares(y - matrix @ x)
           + lam_t * cp.norm1(x[a_slice])
           + lam_s * cp.norm1(x[b_slice]))
    constraints = [cp.sum(x[b_slice]) == 0] if zero_sum else []
    problem = cp.Problem(cp.Minimize(obj), constraints)
    problem.solve(solver=cp.CLARABEL)
    return float(problem.value)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
