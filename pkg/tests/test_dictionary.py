import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seasonal_spline import (
    AdmissibilityError,
    ValidationError,
    derivative,
    sobolev,
)
from seasonal_spline.dictionary import (
    Case,
    GridSpec,
    assemble,
    build_dictionary,
    composite_norm,
    default_margin,
    evaluate_solution,
    regularization_value,
)
from seasonal_spline.harness import AtomicMeasure
from seasonal_spline.sensing import BoxAverage, Sampling
from conftest import gauss_piecewise

D2T = derivative(2)
D2S = derivative(2, "seasonal")


def small_grid(**overrides):
    kwargs = dict(h_t=0.5, t_lo=0.0, t_hi=2.0, margin=2, n_s=4)
    kwargs.update(overrides)
    return GridSpec(**kwargs)


class Blocks:
    def __init__(self, a, c, b, alpha=None):
        self.a = np.asarray(a, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.alpha = alpha


# --------------------------------------------------------------------------
# grids and case flags


def test_grid_validation():
    with pytest.raises(ValidationError):
        GridSpec(h_t=0.0, t_lo=0, t_hi=1, margin=0, n_s=4)
    with pytest.raises(ValidationError):
        GridSpec(h_t=0.5, t_lo=1, t_hi=0, margin=0, n_s=4)
    with pytest.raises(ValidationError):
        GridSpec(h_t=0.5, t_lo=0, t_hi=1, margin=-1, n_s=4)
    with pytest.raises(ValidationError):
        GridSpec(h_t=0.5, t_lo=0, t_hi=1, margin=0, n_s=0)


def test_default_margin():
    assert default_margin(0.5) == 4
    assert default_margin(1.0 / 128.0) == 256


def test_build_derivative_pair():
    d = build_dictionary(D2T, D2S, small_grid())
    assert d.case is Case.TREND_ORDER_POSITIVE
    np.testing.assert_allclose(d.trend_knots, np.arange(-2, 7) * 0.5)
    assert d.trend_knots.size == 9
    assert d.poly_degrees == (0, 1)
    np.testing.assert_allclose(d.seasonal_knots, [0.0, 0.25, 0.5, 0.75])
    assert not d.has_constant
    assert d.zero_sum
    assert d.n_columns == 9 + 2 + 4


def test_build_sobolev_pair():
    d = build_dictionary(sobolev(2.0), sobolev(2.0, "seasonal"), small_grid())
    assert d.case is Case.BOTH_INVERTIBLE
    assert d.poly_degrees == ()
    assert not d.has_constant
    assert not d.zero_sum


def test_build_mixed_pair():
    d = build_dictionary(sobolev(2.0), D2S, small_grid())
    assert d.case is Case.TREND_INVERTIBLE_SEASONAL_NOT
    assert d.has_constant
    assert d.zero_sum
    assert d.n_columns == 9 + 0 + 4 + 1


# --------------------------------------------------------------------------
# assembly


def test_assemble_sampling_row_entries():
    d = build_dictionary(D2T, D2S, small_grid())
    design = assemble(d, [Sampling(0.0)])
    row = design.matrix[0]
    knot_zero = int(np.flatnonzero(d.trend_knots == 0.0)[0])
    assert row[knot_zero] == 0.0       # psi_{D^2}(0) = 0_+ = 0
    assert row[d.c_slice][0] == 1.0    # constant monomial
    assert row[d.c_slice][1] == 0.0    # t at t=0


def test_assemble_box_row_kills_zero_mean_atoms():
    d = build_dictionary(D2T, D2S, small_grid())
    design = assemble(d, [BoxAverage(0.0, 3.0)])
    np.testing.assert_array_equal(design.matrix[0, d.b_slice], 0.0)


def test_assemble_rows_match_dense_quadrature():
    d = build_dictionary(D2T, D2S, small_grid(n_s=3))
    plan = [BoxAverage(0.25, 1.3), BoxAverage(-0.5, 2.0)]
    design = assemble(d, plan)
    atoms = d.atoms()
    seasonal_kinks = np.concatenate([
        v + np.arange(-3.0, 4.0) for v in d.seasonal_knots
    ])
    for i, phi in enumerate(plan):
        lo, hi = phi.start, phi.start + phi.length
        for j, atom in enumerate(atoms):
            breaks = np.unique(np.clip(np.concatenate([
                np.linspace(lo, hi, 65),
                np.arange(math.floor(lo), math.ceil(hi) + 1.0),
                np.asarray(d.trend_knots, dtype=float),
                seasonal_kinks,
            ]), lo, hi))
            oracle = gauss_piecewise(atom.eval, breaks)
            assert design.matrix[i, j] == pytest.approx(oracle, abs=1e-8), (i, j)


def test_assemble_rejects_inadmissible_sampling():
    d = build_dictionary(derivative(1), D2S, small_grid())
    with pytest.raises(AdmissibilityError, match="N_T=1"):
        assemble(d, [Sampling(0.5)])


def test_assemble_rejects_empty_plan():
    d = build_dictionary(D2T, D2S, small_grid())
    with pytest.raises(ValidationError):
        assemble(d, [])


# --------------------------------------------------------------------------
# evaluation


def test_evaluate_zero_solution():
    d = build_dictionary(D2T, D2S, small_grid())
    sol = Blocks(np.zeros(9), np.zeros(2), np.zeros(4))
    f_t, f_s = evaluate_solution(d, sol, np.array([0.3, 1.7]))
    np.testing.assert_array_equal(f_t, 0.0)
    np.testing.assert_array_equal(f_s, 0.0)


def test_evaluate_single_green_atom():
    d = build_dictionary(D2T, D2S, small_grid())
    a = np.zeros(9)
    a[np.flatnonzero(d.trend_knots == 1.0)[0]] = 2.0
    sol = Blocks(a, np.zeros(2), np.zeros(4))
    f_t, _ = evaluate_solution(d, sol, 3.0)
    assert f_t == pytest.approx(4.0)


def test_evaluate_block_length_mismatch():
    d = build_dictionary(D2T, D2S, small_grid())
    with pytest.raises(ValidationError):
        evaluate_solution(d, Blocks(np.zeros(3), np.zeros(2), np.zeros(4)), 0.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_seasonal_component_is_periodic(seed):
    rng = np.random.default_rng(seed)
    d = build_dictionary(D2T, D2S, small_grid())
    b = rng.normal(size=4)
    b -= b.mean()
    sol = Blocks(rng.normal(size=9), rng.normal(size=2), b)
    t = rng.uniform(-5, 5, 20)
    _, f_s1 = evaluate_solution(d, sol, t)
    _, f_s2 = evaluate_solution(d, sol, t + 1.0)
    np.testing.assert_allclose(f_s1, f_s2, atol=1e-12)


# --------------------------------------------------------------------------
# norms and identifiability


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_tv_l1_isometry(seed):
    # lambda_T ||a||_1 + lambda_S ||b||_1 equals the TV norms of the atomic
    # measures L_T f_T and L_S f_S computed independently with merging
    rng = np.random.default_rng(seed)
    d = build_dictionary(D2T, D2S, small_grid())
    a = np.round(rng.normal(size=9), 3)
    b = np.round(rng.normal(size=4), 3)
    lam_t, lam_s = rng.uniform(0.1, 2.0, 2)
    got = regularization_value(d, a, b, lam_t, lam_s)
    w_t = AtomicMeasure(d.trend_knots, a, domain="line")
    w_s = AtomicMeasure(d.seasonal_knots, b, domain="circle")
    assert got == lam_t * w_t.tv_norm + lam_s * w_s.tv_norm


def test_composite_norm_cases():
    d = build_dictionary(D2T, D2S, small_grid())
    a = np.array([1.0, -2.0] + [0.0] * 7)
    c = np.array([3.0, 4.0])
    b = np.array([0.5, -0.5, 0.0, 0.0])
    # trend part: ||a||_1 + ||c||_2 = 3 + 5; seasonal: ||b||_1 = 1
    assert composite_norm(d, a, c, b, p=1) == pytest.approx(9.0)
    assert composite_norm(d, a, c, b, p=2) == pytest.approx(math.hypot(8.0, 1.0))
    assert composite_norm(d, a, c, b, p=math.inf) == pytest.approx(8.0)

    d2 = build_dictionary(sobolev(2.0), D2S, small_grid())
    assert composite_norm(d2, a, np.array([]), b, alpha=2.0, p=1) == pytest.approx(
        3.0 + 1.0 + 2.0
    )


def test_canonical_decomposition_mean():
    # with the zero-sum convention the Green part of f_S has zero mean, so
    # mean(f_S) = alpha when the constant column exists and 0 otherwise
    rng = np.random.default_rng(5)
    b = rng.normal(size=4)
    b -= b.mean()

    d = build_dictionary(D2T, D2S, small_grid())
    sol = Blocks(np.zeros(9), np.zeros(2), b)
    mean = gauss_piecewise(lambda t: evaluate_solution(d, sol, t)[1],
                           np.linspace(0, 1, 9))
    assert mean == pytest.approx(0.0, abs=1e-12)

    d2 = build_dictionary(sobolev(2.0), D2S, small_grid())
    sol2 = Blocks(np.zeros(9), np.zeros(0), b, alpha=1.25)
    mean2 = gauss_piecewise(lambda t: evaluate_solution(d2, sol2, t)[1],
                            np.linspace(0, 1, 9))
    assert mean2 == pytest.approx(1.25, abs=1e-12)


def test_constant_shift_between_components_changes_blocks():
    # moving a constant from f_T to f_S is detectable in the coefficients:
    # representing f_S + delta requires the constant column, which the
    # derivative-trend dictionary does not have
    d = build_dictionary(D2T, D2S, small_grid())
    with pytest.raises(ValidationError):
        d.stack(np.zeros(9), np.zeros(2), np.zeros(4), alpha=1.0)


# --------------------------------------------------------------------------
# export


def test_design_matrix_csv_and_dictionary_json(tmp_path):
    d = build_dictionary(D2T, D2S, small_grid())
    design = assemble(d, [Sampling(0.0), Sampling(1.0)])
    path = tmp_path / "design.csv"
    design.to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0].startswith("psi@-1,")
    assert len(rows) == 3
    loaded = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(loaded, design.matrix)

    desc = d.to_json()
    assert desc["case"] == "trend_order_positive"
    assert desc["zero_sum"] is True
    assert desc["grid"]["n_s"] == 4
