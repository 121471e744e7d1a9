import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msem.basis1d import gll_grid
from msem.errors import DataEvaluationError, TopDegreeError
from msem.forms import (
    AnalyticForm,
    DiscreteForm,
    boundary_load,
    element_basis,
    exterior_derivative,
    incidence,
    load_vector,
    mass_matrix,
    reconstruct_eval,
    reduce,
)
from msem.geometry import AffineMap, IdentityMap, SinusoidalMap, element_geometry
from msem.topology import Side, boundary_cells, build_complex

from conftest import as_analytic

pi = np.pi
UNIT = AffineMap()
small_meshes = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4))


@settings(max_examples=15, deadline=None)
@given(small_meshes, st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_reduce_reconstruct_is_identity(shape, k, seed):
    cx = build_complex(*shape)
    c = np.random.default_rng(seed).standard_normal(cx.count(k))
    form = DiscreteForm.from_values(cx, IdentityMap(), k, c)
    back = reduce(as_analytic(form), cx, IdentityMap()).values
    assert np.abs(back - c).max() <= 1e-11 * max(1.0, np.abs(c).max())


def test_reduce_area_of_unit_square():
    one = AnalyticForm.scalar(2, lambda x, y: np.ones_like(x))
    assert reduce(one, build_complex(1, 1, 1), UNIT).values.tolist() == pytest.approx([1.0])


def test_reduce_point_value():
    cx = build_complex(1, 1, 1)
    vals = reduce(AnalyticForm.scalar(0, lambda x, y: x * y), cx, UNIT).values
    assert vals[3] == 1.0  # node (1, 1)


def test_reduce_gradient_is_closed():
    # d(x^2 y) = 2xy dx + x^2 dy
    grad = AnalyticForm.covector(lambda x, y: 2 * x * y, lambda x, y: x * x)
    for m in (UNIT, SinusoidalMap()):
        cx = build_complex(3, 2, 3)
        u = reduce(grad, cx, m).values
        assert np.abs(incidence(cx, 1) @ u).max() <= 1e-13


def test_reduce_rejects_nonfinite_data():
    bad = AnalyticForm.scalar(0, lambda x, y: np.log(x - 0.5))
    with pytest.raises(DataEvaluationError):
        reduce(bad, build_complex(2, 2, 2), UNIT)


@pytest.mark.parametrize("m", [UNIT, SinusoidalMap()], ids=["affine", "sinusoidal"])
def test_commuting_diagram(m):
    cx = build_complex(3, 3, 4)
    a = AnalyticForm.scalar(0, lambda x, y: np.sin(pi * x) * np.sin(pi * y))
    da = AnalyticForm.covector(
        lambda x, y: pi * np.cos(pi * x) * np.sin(pi * y),
        lambda x, y: pi * np.sin(pi * x) * np.cos(pi * y),
    )
    assert np.abs(reduce(da, cx, m).values - incidence(cx, 0) @ reduce(a, cx, m).values).max() <= 1e-12
    # u = y^2 dx + sin(x) dy, du = (cos x - 2y) dx^dy
    u = AnalyticForm.covector(lambda x, y: y * y, lambda x, y: np.sin(x))
    du = AnalyticForm.scalar(2, lambda x, y: np.cos(x) - 2 * y)
    lhs = reduce(du, cx, m).values
    assert np.abs(lhs - incidence(cx, 1) @ reduce(u, cx, m).values).max() <= 1e-12


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_reconstruction_reproduces_polynomials(N, seed):
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((N + 1, N + 1))

    def poly(x, y):
        return np.polynomial.polynomial.polyval2d(x, y, coef)

    cx = build_complex(1, 1, N)
    form = DiscreteForm(reduce(AnalyticForm.scalar(0, poly), cx, IdentityMap()), IdentityMap())
    pts = rng.uniform(-1, 1, (50, 2))
    got = np.array([reconstruct_eval(form, [p[0]], [p[1]])[0, 0, 0] for p in pts])
    assert np.abs(got - poly(pts[:, 0], pts[:, 1])).max() <= 1e-11 * max(1, np.abs(coef).sum())


def test_reconstruct_zero_and_constant_density():
    cx = build_complex(1, 1, 1)
    xi = np.linspace(-1, 1, 5)
    zero = DiscreteForm.from_values(cx, UNIT, 1, np.zeros(cx.n1))
    assert np.all(reconstruct_eval(zero, xi, xi, physical=True) == 0)
    area = DiscreteForm.from_values(cx, UNIT, 2, np.array([2.5]))
    np.testing.assert_allclose(reconstruct_eval(area, xi, xi, physical=True), 2.5, atol=1e-14)


@given(small_meshes, st.integers(0, 2**32 - 1))
def test_exterior_derivative_squares_to_zero(shape, seed):
    cx = build_complex(*shape)
    # integer values keep the float arithmetic exact
    vals = np.random.default_rng(seed).integers(-1000, 1000, cx.n0).astype(float)
    w = DiscreteForm.from_values(cx, UNIT, 0, vals)
    dd = exterior_derivative(exterior_derivative(w))
    assert dd.degree == 2 and np.all(dd.values == 0)
    const = DiscreteForm.from_values(cx, UNIT, 0, np.full(cx.n0, 3.0))
    assert np.all(exterior_derivative(const).values == 0)


def test_exterior_derivative_of_top_form():
    cx = build_complex(1, 1, 1)
    with pytest.raises(TopDegreeError):
        exterior_derivative(DiscreteForm.from_values(cx, UNIT, 2, np.ones(1)))


def test_mass_matrix_unit_area_form():
    M2 = mass_matrix(2, build_complex(1, 1, 1), UNIT).toarray()
    np.testing.assert_allclose(M2, [[1.0]], atol=1e-14)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_mass_matrix_spd(k):
    cx = build_complex(2, 2, 3)
    M = mass_matrix(k, cx, SinusoidalMap()).toarray()
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    assert np.linalg.eigvalsh(M).min() > 0


def test_mass_matrix_zero_form_row_sums_integrate_basis():
    cx = build_complex(1, 1, 3)
    M0 = mass_matrix(0, cx, IdentityMap()).toarray()
    w = gll_grid(3).weights
    # the constant 1 is exactly represented, so row sums are the exact basis integrals
    np.testing.assert_allclose(M0.sum(axis=1), np.outer(w, w).ravel(), atol=1e-14)


def test_mass_matrix_scaling():
    cx = build_complex(2, 2, 2)
    h = 0.25
    M2h = mass_matrix(2, cx, AffineMap(0, h, 0, h)).toarray()
    M21 = mass_matrix(2, cx, AffineMap()).toarray()
    np.testing.assert_allclose(M2h, M21 / h**2, rtol=1e-13)


def test_gll_rule_lumps_zero_forms_and_is_exact_for_two_forms_on_affine_meshes():
    cx = build_complex(2, 3, 3)
    m = AffineMap(0, 2, 0, 1)
    M0 = mass_matrix(0, cx, m, rule="gll").toarray()
    assert np.count_nonzero(M0 - np.diag(np.diag(M0))) == 0
    np.testing.assert_allclose(
        mass_matrix(2, cx, m, rule="gll").toarray(),
        mass_matrix(2, cx, m, rule="gauss").toarray(),
        atol=1e-13,
    )
    with pytest.raises(ValueError):
        mass_matrix(0, cx, m, rule="simpson")


def test_mass_matrix_reproduces_inner_product_of_projections():
    cx = build_complex(2, 2, 4)
    m = SinusoidalMap()
    u = AnalyticForm.covector(lambda x, y: x * y, lambda x, y: 1 + x)
    c = reduce(u, cx, m).values
    # ||pi_h u||^2 via mass matrix against direct quadrature of the reconstruction
    xi, w = np.polynomial.legendre.leggauss(12)
    form = DiscreteForm.from_values(cx, m, 1, c)
    vals = reconstruct_eval(form, xi, xi, physical=True)
    det = element_geometry(cx, m, xi, xi).det
    direct = np.einsum("ebad,ebad,eba,b,a->", vals, vals, det, w, w)
    assert c @ (mass_matrix(1, cx, m, q=12) @ c) == pytest.approx(direct, rel=1e-13)


def test_boundary_load_zero_data():
    cx = build_complex(2, 2, 3)
    for k in (0, 1):
        out = boundary_load(k, list(Side), lambda x, y, nx, ny: 0 * x, cx, UNIT)
        assert np.all(out == 0)


def test_boundary_load_constant_sums_to_length():
    cx = build_complex(1, 1, 1)
    out = boundary_load(0, [Side.LEFT], lambda x, y, nx, ny: 3.0 + 0 * x, cx, IdentityMap())
    assert out.sum() == pytest.approx(3.0 * 2.0)


@pytest.mark.parametrize("k", [0, 1])
def test_boundary_load_vanishes_off_boundary(k):
    cx = build_complex(3, 2, 3)
    out = boundary_load(k, list(Side), lambda x, y, nx, ny: 1 + x * y + nx, cx, SinusoidalMap())
    on = np.unique(np.concatenate([boundary_cells(cx, s, k) for s in Side]))
    assert np.all(np.delete(out, on) == 0)
    assert np.all(out[on] != 0)


def test_boundary_load_outward_normal():
    cx = build_complex(1, 1, 2)
    for side, n in [(Side.BOTTOM, (0, -1)), (Side.RIGHT, (1, 0)), (Side.TOP, (0, 1)), (Side.LEFT, (-1, 0))]:
        got = boundary_load(0, [side], lambda x, y, nx, ny: nx + 2 * ny, cx, UNIT).sum()
        assert got == pytest.approx(n[0] + 2 * n[1], abs=1e-14)


def test_load_vector_matches_mass_times_reduction_for_discrete_data():
    cx = build_complex(2, 2, 3)
    # a degree-(2, 3) / (3, 2) covector lies in the 1-form space of N = 3 on affine maps
    f = AnalyticForm.covector(lambda x, y: x**2 * y**3, lambda x, y: x**3 * y**2 - x)
    lv = load_vector(f, cx, UNIT)
    np.testing.assert_allclose(lv, mass_matrix(1, cx, UNIT) @ reduce(f, cx, UNIT).values, atol=1e-13)


def test_element_basis_shapes():
    xi = np.linspace(-1, 1, 4)
    eta = np.linspace(-1, 1, 3)
    assert [b.shape for b in element_basis(2, 0, xi, eta)] == [(9, 3, 4)]
    assert [b.shape for b in element_basis(2, 1, xi, eta)] == [(6, 3, 4), (6, 3, 4)]
    assert [b.shape for b in element_basis(2, 2, xi, eta)] == [(4, 3, 4)]
