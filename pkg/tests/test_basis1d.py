import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from msem.basis1d import (
    edge_basis,
    edge_eval,
    gauss_legendre,
    gll_grid,
    lagrange_basis,
    lagrange_deriv_matrix,
    lagrange_eval,
)
from msem.errors import InvalidOrderError

orders = st.integers(min_value=1, max_value=24)


def test_gll_n1():
    g = gll_grid(1)
    assert g.nodes.tolist() == [-1.0, 1.0]
    np.testing.assert_allclose(g.weights, [1.0, 1.0], atol=1e-15)


def test_gll_n2():
    g = gll_grid(2)
    np.testing.assert_allclose(g.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(g.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)


@pytest.mark.parametrize("N", [0, -3])
def test_gll_rejects_nonpositive_order(N):
    with pytest.raises(InvalidOrderError):
        gll_grid(N)


@given(orders)
def test_gll_nodes_match_legendre_derivative_roots(N):
    # independent oracle: interior nodes are the roots of L_N'
    interior = np.sort(npleg.legroots(npleg.legder([0] * N + [1]))) if N > 1 else []
    g = gll_grid(N)
    assert g.nodes[0] == -1.0 and g.nodes[-1] == 1.0
    assert np.all(np.diff(g.nodes) > 0)
    np.testing.assert_allclose(g.nodes[1:-1], interior, atol=1e-12)
    assert abs(g.weights.sum() - 2.0) < 1e-13


@given(orders)
def test_gll_quadrature_exact_to_degree_2n_minus_1(N):
    g = gll_grid(N)
    for k in range(2 * N):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(g.weights @ g.nodes**k - exact) < 1e-12


def test_gauss_legendre_matches_numpy():
    x, w = gauss_legendre(7)
    xr, wr = npleg.leggauss(7)
    np.testing.assert_allclose(x, xr, atol=1e-14)
    np.testing.assert_allclose(w, wr, atol=1e-14)


@given(orders)
def test_lagrange_cardinal(N):
    g = gll_grid(N)
    np.testing.assert_allclose(lagrange_basis(g, g.nodes), np.eye(N + 1), atol=1e-12)


@given(orders, st.floats(-1, 1))
def test_lagrange_partition_of_unity(N, xi):
    g = gll_grid(N)
    assert abs(lagrange_basis(g, [xi]).sum() - 1.0) < 1e-11


def test_lagrange_linear_midpoint():
    assert lagrange_eval(gll_grid(1), 0, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_lagrange_index_out_of_range():
    with pytest.raises(IndexError):
        lagrange_eval(gll_grid(2), 3, 0.0)


def test_lagrange_extrapolates_outside_reference_interval():
    # polynomial extension: l_0 of N=1 is (1 - x)/2 everywhere
    assert lagrange_eval(gll_grid(1), 0, 3.0) == pytest.approx(-1.0)


@given(orders)
def test_derivative_matrix_row_sums(N):
    D = lagrange_deriv_matrix(gll_grid(N))
    assert np.abs(D.sum(axis=1)).max() <= 1e-13 * max(1, N * N)


def test_derivative_matrix_n1():
    np.testing.assert_allclose(lagrange_deriv_matrix(gll_grid(1)), [[-0.5, 0.5], [-0.5, 0.5]])


def test_derivative_of_quadratic():
    g = gll_grid(2)
    np.testing.assert_allclose(lagrange_deriv_matrix(g) @ g.nodes**2, [-2, 0, 2], atol=1e-14)


@given(st.integers(1, 16))
def test_edge_cell_integrals_are_kronecker(N):
    g = gll_grid(N)
    t, w = gauss_legendre(N + 2)
    out = np.empty((N, N))
    for p in range(N):
        a, b = g.nodes[p], g.nodes[p + 1]
        pts = 0.5 * (a + b) + 0.5 * (b - a) * t
        out[:, p] = edge_basis(g, pts) @ w * 0.5 * (b - a)
    np.testing.assert_allclose(out, np.eye(N), atol=1e-12)
    np.testing.assert_allclose(edge_basis(g, t) @ w, np.ones(N), atol=1e-12)


def test_edge_n1_constant():
    g = gll_grid(1)
    for xi in (-1.0, 0.2, 1.0):
        assert edge_eval(g, 1, xi) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("i", [0, 3])
def test_edge_index_out_of_range(i):
    with pytest.raises(IndexError):
        edge_eval(gll_grid(2), i, 0.0)
