"""Gauss-Lobatto-Legendre grids and the 1D nodal/edge polynomial bases.

The nodal (Lagrange) polynomials reconstruct 0-cochains from point values and
the edge polynomials reconstruct 1-cochains from integrals over the grid cells.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from .errors import InvalidOrderError

__all__ = [
    "GllGrid",
    "gll_grid",
    "gauss_legendre",
    "lagrange_eval",
    "lagrange_basis",
    "lagrange_basis_deriv",
    "lagrange_deriv_matrix",
    "edge_eval",
    "edge_basis",
]

MAX_ORDER = 64
# Domain checks on evaluation points, enabled for verification runs.
VERIFY = os.environ.get("MSEM_VERIFY", "") not in ("", "0")

FloatArray = npt.NDArray[np.float64]


def _legendre(n: int, x: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Return (L_n(x), L_{n-1}(x)) through the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p, p_prev


@dataclass(frozen=True, eq=False)
class GllGrid:
    """Gauss-Lobatto-Legendre nodes and weights of order ``N`` on [-1, 1]."""

    order: int
    nodes: FloatArray
    weights: FloatArray
    bary: FloatArray = field(repr=False)

    def __post_init__(self) -> None:
        for arr in (self.nodes, self.weights, self.bary):
            arr.setflags(write=False)

    @property
    def cell_widths(self) -> FloatArray:
        return np.diff(self.nodes)


@lru_cache(maxsize=None)
def gll_grid(N: int) -> GllGrid:
    """Build the GLL grid of order ``N`` (``N + 1`` nodes).

    Nodes are the roots of ``(1 - x**2) * L_N'(x)``; interior roots are found by
    Newton iteration from Chebyshev-Gauss-Lobatto guesses.
    """
    if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
        raise InvalidOrderError(f"GLL order must be an integer >= 1, got {N!r}")
    if N > MAX_ORDER:
        raise InvalidOrderError(f"GLL order {N} exceeds supported maximum {MAX_ORDER}")
    N = int(N)

    x = -np.cos(np.pi * np.arange(N + 1) / N)
    if N > 1:
        xi = x[1:-1].copy()
        # (1-x^2) L_N' = N (L_{N-1} - x L_N); its derivative is -N(N+1) L_N.
        for _ in range(100):
            ln, lnm1 = _legendre(N, xi)
            step = (xi * ln - lnm1) / ((N + 1) * ln)
            xi -= step
            if np.max(np.abs(step)) < 1e-15:
                break
        x[1:-1] = xi
    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])  # exact antisymmetry

    ln, _ = _legendre(N, x)
    w = 2.0 / (N * (N + 1) * ln**2)

    bary = np.ones(N + 1)
    for j in range(N + 1):
        diff = x[j] - np.delete(x, j)
        bary[j] = 1.0 / np.prod(diff)
    return GllGrid(order=N, nodes=x, weights=w, bary=bary)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int) -> tuple[FloatArray, FloatArray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre points and weights with ``n`` points on [-1, 1]."""
    if n < 1:
        raise InvalidOrderError(f"need at least one quadrature point, got {n}")
    return _gauss_legendre(int(n))


def lagrange_basis(grid: GllGrid, xi: npt.ArrayLike) -> FloatArray:
    """Evaluate all Lagrange cardinal polynomials at the points ``xi``.

    Returns an array of shape ``(N + 1, len(xi))`` with ``out[i, p] = l_i(xi[p])``.
    Uses the barycentric form of the second kind.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if VERIFY:
        assert np.all(np.abs(xi) <= 1.0 + 1e-12), "evaluation point outside [-1, 1]"
    diff = xi[None, :] - grid.nodes[:, None]
    # closer than this to a node the weights overflow; the snap error is far below eps
    exact = np.abs(diff) < 1e-200
    diff[exact] = 1.0
    tmp = grid.bary[:, None] / diff
    out = tmp / tmp.sum(axis=0, keepdims=True)
    hit = exact.any(axis=0)
    if hit.any():
        out[:, hit] = exact[:, hit].astype(np.float64)
    return out


def lagrange_eval(grid: GllGrid, i: int, xi: float) -> float:
    """Value of the ``i``-th Lagrange cardinal polynomial at ``xi``."""
    if not 0 <= i <= grid.order:
        raise IndexError(f"Lagrange index {i} out of range 0..{grid.order}")
    return float(lagrange_basis(grid, [xi])[i, 0])


@lru_cache(maxsize=None)
def _deriv_matrix(N: int) -> FloatArray:
    grid = gll_grid(N)
    x, w = grid.nodes, grid.bary
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    d.setflags(write=False)
    return d


def lagrange_deriv_matrix(grid: GllGrid) -> FloatArray:
    """Differentiation matrix ``D[j, i] = l_i'(xi_j)``; rows sum to zero."""
    return _deriv_matrix(grid.order)


def lagrange_basis_deriv(grid: GllGrid, xi: npt.ArrayLike) -> FloatArray:
    """Derivatives ``l_i'(xi[p])`` as an ``(N + 1, len(xi))`` array.

    ``l_i'`` has degree ``N - 1``, so interpolating its nodal values is exact.
    """
    d = lagrange_deriv_matrix(grid)
    return d.T @ lagrange_basis(grid, xi)


def edge_basis(grid: GllGrid, xi: npt.ArrayLike) -> FloatArray:
    """Evaluate all edge polynomials ``e_1 .. e_N`` at ``xi``.

    Row ``i - 1`` holds ``e_i = -sum_{k<i} l_k'``. Each ``e_i`` integrates to one
    over grid cell ``[xi_{i-1}, xi_i]`` and to zero over every other cell.
    """
    dl = lagrange_basis_deriv(grid, xi)
    return -np.cumsum(dl[:-1], axis=0)


def edge_eval(grid: GllGrid, i: int, xi: float) -> float:
    """Value of the edge polynomial ``e_i`` (``1 <= i <= N``) at ``xi``."""
    if not 1 <= i <= grid.order:
        raise IndexError(f"edge index {i} out of range 1..{grid.order}")
    return float(edge_basis(grid, [xi])[i - 1, 0])
