"""Charts from the reference square to physical space and their metric terms.

A mesh is a :class:`~msem.topology.CellComplex` (an ``Mx x My`` tiling of the
reference square [-1, 1]^2) together with one global :class:`Mapping`.  The
chart of element ``e`` is the global mapping composed with the affine tile map
of ``e``, so every element chart is as smooth as the global mapping.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import DegenerateGeometryError
from .topology import CellComplex

__all__ = [
    "Mapping",
    "IdentityMap",
    "AffineMap",
    "SinusoidalMap",
    "TransfiniteMap",
    "ElementChart",
    "map_eval",
    "map_jacobian",
    "metric_weights",
    "weights_from_jacobian",
    "global_coordinates",
    "ElementGeometry",
    "element_geometry",
]

FloatArray = npt.NDArray[np.float64]


class Mapping:
    """Chart ``(xi, eta) -> (x, y)`` on [-1, 1]^2 with an analytic Jacobian.

    Subclasses implement :meth:`__call__` and :meth:`jacobian`; both accept
    broadcastable arrays.  ``jacobian`` returns shape ``(..., 2, 2)`` with
    ``J[..., r, c] = d x_r / d xi_c``.
    """

    smoothness = "analytic-curvilinear"

    def __call__(self, xi, eta) -> tuple[FloatArray, FloatArray]:
        raise NotImplementedError

    def jacobian(self, xi, eta) -> FloatArray:
        raise NotImplementedError


class IdentityMap(Mapping):
    smoothness = "affine"

    def __call__(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        return xi.copy(), eta.copy()

    def jacobian(self, xi, eta):
        shape = np.broadcast(np.asarray(xi), np.asarray(eta)).shape
        jac = np.zeros(shape + (2, 2))
        jac[..., 0, 0] = 1.0
        jac[..., 1, 1] = 1.0
        return jac


@dataclass(frozen=True)
class AffineMap(Mapping):
    """Maps [-1, 1]^2 onto the box ``[x0, x1] x [y0, y1]``."""

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    smoothness = "affine"

    def __call__(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        x = self.x0 + 0.5 * (xi + 1.0) * (self.x1 - self.x0)
        y = self.y0 + 0.5 * (eta + 1.0) * (self.y1 - self.y0)
        return x, y

    def jacobian(self, xi, eta):
        shape = np.broadcast(np.asarray(xi), np.asarray(eta)).shape
        jac = np.zeros(shape + (2, 2))
        jac[..., 0, 0] = 0.5 * (self.x1 - self.x0)
        jac[..., 1, 1] = 0.5 * (self.y1 - self.y0)
        return jac


@dataclass(frozen=True)
class SinusoidalMap(Mapping):
    """Perturbed unit square::

        x = 1/2 + 1/2 (xi  + a cos(2 pi xi) sin(2 pi eta))
        y = 1/2 + 1/2 (eta + a sin(2 pi xi) cos(2 pi eta))
    """

    amplitude: float = 0.1

    def __call__(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        a, tp = self.amplitude, 2.0 * np.pi
        x = 0.5 + 0.5 * (xi + a * np.cos(tp * xi) * np.sin(tp * eta))
        y = 0.5 + 0.5 * (eta + a * np.sin(tp * xi) * np.cos(tp * eta))
        return x, y

    def jacobian(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        a, tp = self.amplitude, 2.0 * np.pi
        s = np.sin(tp * xi) * np.sin(tp * eta)
        c = np.cos(tp * xi) * np.cos(tp * eta)
        jac = np.empty(xi.shape + (2, 2))
        jac[..., 0, 0] = 0.5 * (1.0 - a * tp * s)
        jac[..., 0, 1] = 0.5 * a * tp * c
        jac[..., 1, 0] = 0.5 * a * tp * c
        jac[..., 1, 1] = 0.5 * (1.0 - a * tp * s)
        return jac


Curve = Callable[[FloatArray], tuple[FloatArray, FloatArray]]


@dataclass(frozen=True)
class TransfiniteMap(Mapping):
    """Gordon-Hall transfinite interpolation of four boundary curves.

    Each curve maps ``t in [-1, 1]`` to ``(x, y)``; bottom/top run along ``xi`` and
    left/right along ``eta``, all in the direction of increasing parameter.
    ``*_deriv`` give ``d(x, y)/dt`` and keep the Jacobian analytic.
    """

    bottom: Curve
    right: Curve
    top: Curve
    left: Curve
    bottom_deriv: Curve
    right_deriv: Curve
    top_deriv: Curve
    left_deriv: Curve

    def _corners(self):
        one = np.array([1.0])
        return (
            np.array(self.bottom(-one)).ravel(),
            np.array(self.bottom(one)).ravel(),
            np.array(self.top(-one)).ravel(),
            np.array(self.top(one)).ravel(),
        )

    def __call__(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        b, t = np.array(self.bottom(xi)), np.array(self.top(xi))
        l, r = np.array(self.left(eta)), np.array(self.right(eta))
        c00, c10, c01, c11 = self._corners()
        xm, xp = 0.5 * (1 - xi), 0.5 * (1 + xi)
        em, ep = 0.5 * (1 - eta), 0.5 * (1 + eta)
        out = []
        for k in range(2):
            out.append(
                em * b[k] + ep * t[k] + xm * l[k] + xp * r[k]
                - (xm * em * c00[k] + xp * em * c10[k] + xm * ep * c01[k] + xp * ep * c11[k])
            )
        return out[0], out[1]

    def jacobian(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        b, t = np.array(self.bottom(xi)), np.array(self.top(xi))
        l, r = np.array(self.left(eta)), np.array(self.right(eta))
        db, dt = np.array(self.bottom_deriv(xi)), np.array(self.top_deriv(xi))
        dl, dr = np.array(self.left_deriv(eta)), np.array(self.right_deriv(eta))
        c00, c10, c01, c11 = self._corners()
        xm, xp = 0.5 * (1 - xi), 0.5 * (1 + xi)
        em, ep = 0.5 * (1 - eta), 0.5 * (1 + eta)
        jac = np.empty(xi.shape + (2, 2))
        for k in range(2):
            jac[..., k, 0] = (
                em * db[k] + ep * dt[k] - 0.5 * l[k] + 0.5 * r[k]
                - 0.5 * (-em * c00[k] + em * c10[k] - ep * c01[k] + ep * c11[k])
            )
            jac[..., k, 1] = (
                -0.5 * b[k] + 0.5 * t[k] + xm * dl[k] + xp * dr[k]
                - 0.5 * (-xm * c00[k] - xp * c10[k] + xm * c01[k] + xp * c11[k])
            )
        return jac


@dataclass(frozen=True)
class ElementChart(Mapping):
    """Chart of one element: global mapping composed with the element tile map."""

    mapping: Mapping
    complex: CellComplex
    element: int

    def _tile(self, xi, eta):
        ey, ex = divmod(self.element, self.complex.elements_x)
        mx, my = self.complex.elements_x, self.complex.elements_y
        gx = -1.0 + (2.0 * ex + 1.0 + np.asarray(xi, float)) / mx
        gy = -1.0 + (2.0 * ey + 1.0 + np.asarray(eta, float)) / my
        return gx, gy, mx, my

    @property
    def smoothness(self):  # type: ignore[override]
        return self.mapping.smoothness

    def __call__(self, xi, eta):
        gx, gy, _, _ = self._tile(xi, eta)
        return self.mapping(gx, gy)

    def jacobian(self, xi, eta):
        gx, gy, mx, my = self._tile(xi, eta)
        jac = self.mapping.jacobian(gx, gy).copy()
        jac[..., :, 0] /= mx
        jac[..., :, 1] /= my
        return jac


def map_eval(m: Mapping, xi, eta) -> tuple[FloatArray, FloatArray]:
    """Physical coordinates of reference point(s)."""
    return m(xi, eta)


def _check_det(det: FloatArray) -> None:
    if np.any(~(det > 0.0)):
        raise DegenerateGeometryError(
            f"non-positive Jacobian determinant (min {np.nanmin(det):.3e})"
        )


def map_jacobian(m: Mapping, xi, eta) -> FloatArray:
    """Analytic Jacobian; raises on a non-positive determinant."""
    jac = m.jacobian(xi, eta)
    _check_det(np.linalg.det(jac))
    return jac


def weights_from_jacobian(jac: FloatArray, degree: int) -> FloatArray:
    """Pull-back weights of the L2 inner product of ``degree``-forms.

    ``W0 = det J``, ``W1 = det J * J^-1 J^-T`` (acting on (dxi, deta)
    coefficient pairs) and ``W2 = 1 / det J``.  Degrees 0 and 2 return arrays
    of shape ``jac.shape[:-2]``, degree 1 of shape ``jac.shape``.
    """
    a, b = jac[..., 0, 0], jac[..., 0, 1]
    c, d = jac[..., 1, 0], jac[..., 1, 1]
    det = a * d - b * c
    _check_det(det)
    if degree == 0:
        return det
    if degree == 2:
        return 1.0 / det
    if degree != 1:
        raise ValueError(f"degree must be 0, 1 or 2, got {degree}")
    # det * inv(J) inv(J)^T, with inv(J) = [[d, -b], [-c, a]] / det
    w = np.empty_like(jac)
    w[..., 0, 0] = (d * d + b * b) / det
    w[..., 0, 1] = -(d * c + b * a) / det
    w[..., 1, 0] = w[..., 0, 1]
    w[..., 1, 1] = (c * c + a * a) / det
    return w


def metric_weights(m: Mapping, k: int, xi, eta) -> FloatArray:
    """Metric weight of ``k``-forms for mapping ``m`` at reference point(s)."""
    return weights_from_jacobian(m.jacobian(xi, eta), k)


def global_coordinates(complex: CellComplex, xi: FloatArray, eta: FloatArray):
    """Global reference coordinates of element-local points.

    Returns ``(gx, gy)`` with shapes ``(E, len(xi))`` and ``(E, len(eta))``.
    """
    ey, ex = np.divmod(np.arange(complex.num_elements), complex.elements_x)
    gx = -1.0 + (2.0 * ex[:, None] + 1.0 + np.asarray(xi)[None, :]) / complex.elements_x
    gy = -1.0 + (2.0 * ey[:, None] + 1.0 + np.asarray(eta)[None, :]) / complex.elements_y
    return gx, gy


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Physical points and element Jacobians on a tensor grid of every element.

    Arrays are indexed ``[element, eta_index, xi_index]`` (Jacobian with two
    trailing axes).
    """

    x: FloatArray
    y: FloatArray
    jac: FloatArray

    @property
    def det(self) -> FloatArray:
        j = self.jac
        return j[..., 0, 0] * j[..., 1, 1] - j[..., 0, 1] * j[..., 1, 0]


def element_geometry(
    complex: CellComplex, mapping: Mapping, xi: FloatArray, eta: FloatArray
) -> ElementGeometry:
    """Evaluate element charts on the tensor grid ``eta x xi`` of every element."""
    gx, gy = global_coordinates(complex, xi, eta)
    GX = np.broadcast_to(gx[:, None, :], (gx.shape[0], gy.shape[1], gx.shape[1]))
    GY = np.broadcast_to(gy[:, :, None], GX.shape)
    x, y = mapping(GX, GY)
    jac = np.array(mapping.jacobian(GX, GY), dtype=np.float64, copy=True)
    jac[..., :, 0] /= complex.elements_x
    jac[..., :, 1] /= complex.elements_y
    return ElementGeometry(x=np.asarray(x), y=np.asarray(y), jac=jac)
