"""Discrete k-forms: reduction, reconstruction, derivative, mass matrices.

Reference-element basis (tensor products of the 1D bases):

* 0-forms: ``l_i(xi) l_j(eta)``
* 1-forms: ``e_i(xi) l_j(eta) dxi`` on horizontal edges and
  ``l_i(xi) e_j(eta) deta`` on vertical edges
* 2-forms: ``e_i(xi) e_j(eta) dxi ^ deta``

1-form coefficients are stored against ``(dxi, deta)`` (covector components);
physical values follow from the element Jacobian.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .basis1d import edge_basis, gauss_legendre, gll_grid, lagrange_basis
from .errors import DataEvaluationError, TopDegreeError
from .geometry import (
    ElementGeometry,
    Mapping,
    element_geometry,
    global_coordinates,
    weights_from_jacobian,
)
from .topology import (
    CellComplex,
    Cochain,
    Side,
    incidence_d10,
    incidence_d21,
)

__all__ = [
    "QUAD_EXTRA",
    "AnalyticForm",
    "DiscreteForm",
    "reduce",
    "projection",
    "reconstruct_eval",
    "exterior_derivative",
    "mass_matrix",
    "boundary_load",
    "element_basis",
    "incidence",
    "load_vector",
    "side_quadrature",
]

QUAD_EXTRA = 6

FloatArray = npt.NDArray[np.float64]
Field = Callable[..., npt.ArrayLike]


def _evaluate(func: Field, *args: FloatArray) -> FloatArray:
    out = np.asarray(func(*args), dtype=np.float64)
    out = np.broadcast_to(out, np.broadcast(*args).shape)
    if not np.all(np.isfinite(out)):
        raise DataEvaluationError("field returned non-finite values")
    return out


@dataclass(frozen=True)
class AnalyticForm:
    """A k-form given by coefficient functions of physical ``(x, y)``.

    ``components`` holds one callable for degrees 0 and 2 (coefficient of
    ``1`` or ``dx ^ dy``) and two for degree 1 (coefficients of ``dx`` and
    ``dy``).  Callables must accept numpy arrays.
    """

    degree: int
    components: tuple[Field, ...]

    def __post_init__(self) -> None:
        if self.degree not in (0, 1, 2):
            raise ValueError(f"degree must be 0, 1 or 2, got {self.degree}")
        comps = tuple(self.components) if isinstance(self.components, Sequence) else (
            self.components,
        )
        need = 2 if self.degree == 1 else 1
        if len(comps) != need:
            raise ValueError(f"a {self.degree}-form needs {need} component function(s)")
        object.__setattr__(self, "components", comps)

    @classmethod
    def scalar(cls, degree: int, func: Field) -> "AnalyticForm":
        return cls(degree, (func,))

    @classmethod
    def covector(cls, fx: Field, fy: Field) -> "AnalyticForm":
        return cls(1, (fx, fy))

    def __call__(self, x, y) -> FloatArray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        vals = [_evaluate(c, x, y) for c in self.components]
        return vals[0] if len(vals) == 1 else np.stack(vals, axis=-1)


def incidence(complex: CellComplex, degree: int) -> sp.csr_matrix:
    """Incidence matrix from ``degree``-cochains to ``degree + 1``-cochains."""
    if degree == 0:
        return _cached_incidence(complex, 0)
    if degree == 1:
        return _cached_incidence(complex, 1)
    raise TopDegreeError(f"no exterior derivative of {degree}-forms in 2D")


_INCIDENCE_CACHE: dict[tuple, sp.csr_matrix] = {}


def _cached_incidence(complex: CellComplex, degree: int) -> sp.csr_matrix:
    key = complex.key() + (degree,)
    mat = _INCIDENCE_CACHE.get(key)
    if mat is None:
        mat = incidence_d10(complex) if degree == 0 else incidence_d21(complex)
        if len(_INCIDENCE_CACHE) > 64:
            _INCIDENCE_CACHE.clear()
        _INCIDENCE_CACHE[key] = mat
    return mat


@dataclass(eq=False)
class DiscreteForm:
    """A cochain together with the mesh it lives on.

    Its reconstruction is the finite-dimensional form in the span of the
    tensor-product basis of degree ``cochain.degree``.
    """

    cochain: Cochain
    mapping: Mapping

    @property
    def degree(self) -> int:
        return self.cochain.degree

    @property
    def complex(self) -> CellComplex:
        return self.cochain.complex

    @property
    def values(self) -> FloatArray:
        return self.cochain.values

    @classmethod
    def from_values(cls, complex: CellComplex, mapping: Mapping, degree: int, values):
        return cls(Cochain(complex, degree, values), mapping)

    def evaluate(self, xi, eta, physical: bool = False) -> FloatArray:
        return reconstruct_eval(self, xi, eta, physical=physical)


# --------------------------------------------------------------------------- #
# 1D / tensor bases
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=256)
def _bases_1d(N: int, pts: tuple[float, ...]) -> tuple[FloatArray, FloatArray]:
    grid = gll_grid(N)
    p = np.array(pts)
    lag, edg = lagrange_basis(grid, p), edge_basis(grid, p)
    lag.setflags(write=False)
    edg.setflags(write=False)
    return lag, edg


def element_basis(N: int, degree: int, xi, eta) -> list[FloatArray]:
    """Tensor basis of ``degree``-forms on the grid ``eta x xi``.

    Returns one array per coefficient component, each of shape
    ``(n_local_basis, len(eta), len(xi))``.  For degree 1, the first array is
    the ``dxi`` component of the horizontal-edge functions and the second the
    ``deta`` component of the vertical-edge functions; local ordering matches
    :attr:`CellComplex.element_edges`.
    """
    lx, ex = _bases_1d(N, tuple(np.asarray(xi, float).ravel()))
    ly, ey = _bases_1d(N, tuple(np.asarray(eta, float).ravel()))

    def tensor(by: FloatArray, bx: FloatArray) -> FloatArray:
        # basis index (j, i) -> j * len(bx) + i
        out = by[:, None, :, None] * bx[None, :, None, :]
        return out.reshape(by.shape[0] * bx.shape[0], by.shape[1], bx.shape[1])

    if degree == 0:
        return [tensor(ly, lx)]
    if degree == 1:
        return [tensor(ly, ex), tensor(ey, lx)]
    if degree == 2:
        return [tensor(ey, ex)]
    raise ValueError(f"degree must be 0, 1 or 2, got {degree}")


# --------------------------------------------------------------------------- #
# Reduction
# --------------------------------------------------------------------------- #


def _global_axes(complex: CellComplex) -> tuple[FloatArray, FloatArray]:
    """Global reference coordinates of the GLL node lines along x and y."""
    nodes = gll_grid(complex.order).nodes

    def axis(m: int) -> FloatArray:
        pts = (2.0 * np.arange(m)[:, None] + 1.0 + nodes[None, :-1]) / m - 1.0
        return np.append(pts.ravel(), 1.0)

    return axis(complex.elements_x), axis(complex.elements_y)


def _row_chunks(n: int, per_row: int, budget: int = 400_000) -> Iterable[slice]:
    step = max(1, budget // max(per_row, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def reduce(
    a: AnalyticForm, complex: CellComplex, m: Mapping, quad_extra: int = QUAD_EXTRA
) -> Cochain:
    """Integrate ``a`` over every ``k``-cell of the mesh.

    Points for 0-forms, line integrals along 1-cells and area integrals over
    2-cells, with ``N + quad_extra`` Gauss points per direction.
    """
    gx, gy = _global_axes(complex)
    t, w = gauss_legendre(complex.order + quad_extra)
    k = a.degree

    if k == 0:
        X, Y = m(gx[None, :], gy[:, None])
        return Cochain(complex, 0, np.asarray(a(X, Y)).ravel())

    if k == 1:
        # horizontal edges (J, I): xi from gx[I] to gx[I+1] at eta = gy[J]
        cx, hx = 0.5 * (gx[1:] + gx[:-1]), 0.5 * np.diff(gx)
        cy, hy = 0.5 * (gy[1:] + gy[:-1]), 0.5 * np.diff(gy)
        xi = cx[:, None] + hx[:, None] * t[None, :]  # (nx, q)
        out_h = np.empty((gy.size, cx.size))
        for sl in _row_chunks(gy.size, xi.size):
            XI = np.broadcast_to(xi[None], (gy[sl].size,) + xi.shape)
            ETA = np.broadcast_to(gy[sl, None, None], XI.shape)
            vals = a(*m(XI, ETA))
            jac = m.jacobian(XI, ETA)
            integrand = vals[..., 0] * jac[..., 0, 0] + vals[..., 1] * jac[..., 1, 0]
            out_h[sl] = (integrand @ w) * hx[None, :]
        eta = cy[:, None] + hy[:, None] * t[None, :]  # (ny, q)
        out_v = np.empty((cy.size, gx.size))
        for sl in _row_chunks(cy.size, gx.size * t.size):
            ETA = np.broadcast_to(eta[sl, None, :], (eta[sl].shape[0], gx.size, t.size))
            XI = np.broadcast_to(gx[None, :, None], ETA.shape)
            vals = a(*m(XI, ETA))
            jac = m.jacobian(XI, ETA)
            integrand = vals[..., 0] * jac[..., 0, 1] + vals[..., 1] * jac[..., 1, 1]
            out_v[sl] = (integrand @ w) * hy[sl, None]
        return Cochain(complex, 1, np.concatenate([out_h.ravel(), out_v.ravel()]))

    # 2-cells (J, I)
    cx, hx = 0.5 * (gx[1:] + gx[:-1]), 0.5 * np.diff(gx)
    cy, hy = 0.5 * (gy[1:] + gy[:-1]), 0.5 * np.diff(gy)
    xi = cx[:, None] + hx[:, None] * t[None, :]
    eta = cy[:, None] + hy[:, None] * t[None, :]
    out = np.empty((cy.size, cx.size))
    for sl in _row_chunks(cy.size, xi.size * t.size):
        XI = np.broadcast_to(xi[None, :, None, :], (eta[sl].shape[0], cx.size, t.size, t.size))
        ETA = np.broadcast_to(eta[sl, None, :, None], XI.shape)
        vals = a(*m(XI, ETA))
        det = np.linalg.det(m.jacobian(XI, ETA))
        out[sl] = np.einsum("rcba,b,a->rc", vals * det, w, w) * hy[sl, None] * hx[None, :]
    return Cochain(complex, 2, out.ravel())


def projection(a: AnalyticForm, complex: CellComplex, m: Mapping, quad_extra: int = QUAD_EXTRA):
    """``pi_h a``: the reconstruction of the reduction of ``a``."""
    return DiscreteForm(reduce(a, complex, m, quad_extra), m)


# --------------------------------------------------------------------------- #
# Reconstruction and derivative
# --------------------------------------------------------------------------- #


def _local_coefficients(form: DiscreteForm) -> list[FloatArray]:
    cx = form.complex
    N = cx.order
    local = form.values[cx.element_dofs(form.degree)]
    if form.degree == 1:
        nh = N * (N + 1)
        return [local[:, :nh], local[:, nh:]]
    return [local]


def reconstruct_eval(
    form: DiscreteForm,
    xi,
    eta,
    physical: bool = False,
    geometry: ElementGeometry | None = None,
) -> FloatArray:
    """Evaluate the reconstruction on the tensor grid ``eta x xi`` of each element.

    Returns shape ``(E, len(eta), len(xi))`` for degrees 0 and 2 and
    ``(E, len(eta), len(xi), 2)`` for degree 1.  Reference coefficients are
    returned unless ``physical`` is set, in which case 1-forms become
    ``(dx, dy)`` coefficients and 2-forms densities against ``dx ^ dy``.
    """
    xi = np.atleast_1d(np.asarray(xi, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    N = form.complex.order
    bases = element_basis(N, form.degree, xi, eta)
    coeffs = _local_coefficients(form)
    comps = [np.einsum("en,nba->eba", c, b, optimize=True) for c, b in zip(coeffs, bases)]
    ref = comps[0] if len(comps) == 1 else np.stack(comps, axis=-1)
    if not physical or form.degree == 0:
        return ref
    geo = geometry or element_geometry(form.complex, form.mapping, xi, eta)
    if form.degree == 2:
        return ref / geo.det
    # covector transforms with the inverse transpose Jacobian
    return np.linalg.solve(np.swapaxes(geo.jac, -1, -2), ref[..., None])[..., 0]


def exterior_derivative(form: DiscreteForm) -> DiscreteForm:
    """Discrete ``d``: apply the incidence matrix to the cochain."""
    if form.degree >= 2:
        raise TopDegreeError("the exterior derivative of a 2-form vanishes identically in 2D")
    mat = incidence(form.complex, form.degree)
    return DiscreteForm.from_values(form.complex, form.mapping, form.degree + 1, mat @ form.values)


# --------------------------------------------------------------------------- #
# Mass matrices
# --------------------------------------------------------------------------- #


def _quadrature(N: int, q: int | None, rule: str = "gauss") -> tuple[FloatArray, FloatArray]:
    if rule == "gll":
        grid = gll_grid(N)
        return grid.nodes, grid.weights
    if rule != "gauss":
        raise ValueError(f"unknown quadrature rule {rule!r}; use 'gauss' or 'gll'")
    q = N + QUAD_EXTRA if q is None else int(q)
    if q < N + 1:
        raise ValueError(f"quadrature with {q} points is too coarse for order {N}")
    return gauss_legendre(q)


def element_mass_matrices(
    k: int, complex: CellComplex, m: Mapping, q: int | None = None, rule: str = "gauss"
) -> FloatArray:
    """Element mass matrices of ``k``-forms, shape ``(E, n_local, n_local)``."""
    N = complex.order
    t, w = _quadrature(N, q, rule)
    geo = element_geometry(complex, m, t, t)
    wq = (w[:, None] * w[None, :]).ravel()
    E = complex.num_elements
    bases = [b.reshape(b.shape[0], -1) for b in element_basis(N, k, t, t)]
    weights = weights_from_jacobian(geo.jac, k)
    if k in (0, 2):
        (b,) = bases
        ww = weights.reshape(E, -1) * wq
        return np.matmul(b[None] * ww[:, None, :], b.T)
    bx, by = bases
    W = weights.reshape(E, -1, 2, 2) * wq[None, :, None, None]
    nh, nv = bx.shape[0], by.shape[0]
    out = np.empty((E, nh + nv, nh + nv))
    out[:, :nh, :nh] = np.matmul(bx[None] * W[:, None, :, 0, 0], bx.T)
    out[:, :nh, nh:] = np.matmul(bx[None] * W[:, None, :, 0, 1], by.T)
    out[:, nh:, :nh] = np.swapaxes(out[:, :nh, nh:], 1, 2)
    out[:, nh:, nh:] = np.matmul(by[None] * W[:, None, :, 1, 1], by.T)
    return out


def _assemble(local: FloatArray, dofs: npt.NDArray[np.int64], n: int) -> sp.csr_matrix:
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def mass_matrix(
    k: int, complex: CellComplex, m: Mapping, q: int | None = None, rule: str = "gauss"
) -> sp.csr_matrix:
    """Global mass matrix of ``k``-forms, ``M[I, J] = (basis_I, basis_J)``.

    ``q`` is the number of Gauss points per direction (default ``N + 6``).
    ``rule="gll"`` integrates on the ``N + 1`` GLL nodes instead; this lumps
    ``M0`` to a diagonal and is exact for ``k = 2`` on affine elements.
    """
    local = element_mass_matrices(k, complex, m, q, rule)
    mat = _assemble(local, complex.element_dofs(k), complex.count(k))
    mat.sum_duplicates()
    return mat


# --------------------------------------------------------------------------- #
# Boundary functionals
# --------------------------------------------------------------------------- #

# local reference coordinates, tangent column and ccw orientation sign per side
_SIDE_GEOMETRY = {
    Side.BOTTOM: ("xi", -1.0, 0, +1.0),
    Side.RIGHT: ("eta", +1.0, 1, +1.0),
    Side.TOP: ("xi", +1.0, 0, -1.0),
    Side.LEFT: ("eta", -1.0, 1, -1.0),
}


def side_elements(complex: CellComplex, side: Side) -> npt.NDArray[np.int64]:
    mx, my = complex.elements_x, complex.elements_y
    if side is Side.BOTTOM:
        return np.arange(mx)
    if side is Side.TOP:
        return (my - 1) * mx + np.arange(mx)
    if side is Side.LEFT:
        return np.arange(my) * mx
    return np.arange(my) * mx + (mx - 1)


def _side_local_dofs(N: int, side: Side, degree: int) -> npt.NDArray[np.int64]:
    if degree == 0:
        i = np.arange(N + 1)
        return {
            Side.BOTTOM: i,
            Side.TOP: N * (N + 1) + i,
            Side.LEFT: i * (N + 1),
            Side.RIGHT: i * (N + 1) + N,
        }[side]
    i = np.arange(N)
    nh = N * (N + 1)
    return {
        Side.BOTTOM: i,
        Side.TOP: N * N + i,
        Side.LEFT: nh + i * (N + 1),
        Side.RIGHT: nh + i * (N + 1) + N,
    }[side]


def side_quadrature(complex: CellComplex, m: Mapping, side: Side, q: int):
    """Physical points, outward normals and line elements along one side.

    Returns ``(elements, t, x, y, nx, ny, ds, orient)`` where arrays are
    ``(n_side_elements, q)``, ``ds = |dX/dt|`` and ``orient`` is +1 when
    increasing ``t`` runs counterclockwise.
    """
    side = Side(side)
    axis, fixed, col, orient = _SIDE_GEOMETRY[side]
    t, _ = gauss_legendre(q)
    elems = side_elements(complex, side)
    gx, gy = global_coordinates(complex, t, t)
    gx, gy = gx[elems], gy[elems]
    ey, ex = np.divmod(elems, complex.elements_x)
    if axis == "xi":
        gfix = -1.0 + (2.0 * ey + 1.0 + fixed) / complex.elements_y
        GX, GY = gx, np.broadcast_to(gfix[:, None], gx.shape)
    else:
        gfix = -1.0 + (2.0 * ex + 1.0 + fixed) / complex.elements_x
        GX, GY = np.broadcast_to(gfix[:, None], gy.shape), gy
    x, y = m(GX, GY)
    jac = m.jacobian(GX, GY)
    scale = complex.elements_x if col == 0 else complex.elements_y
    tx = orient * jac[..., 0, col] / scale
    ty = orient * jac[..., 1, col] / scale
    ds = np.hypot(tx, ty)
    return elems, t, x, y, ty / ds, -tx / ds, ds, orient


def boundary_load(
    k: int,
    sides: Iterable[Side | str],
    data: Field,
    complex: CellComplex,
    m: Mapping,
    q: int | None = None,
) -> FloatArray:
    """Boundary integrals of traces of the ``k``-form basis against ``data``.

    ``data(x, y, nx, ny)`` is evaluated with the outward unit normal.

    * ``k = 0``: entry ``I`` is ``int tr(l_I) * data ds`` (arc length).
    * ``k = 1``: entry ``I`` is the counterclockwise line integral of
      ``data * tr(v_I)``; only edges lying on the listed sides contribute.
    """
    if k not in (0, 1):
        raise ValueError(f"boundary loads are defined for degree 0 or 1, got {k}")
    N = complex.order
    q = N + QUAD_EXTRA if q is None else int(q)
    _, w = gauss_legendre(q)
    out = np.zeros(complex.count(k))
    grid = gll_grid(N)
    for side in dict.fromkeys(Side(s) for s in sides):
        elems, t, x, y, nx, ny, ds, orient = side_quadrature(complex, m, side, q)
        vals = _evaluate(data, x, y, nx, ny)
        if k == 0:
            basis = lagrange_basis(grid, t)  # (N+1, q)
            local = np.einsum("eq,q,aq->ea", vals * ds, w, basis)
        else:
            basis = edge_basis(grid, t)  # (N, q)
            local = orient * np.einsum("eq,q,aq->ea", vals, w, basis)
        dofs = complex.element_dofs(k)[elems][:, _side_local_dofs(N, side, k)]
        np.add.at(out, dofs.ravel(), local.ravel())
    return out


def load_vector(a: AnalyticForm, complex: CellComplex, m: Mapping, q: int | None = None):
    """``(basis_I, a)`` for every basis function of degree ``a.degree``."""
    N = complex.order
    t, w = _quadrature(N, q)
    geo = element_geometry(complex, m, t, t)
    wq = w[:, None] * w[None, :]
    vals = a(geo.x, geo.y)
    k = a.degree
    bases = element_basis(N, k, t, t)
    if k == 0:
        local = np.einsum("eba,nba->en", vals * geo.det * wq, bases[0], optimize=True)
    elif k == 2:
        # reference density / det J against physical density * det J
        local = np.einsum("eba,nba->en", vals * wq, bases[0], optimize=True)
    else:
        # v_phys . f_phys det J with v_phys = J^-T v_ref, i.e. v_ref . (det J J^-1 f)
        jac = geo.jac
        adj = np.empty_like(jac)
        adj[..., 0, 0], adj[..., 1, 1] = jac[..., 1, 1], jac[..., 0, 0]
        adj[..., 0, 1], adj[..., 1, 0] = -jac[..., 0, 1], -jac[..., 1, 0]
        g = np.einsum("ebaij,ebaj->ebai", adj, vals) * wq[None, :, :, None]
        local = np.hstack(
            [
                np.einsum("eba,nba->en", g[..., 0], bases[0], optimize=True),
                np.einsum("eba,nba->en", g[..., 1], bases[1], optimize=True),
            ]
        )
    out = np.zeros(complex.count(k))
    np.add.at(out, complex.element_dofs(k).ravel(), local.ravel())
    return out
