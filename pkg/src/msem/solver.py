"""Mixed vector Poisson and Stokes (vorticity-velocity-pressure) systems.

Unknowns are the vorticity 0-cochain, the velocity 1-cochain and, for Stokes,
the pressure 2-cochain.  With ``A = M0``, ``C = M1 E10``, ``Eb = E21^T M2 E21``
and ``B = M2 E21`` the assembled matrix is::

    [ -A   C^T   0  ] [w]   [ -h ]
    [  C   Eb   B^T ] [u] = [  f ]
    [  0   B     0  ] [p]   [  g ]

The vorticity equation is multiplied by -1 so that the matrix is symmetric.
Boundary types per side:

====  ===================  =======================================
type  essential            natural
====  ===================  =======================================
g1    normal velocity      tangential velocity
g2    (none)               tangential velocity, pressure-type datum
g3    vorticity, normal    (none)
g4    vorticity            pressure-type datum
====  ===================  =======================================
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Callable, Mapping as TypingMapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, IllPosedError
from .forms import (
    QUAD_EXTRA,
    AnalyticForm,
    DiscreteForm,
    boundary_load,
    incidence,
    load_vector,
    mass_matrix,
    reduce,
)
from .geometry import Mapping
from .topology import CellComplex, Side, boundary_cells

__all__ = [
    "BCType",
    "BoundaryConditionSpec",
    "LinearSystem",
    "StokesSystem",
    "Solution",
    "assemble_poisson",
    "assemble_stokes",
    "solve",
    "nested_dissection",
]

log = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
RESIDUAL_TOL = 1e-10
MASS_RULES = ("gll", "gauss")
FORCING_RULES = ("reduction", "quadrature")


class BCType(str, enum.Enum):
    G1 = "g1"  # normal velocity + tangential velocity
    G2 = "g2"  # tangential velocity + pressure
    G3 = "g3"  # vorticity + normal velocity
    G4 = "g4"  # vorticity + pressure

    @property
    def vorticity_essential(self) -> bool:
        return self in (BCType.G3, BCType.G4)

    @property
    def normal_essential(self) -> bool:
        return self in (BCType.G1, BCType.G3)

    @property
    def tangential_natural(self) -> bool:
        return self in (BCType.G1, BCType.G2)

    @property
    def pressure_natural(self) -> bool:
        return self in (BCType.G2, BCType.G4)


def _zero(x, y, *_):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """Boundary type per side plus the data each type needs.

    vorticity:
        ``w(x, y)``, trace of the vorticity on g3/g4 sides.
    velocity:
        1-form whose line integrals along boundary edges give the essential
        normal velocity on g1/g3 sides.
    tangential:
        ``u_bt(x, y, nx, ny)``, density per unit length of ``tr *u`` on g1/g2
        sides.
    pressure:
        ``pi_b(x, y)``, the datum ``tr *(du + p)`` on g2/g4 sides; ``tr *du``
        for the vector Poisson problem.
    velocity_gauge:
        Opt in to configurations whose velocity is determined only up to
        discrete harmonic gradients (g4 sides without any g1/g3 side).  The
        velocity is then constrained orthogonal to that nullspace; vorticity
        and pressure do not depend on the choice.
    """

    types: TypingMapping[Side, BCType]
    vorticity: Callable | None = None
    velocity: AnalyticForm | None = None
    tangential: Callable | None = None
    pressure: Callable | None = None
    velocity_gauge: bool = False

    def __post_init__(self) -> None:
        try:
            types = {Side(s): BCType(t) for s, t in dict(self.types).items()}
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        missing = [s.value for s in Side if s not in types]
        if missing:
            raise ConfigurationError(f"no boundary type for side(s): {', '.join(missing)}")
        object.__setattr__(self, "types", types)

    @classmethod
    def uniform(cls, bc: BCType | str, **data) -> "BoundaryConditionSpec":
        return cls({s: bc for s in Side}, **data)

    @classmethod
    def homogeneous(cls, types: TypingMapping[Side, BCType], **kw) -> "BoundaryConditionSpec":
        zero = AnalyticForm(1, (_zero, _zero))
        return cls(types, vorticity=_zero, velocity=zero, tangential=_zero, pressure=_zero, **kw)

    def sides(self, predicate: str) -> list[Side]:
        return [s for s in Side if getattr(self.types[s], predicate)]

    @property
    def needs_pressure_gauge(self) -> bool:
        """True when no side carries a pressure-type condition."""
        return not self.sides("pressure_natural")

    @property
    def has_velocity_nullspace(self) -> bool:
        """True when g4 is present but no side fixes the normal velocity."""
        has_g4 = any(t is BCType.G4 for t in self.types.values())
        return has_g4 and not self.sides("normal_essential")

    def validate(self) -> None:
        need = {
            "vorticity": "vorticity_essential",
            "velocity": "normal_essential",
            "tangential": "tangential_natural",
            "pressure": "pressure_natural",
        }
        for attr, pred in need.items():
            sides = self.sides(pred)
            if sides and getattr(self, attr) is None:
                names = ", ".join(s.value for s in sides)
                raise ConfigurationError(f"boundary data '{attr}' is required on side(s) {names}")
        if self.has_velocity_nullspace and not self.velocity_gauge:
            raise ConfigurationError(
                "ill-posed boundary configuration: g4 sides without any g1/g3 side leave "
                "the velocity undetermined up to a curl*-free field (harmonic gradients); "
                "set velocity_gauge=True to select the solution orthogonal to them",
            )


@dataclass(eq=False)
class LinearSystem:
    """Assembled mixed system with essential-DOF bookkeeping.

    ``matrix`` and ``rhs`` are the full (pre-elimination) symmetric system;
    ``fixed``/``fixed_values`` are the essential DOFs in that numbering.
    """

    complex: CellComplex
    mapping: Mapping
    matrix: sp.csr_matrix
    rhs: FloatArray
    offsets: dict[str, slice]
    fixed: npt.NDArray[np.int64]
    fixed_values: FloatArray
    blocks: dict[str, sp.spmatrix] = field(repr=False)
    gauge: bool = False
    velocity_gauge: bool = False
    has_g4: bool = False

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def pinned(self) -> npt.NDArray[np.int64]:
        """Essential DOFs plus, with the pressure gauge, one pinned pressure."""
        if not self.gauge:
            return self.fixed
        return np.append(self.fixed, self.offsets["p"].start)

    @property
    def free(self) -> npt.NDArray[np.int64]:
        mask = np.ones(self.size, bool)
        mask[self.pinned] = False
        return np.flatnonzero(mask)

    def _pinned_values(self) -> FloatArray:
        return np.append(self.fixed_values, 0.0) if self.gauge else self.fixed_values

    def reduced(self) -> tuple[sp.csc_matrix, FloatArray]:
        """Symmetric system on the free DOFs plus any velocity-gauge multipliers.

        The pressure gauge pins one pressure DOF here; :func:`solve` restores
        the zero-mean representative afterwards.  A dense bordered mean row
        would give the same solution but ruins the sparsity of the factors.
        """
        free, pinned = self.free, self.pinned
        K = self.matrix.tocsr()
        kf = K[free]
        b = self.rhs[free] - kf[:, pinned] @ self._pinned_values()
        Kff = kf[:, free]
        if self.velocity_gauge:
            G, H = self._harmonic_gauge(free)
            Kff = sp.bmat([[Kff, G, None], [G.T, None, H], [None, H.T, None]], format="csr")
            b = np.concatenate([b, np.zeros(G.shape[1] + H.shape[1])])
        return Kff.tocsc(), b

    def _gauge_nodes(self) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
        n0 = self.complex.n0
        w_fixed = self.fixed[self.fixed < n0]
        keep = np.setdiff1d(np.arange(n0), w_fixed[:1])
        w_free = np.setdiff1d(np.arange(n0), w_fixed)
        return keep, w_free

    def _harmonic_gauge(self, free: npt.NDArray[np.int64]) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Bordering blocks that pin the velocity orthogonal to harmonic gradients.

        The nullspace is ``{E10 psi : S psi = 0 at free vorticity nodes}`` with
        ``S = E10^T M1 E10``.  Multipliers ``psi`` (one node pinned to remove
        constants) and ``chi`` (free vorticity nodes) keep the bordering sparse
        and symmetric: ``E10^T u - S[:, I] chi = 0`` and ``S[I, :] psi = 0``.
        """
        n0 = self.complex.n0
        E10 = self.blocks["E10"]
        S = (E10.T @ self.blocks["M1"] @ E10).tocsr()
        keep, w_free = self._gauge_nodes()
        u = self.offsets["u"]
        G = sp.vstack(
            [sp.csr_matrix((u.start, n0)), E10, sp.csr_matrix((self.size - u.stop, n0))],
            format="csr",
        )
        G = G[free][:, keep]
        H = -S[keep][:, w_free]
        return G.tocsr(), H.tocsr()

    def layout(self) -> tuple[FloatArray, FloatArray, npt.NDArray[np.int64]]:
        """Lattice coordinates and elimination priority of the reduced unknowns.

        Coordinates are in units of half a GLL cell, so element interfaces sit
        at multiples of ``2 N``.  Used to build the fill-reducing ordering.
        """
        cx = self.complex
        nx, ny = cx.nx, cx.ny
        J, I = np.mgrid[0 : ny + 1, 0 : nx + 1]
        node = (2 * I.ravel(), 2 * J.ravel())
        J, I = np.mgrid[0 : ny + 1, 0:nx]
        hor = (2 * I.ravel() + 1, 2 * J.ravel())
        J, I = np.mgrid[0:ny, 0 : nx + 1]
        ver = (2 * I.ravel(), 2 * J.ravel() + 1)
        J, I = np.mgrid[0:ny, 0:nx]
        cell = (2 * I.ravel() + 1, 2 * J.ravel() + 1)
        parts = [(node, 0, cx.n0), (hor, 1, hor[0].size), (ver, 1, ver[0].size)]
        if "p" in self.offsets:
            parts.append((cell, 3, cx.n2))
        x = np.concatenate([p[0][0] for p in parts]).astype(float)
        y = np.concatenate([p[0][1] for p in parts]).astype(float)
        prio = np.concatenate([np.full(p[2], p[1]) for p in parts])
        free = self.free
        x, y, prio = x[free], y[free], prio[free]
        if self.velocity_gauge:
            keep, w_free = self._gauge_nodes()
            x = np.concatenate([x, node[0][keep], node[0][w_free]])
            y = np.concatenate([y, node[1][keep], node[1][w_free]])
            prio = np.concatenate([prio, np.full(keep.size, 2), np.full(w_free.size, 2)])
        return x, y, prio

    def expand(self, x_free: FloatArray) -> FloatArray:
        x = np.empty(self.size)
        x[self.pinned] = self._pinned_values()
        free = self.free
        x[free] = x_free[: free.size]
        return x


class StokesSystem(LinearSystem):
    """Stokes variant; ``offsets`` additionally holds the pressure block."""


def _fixed_dofs(complex: CellComplex, m: Mapping, bc: BoundaryConditionSpec, quad_extra: int):
    """Essential vorticity nodes and normal-velocity edges with their values."""

    def gather(sides: list[Side], degree: int) -> npt.NDArray[np.int64]:
        if not sides:
            return np.zeros(0, np.int64)
        return np.unique(np.concatenate([boundary_cells(complex, s, degree) for s in sides]))

    w_idx = gather(bc.sides("vorticity_essential"), 0)
    u_idx = gather(bc.sides("normal_essential"), 1)
    w_val = np.zeros(0)
    u_val = np.zeros(0)
    if w_idx.size:
        w_val = reduce(AnalyticForm(0, (bc.vorticity,)), complex, m, quad_extra).values[w_idx]
    if u_idx.size:
        u_val = reduce(bc.velocity, complex, m, quad_extra).values[u_idx]
    return w_idx, w_val, u_idx, u_val


def _check_rules(mass_rule: str, forcing: str) -> None:
    if mass_rule not in MASS_RULES:
        raise ConfigurationError(f"mass_rule must be one of {MASS_RULES}, got {mass_rule!r}")
    if forcing not in FORCING_RULES:
        raise ConfigurationError(f"forcing must be one of {FORCING_RULES}, got {forcing!r}")


def _common_blocks(complex: CellComplex, m: Mapping, q: int, rule: str):
    M0 = mass_matrix(0, complex, m, q, rule)
    M1 = mass_matrix(1, complex, m, q, rule)
    M2 = mass_matrix(2, complex, m, q, rule)
    E10 = incidence(complex, 0).astype(np.float64)
    E21 = incidence(complex, 1).astype(np.float64)
    C = (M1 @ E10).tocsr()
    B = (M2 @ E21).tocsr()
    Eb = (E21.T @ B).tocsr()
    return dict(M0=M0, M1=M1, M2=M2, E10=E10, E21=E21, A=M0, C=C, B=B, Eb=Eb)


def _velocity_load(f, complex, m, blk, bc: BoundaryConditionSpec, q, quad_extra, forcing):
    if forcing == "reduction":
        fl = blk["M1"] @ reduce(f, complex, m, quad_extra).values
    else:
        fl = load_vector(f, complex, m, q)
    p_sides = bc.sides("pressure_natural")
    if p_sides:
        pb = bc.pressure
        fl = fl + boundary_load(1, p_sides, lambda x, y, nx, ny: pb(x, y), complex, m, q)
    return fl


def _vorticity_load(complex, m, bc: BoundaryConditionSpec, q) -> FloatArray:
    """``h`` of the vorticity equation (before the symmetrizing sign flip)."""
    t_sides = bc.sides("tangential_natural")
    if not t_sides:
        return np.zeros(complex.n0)
    return -boundary_load(0, t_sides, bc.tangential, complex, m, q)


def assemble_poisson(
    complex: CellComplex,
    m: Mapping,
    bc: BoundaryConditionSpec,
    f: AnalyticForm,
    quad_extra: int = QUAD_EXTRA,
    mass_rule: str = "gll",
    forcing: str = "reduction",
) -> LinearSystem:
    """Mixed vector Poisson problem for a 1-form velocity and 0-form vorticity.

    ``bc.pressure`` carries ``g_b = tr *du`` on g2/g4 sides.

    ``mass_rule`` selects GLL (``N + 1`` nodes, lumped vorticity mass) or
    Gauss (``N + quad_extra`` points) integration of the mass matrices, and
    ``forcing`` whether the load is ``M1 R(f)`` or ``(v, f)`` by quadrature.
    """
    if f.degree != 1:
        raise ConfigurationError("the vector Poisson right-hand side must be a 1-form")
    _check_rules(mass_rule, forcing)
    bc.validate()
    q = complex.order + quad_extra
    blk = _common_blocks(complex, m, q, mass_rule)
    h = _vorticity_load(complex, m, bc, q)
    fl = _velocity_load(f, complex, m, blk, bc, q, quad_extra, forcing)

    K = sp.bmat([[-blk["A"], blk["C"].T], [blk["C"], blk["Eb"]]], format="csr")
    n0 = complex.n0
    w_idx, w_val, u_idx, u_val = _fixed_dofs(complex, m, bc, quad_extra)
    return LinearSystem(
        complex=complex,
        mapping=m,
        matrix=K,
        rhs=np.concatenate([-h, fl]),
        offsets={"w": slice(0, n0), "u": slice(n0, n0 + complex.n1)},
        fixed=np.concatenate([w_idx, n0 + u_idx]),
        fixed_values=np.concatenate([w_val, u_val]),
        blocks=blk,
        velocity_gauge=bc.has_velocity_nullspace,
        has_g4=BCType.G4 in bc.types.values(),
    )


def assemble_stokes(
    complex: CellComplex,
    m: Mapping,
    bc: BoundaryConditionSpec,
    f: AnalyticForm,
    g: AnalyticForm | None = None,
    quad_extra: int = QUAD_EXTRA,
    mass_rule: str = "gll",
    forcing: str = "reduction",
) -> StokesSystem:
    """Mixed Stokes problem in vorticity-velocity-pressure form.

    The mass source enters as ``M2 R(g)`` so that the discrete divergence of the
    velocity equals the reduction of ``g`` exactly.  Without any pressure-type
    side, a zero-mean pressure constraint is bordered onto the system.
    Quadrature options are those of :func:`assemble_poisson`.
    """
    if f.degree != 1 or (g is not None and g.degree != 2):
        raise ConfigurationError("Stokes data: f must be a 1-form and g a 2-form")
    _check_rules(mass_rule, forcing)
    bc.validate()
    q = complex.order + quad_extra
    blk = _common_blocks(complex, m, q, mass_rule)
    h = _vorticity_load(complex, m, bc, q)
    fl = _velocity_load(f, complex, m, blk, bc, q, quad_extra, forcing)
    if g is None:
        gl = np.zeros(complex.n2)
    else:
        gl = blk["M2"] @ reduce(g, complex, m, quad_extra).values

    C, B = blk["C"], blk["B"]
    K = sp.bmat(
        [[-blk["A"], C.T, None], [C, blk["Eb"], B.T], [None, B, None]],
        format="csr",
    )
    n0, n1 = complex.n0, complex.n1
    w_idx, w_val, u_idx, u_val = _fixed_dofs(complex, m, bc, quad_extra)
    return StokesSystem(
        complex=complex,
        mapping=m,
        matrix=K,
        rhs=np.concatenate([-h, fl, gl]),
        offsets={
            "w": slice(0, n0),
            "u": slice(n0, n0 + n1),
            "p": slice(n0 + n1, n0 + n1 + complex.n2),
        },
        fixed=np.concatenate([w_idx, n0 + u_idx]),
        fixed_values=np.concatenate([w_val, u_val]),
        blocks=blk,
        gauge=bc.needs_pressure_gauge,
        velocity_gauge=bc.has_velocity_nullspace,
        has_g4=BCType.G4 in bc.types.values(),
    )


@dataclass(eq=False)
class Solution:
    omega: DiscreteForm
    u: DiscreteForm
    p: DiscreteForm | None
    residual: float
    vector: FloatArray = field(repr=False)


def _suspect(system: LinearSystem) -> str:
    if system.has_g4:
        return "velocity curl*-free (harmonic gradient) fields admitted by the g4 sides"
    if "p" in system.offsets and not system.gauge:
        return "pressure constant"
    return "unknown; check the boundary data"


def nested_dissection(
    x: FloatArray, y: FloatArray, prio: npt.NDArray[np.int64], complex: CellComplex
) -> npt.NDArray[np.int64]:
    """Geometric nested-dissection ordering on the element grid.

    ``x``/``y`` are lattice coordinates in half GLL cells.  Every coupling in
    the mixed matrices is element-local, so the unknowns lying on an element
    interface line separate the two sides exactly.  Within a leaf element,
    unknowns are ordered by ``prio`` so that pressures come after the edges
    that make their pivots nonzero.
    """
    step = 2 * complex.order
    pieces: list[npt.NDArray[np.int64]] = []

    def leaf(idx: npt.NDArray[np.int64]) -> None:
        pieces.append(idx[np.lexsort((x[idx], y[idx], prio[idx]))])

    def split(idx, ex0, ex1, ey0, ey1) -> None:
        if idx.size == 0 or (ex1 - ex0) * (ey1 - ey0) <= 1:
            leaf(idx)
            return
        if ex1 - ex0 >= ey1 - ey0:
            mid = (ex0 + ex1) // 2
            c = x[idx] - step * mid
            split(idx[c < 0], ex0, mid, ey0, ey1)
            split(idx[c > 0], mid, ex1, ey0, ey1)
        else:
            mid = (ey0 + ey1) // 2
            c = y[idx] - step * mid
            split(idx[c < 0], ex0, ex1, ey0, mid)
            split(idx[c > 0], ex0, ex1, mid, ey1)
        leaf(idx[c == 0])

    split(np.arange(x.size), 0, complex.elements_x, 0, complex.elements_y)
    return np.concatenate(pieces)


def _pressure_mode(system: LinearSystem) -> FloatArray:
    """Pressure cochain of the discrete constant mode, ``M2^-1 1``."""
    M2 = system.blocks["M2"].tocsc()
    return spla.spsolve(M2, np.ones(M2.shape[0]))


def solve(system: LinearSystem) -> Solution:
    """Direct sparse LU solve of the reduced system.

    The unknowns are permuted by :func:`nested_dissection` and factorized by
    SuperLU with threshold pivoting.  With the pressure gauge the returned
    pressure has zero mean.  Raises :class:`IllPosedError` when the
    factorization is singular or the relative residual cannot be brought below
    ``1e-10``.
    """
    K, b = system.reduced()
    perm = nested_dissection(*system.layout(), system.complex)
    Kp = K[perm][:, perm].tocsc()
    bp = b[perm]
    try:
        lu = spla.splu(
            Kp, permc_spec="NATURAL", diag_pivot_thresh=1e-3, options={"SymmetricMode": True}
        )
    except RuntimeError as exc:
        suspect = _suspect(system)
        raise IllPosedError(f"singular system ({exc}); suspect nullspace: {suspect}", suspect) from exc
    xp = lu.solve(bp)
    scale = np.linalg.norm(bp) or 1.0
    res = np.linalg.norm(Kp @ xp - bp) / scale
    for _ in range(3):
        if not np.isfinite(res) or res <= 0.1 * RESIDUAL_TOL:
            break
        xp += lu.solve(bp - Kp @ xp)
        res = np.linalg.norm(Kp @ xp - bp) / scale
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        suspect = _suspect(system)
        raise IllPosedError(
            f"relative residual {res:.2e} exceeds {RESIDUAL_TOL:g}; suspect nullspace: {suspect}",
            suspect,
        )
    x = np.empty_like(xp)
    x[perm] = xp
    full = system.expand(x)
    if system.gauge:
        ps = system.offsets["p"]
        mode = _pressure_mode(system)
        full[ps] -= mode * (full[ps].sum() / mode.sum())
    cx, m = system.complex, system.mapping
    omega = DiscreteForm.from_values(cx, m, 0, full[system.offsets["w"]])
    u = DiscreteForm.from_values(cx, m, 1, full[system.offsets["u"]])
    p = None
    if "p" in system.offsets:
        p = DiscreteForm.from_values(cx, m, 2, full[system.offsets["p"]])
    log.debug("solved %d unknowns, relative residual %.2e", K.shape[0], res)
    return Solution(omega=omega, u=u, p=p, residual=float(res), vector=full)
