"""Oriented tensor-product cell complex over a structured multi-element mesh.

Numbering convention (global, deterministic):

* nodes ``(I, J)`` with ``0 <= I <= Mx*N``, ``0 <= J <= My*N`` get
  ``J * (Mx*N + 1) + I``;
* horizontal edges ``(I, J)`` from node ``(I, J)`` to ``(I+1, J)`` come first,
  ``J * (Mx*N) + I``, oriented along +x;
* vertical edges ``(I, J)`` from node ``(I, J)`` to ``(I, J+1)`` follow, offset by
  the number of horizontal edges, ``J * (Mx*N + 1) + I``, oriented along +y;
* 2-cells ``(I, J)`` get ``J * (Mx*N) + I`` and are oriented counterclockwise.

Elements are numbered ``ey * Mx + ex``.  Inside an element, local indices follow
the same lexicographic layout with the element order ``N`` in place of
``Mx*N``.  Cells on an interface between two elements receive a single global
index, which makes 0-forms continuous and 1-forms normal-continuous.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .errors import InvalidMeshError

__all__ = [
    "Side",
    "CellComplex",
    "Cochain",
    "build_complex",
    "incidence_d10",
    "incidence_d21",
    "boundary_cells",
]

IntArray = npt.NDArray[np.int64]


class Side(str, enum.Enum):
    BOTTOM = "bottom"
    RIGHT = "right"
    TOP = "top"
    LEFT = "left"


@dataclass(frozen=True, eq=False)
class CellComplex:
    """Tensor-product GLL cell complex on an ``Mx x My`` tiling of [-1, 1]^2."""

    elements_x: int
    elements_y: int
    order: int
    element_nodes: IntArray = field(repr=False)
    element_edges: IntArray = field(repr=False)
    element_cells: IntArray = field(repr=False)

    @property
    def num_elements(self) -> int:
        return self.elements_x * self.elements_y

    @property
    def nx(self) -> int:
        """Number of GLL cells along x."""
        return self.elements_x * self.order

    @property
    def ny(self) -> int:
        return self.elements_y * self.order

    @property
    def n0(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_horizontal(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n1(self) -> int:
        return self.n_horizontal + (self.nx + 1) * self.ny

    @property
    def n2(self) -> int:
        return self.nx * self.ny

    def count(self, degree: int) -> int:
        return (self.n0, self.n1, self.n2)[degree]

    def element_dofs(self, degree: int) -> IntArray:
        return (self.element_nodes, self.element_edges, self.element_cells)[degree]

    def key(self) -> tuple[int, int, int]:
        return (self.elements_x, self.elements_y, self.order)


@dataclass(eq=False)
class Cochain:
    """Values of a ``degree``-cochain, one per global ``degree``-cell."""

    complex: CellComplex
    degree: int
    values: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.degree not in (0, 1, 2):
            raise ValueError(f"cochain degree must be 0, 1 or 2, got {self.degree}")
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.complex.count(self.degree)
        if self.values.shape != (n,):
            raise ValueError(
                f"{self.degree}-cochain needs {n} values, got shape {self.values.shape}"
            )


def _local_index_tables(N: int) -> tuple[IntArray, ...]:
    """Per-element (I, J) offsets of local nodes, edges and cells."""
    j, i = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    nodes = (i.ravel(), j.ravel())
    jh, ih = np.meshgrid(np.arange(N + 1), np.arange(N), indexing="ij")
    jv, iv = np.meshgrid(np.arange(N), np.arange(N + 1), indexing="ij")
    jc, ic = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    return nodes + (ih.ravel(), jh.ravel(), iv.ravel(), jv.ravel(), ic.ravel(), jc.ravel())


def build_complex(Mx: int, My: int, N: int) -> CellComplex:
    """Build the cell complex of ``Mx x My`` elements of order ``N``."""
    for name, val in (("Mx", Mx), ("My", My), ("N", N)):
        if not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < 1:
            raise InvalidMeshError(f"{name} must be a positive integer, got {val!r}")
    Mx, My, N = int(Mx), int(My), int(N)
    nx, ny = Mx * N, My * N
    n_h = nx * (ny + 1)

    ey, ex = np.divmod(np.arange(Mx * My), Mx)
    ox = (ex * N)[:, None]
    oy = (ey * N)[:, None]
    ni, nj, hi, hj, vi, vj, ci, cj = _local_index_tables(N)

    nodes = (oy + nj) * (nx + 1) + (ox + ni)
    horiz = (oy + hj) * nx + (ox + hi)
    vert = n_h + (oy + vj) * (nx + 1) + (ox + vi)
    cells = (oy + cj) * nx + (ox + ci)

    tables = [nodes, np.hstack([horiz, vert]), cells]
    for t in tables:
        t.setflags(write=False)
    return CellComplex(Mx, My, N, *(t.astype(np.int64) for t in tables))


def incidence_d10(complex: CellComplex) -> sp.csr_matrix:
    """Coboundary on 0-cochains: each edge gets (end node) - (start node)."""
    nx, ny = complex.nx, complex.ny
    J, I = np.meshgrid(np.arange(ny + 1), np.arange(nx), indexing="ij")
    h_start = (J * (nx + 1) + I).ravel()
    J, I = np.meshgrid(np.arange(ny), np.arange(nx + 1), indexing="ij")
    v_start = (J * (nx + 1) + I).ravel()

    n_h = complex.n_horizontal
    rows = np.arange(complex.n1)
    start = np.concatenate([h_start, v_start])
    end = np.concatenate([h_start + 1, v_start + (nx + 1)])
    data = np.concatenate([-np.ones(complex.n1, np.int64), np.ones(complex.n1, np.int64)])
    assert rows.size == n_h + v_start.size
    return sp.csr_matrix(
        (data, (np.tile(rows, 2), np.concatenate([start, end]))),
        shape=(complex.n1, complex.n0),
        dtype=np.int64,
    )


def incidence_d21(complex: CellComplex) -> sp.csr_matrix:
    """Coboundary on 1-cochains: bottom +, right +, top -, left - per 2-cell."""
    nx, ny = complex.nx, complex.ny
    J, I = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    I, J = I.ravel(), J.ravel()
    n_h = complex.n_horizontal
    bottom = J * nx + I
    top = (J + 1) * nx + I
    left = n_h + J * (nx + 1) + I
    right = left + 1

    rows = np.tile(np.arange(complex.n2), 4)
    cols = np.concatenate([bottom, right, top, left])
    data = np.repeat(np.array([1, 1, -1, -1], np.int64), complex.n2)
    return sp.csr_matrix((data, (rows, cols)), shape=(complex.n2, complex.n1), dtype=np.int64)


def boundary_cells(complex: CellComplex, side: Side | str, degree: int) -> IntArray:
    """Global indices of boundary ``degree``-cells on ``side``.

    Ordered by increasing x for bottom/top and increasing y for left/right.
    """
    side = Side(side)
    if degree not in (0, 1):
        raise ValueError(f"boundary cells exist only for degree 0 or 1, got {degree}")
    nx, ny = complex.nx, complex.ny
    n_h = complex.n_horizontal
    if degree == 0:
        if side is Side.BOTTOM:
            return np.arange(nx + 1, dtype=np.int64)
        if side is Side.TOP:
            return ny * (nx + 1) + np.arange(nx + 1, dtype=np.int64)
        if side is Side.LEFT:
            return np.arange(ny + 1, dtype=np.int64) * (nx + 1)
        return np.arange(ny + 1, dtype=np.int64) * (nx + 1) + nx
    if side is Side.BOTTOM:
        return np.arange(nx, dtype=np.int64)
    if side is Side.TOP:
        return ny * nx + np.arange(nx, dtype=np.int64)
    if side is Side.LEFT:
        return n_h + np.arange(ny, dtype=np.int64) * (nx + 1)
    return n_h + np.arange(ny, dtype=np.int64) * (nx + 1) + nx
