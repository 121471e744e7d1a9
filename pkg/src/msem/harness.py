"""Manufactured-solution cases, error norms and convergence studies.

Velocity 1-forms are written ``u = a dx + b dy``.  In this orientation the
quantities entering the mixed problems are

* vorticity ``w = d*u = -(a_x + b_y)``,
* divergence ``D = *du = b_x - a_y`` (the 2-form ``du = D dx^dy``),
* forcing ``f = dw + d*(D + p)`` with ``d*(s) = s_y dx - s_x dy``,
* boundary data ``u_bt = a nx + b ny`` and ``pi_b = D + p``.

All derived data is obtained by symbolic differentiation and compiled to numpy
functions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import numpy.typing as npt
import sympy as sym

from .basis1d import gauss_legendre
from .errors import ConfigurationError, IllPosedError
from .forms import QUAD_EXTRA, AnalyticForm, DiscreteForm, incidence, reconstruct_eval, reduce
from .geometry import AffineMap, Mapping, SinusoidalMap, element_geometry
from .solver import (
    BCType,
    BoundaryConditionSpec,
    Solution,
    assemble_poisson,
    assemble_stokes,
    solve,
)
from .topology import Side, build_complex

__all__ = [
    "TestCase",
    "ErrorRecord",
    "LevelResult",
    "ConvergenceReport",
    "CSV_HEADER",
    "builtin_cases",
    "get_case",
    "error_norms",
    "run_level",
    "convergence_study",
]

log = logging.getLogger(__name__)

X, Y = sym.symbols("x y", real=True)
FloatArray = npt.NDArray[np.float64]

CSV_HEADER = (
    "case", "N", "M", "h", "err_w_l2", "err_w_h1", "err_u_l2", "err_u_hdiv",
    "err_p_l2", "div_inf", "rate_w_l2", "rate_u_l2", "rate_p_l2", "residual",
)  # fmt: skip


def _compile(expr: sym.Expr) -> Callable[[FloatArray, FloatArray], FloatArray]:
    fn = sym.lambdify((X, Y), expr, modules="numpy")

    def call(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return np.broadcast_to(np.asarray(fn(x, y), dtype=np.float64), np.broadcast(x, y).shape)

    return call


@dataclass(frozen=True)
class TestCase:
    """A manufactured solution together with its domain and boundary types.

    ``a`` and ``b`` are the ``dx``/``dy`` coefficients of the exact velocity and
    ``p`` the exact pressure (``None`` for the vector Poisson problem).
    """

    __test__ = False  # not a pytest class

    name: str
    problem: str
    a: sym.Expr
    b: sym.Expr
    p: sym.Expr | None
    bc_types: dict[Side, BCType]
    mapping: Mapping = field(default_factory=AffineMap)
    description: str = ""
    velocity_gauge: bool = False

    def __post_init__(self) -> None:
        if self.problem not in ("poisson", "stokes"):
            raise ConfigurationError(f"unknown problem type {self.problem!r}")
        if (self.p is None) != (self.problem == "poisson"):
            raise ConfigurationError("a pressure is required exactly for Stokes cases")

    def with_bc(self, bc: BCType | str) -> "TestCase":
        """Same solution with one boundary type on every side."""
        bc = BCType(bc)
        return dataclasses.replace(self, bc_types={s: bc for s in Side})

    # --- symbolic derived quantities -------------------------------------- #

    @cached_property
    def _sym(self) -> dict[str, sym.Expr]:
        a, b = self.a, self.b
        p = self.p if self.p is not None else sym.Integer(0)
        w = sym.simplify(-(sym.diff(a, X) + sym.diff(b, Y)))
        D = sym.simplify(sym.diff(b, X) - sym.diff(a, Y))
        s = D + p
        f = (sym.diff(w, X) + sym.diff(s, Y), sym.diff(w, Y) - sym.diff(s, X))
        return {
            "a": a, "b": b, "p": p, "w": w, "D": D, "pi": s,
            "fa": sym.simplify(f[0]), "fb": sym.simplify(f[1]),
            "wx": sym.diff(w, X), "wy": sym.diff(w, Y),
        }  # fmt: skip

    @cached_property
    def _num(self) -> dict[str, Callable]:
        return {k: _compile(v) for k, v in self._sym.items()}

    @property
    def omega(self) -> AnalyticForm:
        return AnalyticForm.scalar(0, self._num["w"])

    @property
    def velocity(self) -> AnalyticForm:
        return AnalyticForm.covector(self._num["a"], self._num["b"])

    @property
    def grad_omega(self) -> AnalyticForm:
        return AnalyticForm.covector(self._num["wx"], self._num["wy"])

    @property
    def divergence(self) -> AnalyticForm:
        """Exact ``du`` as a 2-form; equals the mass source ``g`` for Stokes."""
        return AnalyticForm.scalar(2, self._num["D"])

    @property
    def pressure(self) -> AnalyticForm | None:
        return None if self.p is None else AnalyticForm.scalar(2, self._num["p"])

    @property
    def forcing(self) -> AnalyticForm:
        return AnalyticForm.covector(self._num["fa"], self._num["fb"])

    @property
    def g(self) -> AnalyticForm | None:
        return self.divergence if self.problem == "stokes" else None

    @property
    def divergence_free(self) -> bool:
        return sym.simplify(self._sym["D"]) == 0

    def boundary_conditions(self) -> BoundaryConditionSpec:
        num = self._num
        a, b, pi = num["a"], num["b"], num["pi"]
        return BoundaryConditionSpec(
            self.bc_types,
            vorticity=num["w"],
            velocity=self.velocity,
            tangential=lambda x, y, nx, ny: a(x, y) * nx + b(x, y) * ny,
            pressure=pi,
            velocity_gauge=self.velocity_gauge,
        )

    def check_consistency(self, n: int = 20, seed: int = 0, step: float = 1e-3) -> float:
        """Max strong-form residual of the derived data at ``n`` random points.

        Derivatives of the exact fields are approximated by sixth-order central
        differences, independently of the symbolic pipeline.
        """
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.1, 0.9, size=(2, n))
        num = self._num
        c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
        offs = np.arange(-3, 4) * step

        def dx(fn, x, y):
            return sum(ci * fn(x + o, y) for ci, o in zip(c, offs)) / step

        def dy(fn, x, y):
            return sum(ci * fn(x, y + o) for ci, o in zip(c, offs)) / step

        x, y = pts
        a, b, w, D, pi = num["a"], num["b"], num["w"], num["D"], num["pi"]
        res = [
            w(x, y) + dx(a, x, y) + dy(b, x, y),
            D(x, y) - (dx(b, x, y) - dy(a, x, y)),
            num["fa"](x, y) - (dx(w, x, y) + dy(pi, x, y)),
            num["fb"](x, y) - (dy(w, x, y) - dx(pi, x, y)),
        ]
        return float(max(np.max(np.abs(r)) for r in res))


def _sin(z):
    return sym.sin(sym.pi * z)


def _cos(z):
    return sym.cos(sym.pi * z)


def builtin_cases() -> list[TestCase]:
    """The five built-in verification cases, in CLI order."""
    all_of = lambda t: {s: BCType(t) for s in Side}  # noqa: E731
    quartic_a = -2 * Y**2 * (Y - 1) ** 2 * X * (2 * X - 1) * (X - 1)
    quartic_b = -2 * X**2 * (X - 1) ** 2 * Y * (2 * Y - 1) * (Y - 1)
    quintic_p = (X - sym.Rational(1, 2)) ** 5 + (Y - sym.Rational(1, 2)) ** 5
    k = sym.Rational(3, 2) * sym.pi
    stokes_g1 = TestCase(
        "stokes-g1", "stokes", quartic_a, quartic_b, quintic_p, all_of("g1"),
        description="Stokes, polynomial solution, normal and tangential velocity on all sides",
    )  # fmt: skip
    return [
        TestCase(
            "poisson-g2", "poisson",
            -2 * _sin(X) * _cos(Y), _cos(X) * _sin(Y), None, all_of("g2"),
            description="vector Poisson, tangential velocity and divergence on all sides",
        ),
        TestCase(
            "poisson-g1", "poisson",
            -_sin(X) * _sin(Y), _sin(X) * _sin(Y), None, all_of("g1"),
            description="vector Poisson, normal and tangential velocity on all sides",
        ),
        stokes_g1,
        TestCase(
            "stokes-mixed-curvi", "stokes",
            -sym.cos(k * X) * sym.sin(k * Y), 2 * sym.sin(k * X) * sym.cos(k * Y),
            _sin(X) * _sin(Y),
            {Side.BOTTOM: BCType.G1, Side.RIGHT: BCType.G2,
             Side.TOP: BCType.G3, Side.LEFT: BCType.G4},
            mapping=SinusoidalMap(0.1),
            description="Stokes on a sinusoidally deformed square, one boundary type per side",
        ),
        dataclasses.replace(
            stokes_g1, name="bc-sweep", velocity_gauge=True,
            description="the stokes-g1 solution under each all-side boundary type",
        ),
    ]  # fmt: skip


def get_case(name: str) -> TestCase:
    for case in builtin_cases():
        if case.name == name:
            return case
    names = ", ".join(c.name for c in builtin_cases())
    raise ConfigurationError(f"unknown case {name!r}; choose one of {names}")


# --------------------------------------------------------------------------- #
# Error norms
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ErrorRecord:
    w_l2: float
    w_h1: float
    u_l2: float
    u_hdiv: float
    p_l2: float
    div_inf: float


def error_norms(
    solution: Solution,
    case: TestCase,
    q: int | None = None,
    zero_mean_pressure: bool = False,
) -> ErrorRecord:
    """L2 and HLambda semi-norm errors of a discrete solution.

    ``q`` is the number of Gauss points per direction, at least ``N + 6``.
    ``div_inf`` is the largest entry of ``E21 u - R g`` (``R g = 0`` for the
    vector Poisson problem).  With ``zero_mean_pressure`` the exact pressure is
    shifted to zero mean before comparison.
    """
    cx = solution.u.complex
    m = solution.u.mapping
    N = cx.order
    q = N + QUAD_EXTRA if q is None else int(q)
    if q < N + QUAD_EXTRA:
        raise ConfigurationError(f"error quadrature needs at least N+{QUAD_EXTRA} points")
    t, w = gauss_legendre(q)
    geo = element_geometry(cx, m, t, t)
    dA = geo.det * (w[:, None] * w[None, :])

    def l2(diff: FloatArray) -> float:
        if diff.ndim == dA.ndim + 1:
            diff = np.sum(diff**2, axis=-1)
        else:
            diff = diff**2
        return float(math.sqrt(max(np.sum(diff * dA), 0.0)))

    def rec(form: DiscreteForm) -> FloatArray:
        return reconstruct_eval(form, t, t, physical=True, geometry=geo)

    xs, ys = geo.x, geo.y
    w_h = solution.omega
    dw_h = DiscreteForm.from_values(cx, m, 1, incidence(cx, 0) @ w_h.values)
    du_vals = incidence(cx, 1) @ solution.u.values
    du_h = DiscreteForm.from_values(cx, m, 2, du_vals)

    err_w = l2(rec(w_h) - case.omega(xs, ys))
    err_dw = l2(rec(dw_h) - case.grad_omega(xs, ys))
    err_u = l2(rec(solution.u) - case.velocity(xs, ys))
    err_du = l2(rec(du_h) - case.divergence(xs, ys))

    err_p = 0.0
    if solution.p is not None and case.pressure is not None:
        p_exact = case.pressure(xs, ys)
        if zero_mean_pressure:
            p_exact = p_exact - np.sum(p_exact * dA) / np.sum(dA)
        err_p = l2(rec(solution.p) - p_exact)

    if case.problem == "stokes":
        rg = reduce(case.divergence, cx, m, q - N).values
        div_inf = float(np.max(np.abs(du_vals - rg)))
    else:
        div_inf = float("nan")
    return ErrorRecord(err_w, err_dw, err_u, err_du, err_p, div_inf)


# --------------------------------------------------------------------------- #
# Convergence studies
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class LevelResult:
    M: int
    N: int
    errors: ErrorRecord
    residual: float
    seconds: float = field(default=0.0, compare=False)

    @property
    def h(self) -> float:
        return 1.0 / self.M


def _rate(coarse: float, fine: float) -> float:
    if not (coarse > 0 and fine > 0) or not (math.isfinite(coarse) and math.isfinite(fine)):
        return float("nan")
    return math.log2(coarse / fine)


@dataclass
class ConvergenceReport:
    case: str
    N: int
    bc: str | None
    levels: list[LevelResult]
    failed: str | None = None  # message of the error that aborted the study

    @property
    def complete(self) -> bool:
        return self.failed is None

    def column(self, name: str) -> list[float]:
        return [getattr(lv.errors, name) for lv in self.levels]

    def rates(self, name: str) -> list[float]:
        """``log2(e_{2h} / e_h)`` for each consecutive pair of levels."""
        vals = self.column(name)
        return [_rate(c, f) for c, f in zip(vals[:-1], vals[1:])]

    def rows(self) -> list[dict[str, str]]:
        label = self.case if self.bc is None else f"{self.case}:{self.bc}"
        out = []
        rates = {k: [float("nan")] + self.rates(k) for k in ("w_l2", "u_l2", "p_l2")}
        for i, lv in enumerate(self.levels):
            e = lv.errors
            out.append(
                {
                    "case": label,
                    "N": str(lv.N),
                    "M": str(lv.M),
                    "h": repr(lv.h),
                    "err_w_l2": f"{e.w_l2:.6e}",
                    "err_w_h1": f"{e.w_h1:.6e}",
                    "err_u_l2": f"{e.u_l2:.6e}",
                    "err_u_hdiv": f"{e.u_hdiv:.6e}",
                    "err_p_l2": f"{e.p_l2:.6e}",
                    "div_inf": f"{e.div_inf:.6e}",
                    "rate_w_l2": f"{rates['w_l2'][i]:.4f}",
                    "rate_u_l2": f"{rates['u_l2'][i]:.4f}",
                    "rate_p_l2": f"{rates['p_l2'][i]:.4f}",
                    "residual": f"{lv.residual:.3e}",
                }
            )
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()


def run_level(
    case: TestCase, N: int, M: int, quad_extra: int = QUAD_EXTRA, **options
) -> LevelResult:
    """Assemble, solve and measure errors on an ``M x M`` mesh of order ``N``.

    ``options`` (``mass_rule``, ``forcing``) are passed to the assembler.
    """
    start = time.perf_counter()
    cx = build_complex(M, M, N)
    bc = case.boundary_conditions()
    if case.problem == "stokes":
        system = assemble_stokes(
            cx, case.mapping, bc, case.forcing, case.g, quad_extra, **options
        )
    else:
        system = assemble_poisson(cx, case.mapping, bc, case.forcing, quad_extra, **options)
    sol = solve(system)
    errors = error_norms(sol, case, N + quad_extra, zero_mean_pressure=system.gauge)
    elapsed = time.perf_counter() - start
    log.info("%s N=%d M=%d: %.2fs, w_l2=%.4e", case.name, N, M, elapsed, errors.w_l2)
    return LevelResult(M=M, N=N, errors=errors, residual=sol.residual, seconds=elapsed)


def _check_levels(levels: Sequence[int]) -> list[int]:
    levels = [int(v) for v in levels]
    if not levels or any(v < 1 for v in levels):
        raise ConfigurationError("levels must be positive integers")
    if any(b <= a for a, b in zip(levels[:-1], levels[1:])):
        raise ConfigurationError("levels must be strictly increasing")
    return levels


def convergence_study(
    case: TestCase | str,
    N: int,
    levels: Iterable[int],
    bc: BCType | str | None = None,
    quad_extra: int = QUAD_EXTRA,
    **options,
) -> ConvergenceReport:
    """Run ``case`` on ``M x M`` meshes for each ``M`` in ``levels`` (``h = 1/M``).

    A solver failure stops the study; the report keeps the completed levels and
    records the failure message.
    """
    if isinstance(case, str):
        case = get_case(case)
    levels = _check_levels(list(levels))
    if bc is not None:
        case = case.with_bc(bc)
    label = None if bc is None else BCType(bc).value
    report = ConvergenceReport(case=case.name, N=int(N), bc=label, levels=[])
    case.boundary_conditions().validate()
    for M in levels:
        try:
            report.levels.append(run_level(case, N, M, quad_extra, **options))
        except IllPosedError as exc:
            report.failed = str(exc)
            log.error("study %s aborted at M=%d: %s", case.name, M, exc)
            break
    return report


def write_reports(reports: Iterable[ConvergenceReport], path: str | Path | None) -> str:
    """Concatenate report rows under a single header; write to ``path`` if given."""
    text = "".join(r.to_csv(header=i == 0) for i, r in enumerate(reports))
    if path is not None:
        Path(path).write_text(text)
    return text
