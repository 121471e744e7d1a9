"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import dataclasses
import time

import numpy as np
import pytest
import sympy as sym

from conftest import as_analytic, record
from msem.errors import ConfigurationError
from msem.forms import AnalyticForm, DiscreteForm, incidence, reduce
from msem.geometry import IdentityMap, SinusoidalMap
from msem.harness import X, Y, TestCase, convergence_study, get_case
from msem.solver import BCType, assemble_poisson, assemble_stokes, solve
from msem.topology import Side, build_complex, incidence_d10, incidence_d21

TABLE_LEVELS = [8, 16, 32, 64, 128]
TABLE = {
    "g1": [1.0280e-04, 1.2445e-05, 1.5424e-06, 1.9238e-07, 2.4035e-08],
    "g2": [1.0109e-04, 1.2410e-05, 1.5426e-06, 1.9247e-07, 2.4042e-08],
    "g3": [1.0030e-04, 1.2364e-05, 1.5399e-06, 1.9230e-07, 2.4032e-08],
    "g4": [1.0035e-04, 1.2375e-05, 1.5416e-06, 1.9255e-07, 2.4065e-08],
}
TABLE_RTOL = 0.02
RATE = (3.00, 0.05)
DIV_TOL = 1e-10
ORDER_TOL = 0.2
CASE4 = dict(orders=(2, 4), levels=[4, 8, 16], slack=0.2)
COLUMNS = ("w_l2", "w_h1", "u_l2", "u_hdiv", "p_l2")


@pytest.fixture(scope="module")
def sweep():
    start = time.perf_counter()
    reports = {bc: convergence_study("bc-sweep", 2, TABLE_LEVELS, bc=bc) for bc in TABLE}
    return reports, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_1_table(sweep):
    reports, seconds = sweep
    worst_err, worst_rate, ok = 0.0, 0.0, True
    for bc, report in reports.items():
        assert report.complete, report.failed
        got = np.array(report.column("w_l2"))
        rel = np.abs(got / TABLE[bc] - 1)
        worst_err = max(worst_err, rel.max())
        dev = np.abs(np.array(report.rates("w_l2")[-2:]) - RATE[0])
        worst_rate = max(worst_rate, dev.max())
        ok &= bool(rel.max() <= TABLE_RTOL and dev.max() <= RATE[1])
    record(1, ok, f"max rel. deviation {worst_err:.2%}, max |rate-3| {worst_rate:.3f}, {seconds:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_2_divergence_free(sweep):
    reports, _ = sweep
    div = [lv.errors.div_inf for r in reports.values() for lv in r.levels]
    for N in (3, 4):
        div += [lv.errors.div_inf for lv in convergence_study("stokes-g1", N, [4, 8]).levels]
    worst = max(div)
    record(2, worst <= DIV_TOL, f"max |E21 u| = {worst:.1e} over {len(div)} runs")
    assert worst <= DIV_TOL


def test_criterion_3_poisson_orders():
    lines, ok = [], True
    for N in (2, 3):
        report = convergence_study("poisson-g1", N, [8, 16, 32])
        ru, rw = report.rates("u_l2")[-1], report.rates("w_l2")[-1]
        ok &= abs(ru - N) <= ORDER_TOL and abs(rw - (N + 1)) <= ORDER_TOL
        lines.append(f"N={N}: u {ru:.3f}, w {rw:.3f}")
    record(3, ok, "; ".join(lines))
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="discrete system for one-side-per-type BCs is numerically singular "
    "(harmonic-gradient modes through the g4 side); see the decisions ledger",
)
def test_criterion_4_mixed_curvilinear():
    lines, ok = [], True
    for N in CASE4["orders"]:
        report = convergence_study("stokes-mixed-curvi", N, CASE4["levels"])
        if not report.complete:
            ok = False
            lines.append(f"N={N}: solver refused after {len(report.levels)} level(s): {report.failed}")
            continue
        rates = {c: report.rates(c)[-1] for c in COLUMNS}
        ok &= all(r >= N - CASE4["slack"] for r in rates.values())
        lines.append(f"N={N}: " + ", ".join(f"{c} {r:.2f}" for c, r in rates.items()))
    record(4, ok, "; ".join(lines))
    assert ok


def _structural_checks():
    out = {}
    meshes = [(1, 1, 1), (2, 3, 2), (4, 4, 5), (3, 1, 7)]
    complexes = [build_complex(*shape) for shape in meshes]
    out["dd"] = all((incidence_d21(c) @ incidence_d10(c)).count_nonzero() == 0 for c in complexes)

    rng = np.random.default_rng(5)
    cx = build_complex(2, 2, 3)
    ri = 0.0
    for k in (0, 1, 2):
        c = rng.standard_normal(cx.count(k))
        back = reduce(as_analytic(DiscreteForm.from_values(cx, IdentityMap(), k, c)), cx, IdentityMap()).values
        ri = max(ri, np.abs(back - c).max())
    out["RI"] = ri

    m, cx = SinusoidalMap(), build_complex(3, 3, 4)
    pi = np.pi
    a = AnalyticForm.scalar(0, lambda x, y: np.sin(pi * x) * np.sin(pi * y))
    da = AnalyticForm.covector(
        lambda x, y: pi * np.cos(pi * x) * np.sin(pi * y),
        lambda x, y: pi * np.sin(pi * x) * np.cos(pi * y),
    )
    out["Rd"] = np.abs(reduce(da, cx, m).values - incidence(cx, 0) @ reduce(a, cx, m).values).max()

    case = get_case("stokes-mixed-curvi")
    K = assemble_stokes(cx, case.mapping, case.boundary_conditions(), case.forcing, case.g).matrix
    out["sym"] = abs(K - K.T).max() / abs(K).max()

    G = {t.value: t for t in BCType}
    patch = 0.0
    for types in ("g3 g3 g3 g3", "g1 g2 g3 g1"):
        bcs = dict(zip(Side, (G[t] for t in types.split())))
        for problem, p in (("poisson", None), ("stokes", X**2 * Y - sym.Rational(1, 6))):
            tc = TestCase("patch", problem, X**2 * Y**3 - X * Y + 1, X**3 * Y**2 + Y, p, bcs)
            cxp = build_complex(3, 2, 3)
            args = (cxp, tc.mapping, tc.boundary_conditions(), tc.forcing)
            kw = dict(mass_rule="gauss", forcing="quadrature")
            system = assemble_poisson(*args, **kw) if p is None else assemble_stokes(*args, tc.g, **kw)
            sol = solve(system)
            pairs = [(sol.omega, tc.omega), (sol.u, tc.velocity)]
            if p is not None:
                pairs.append((sol.p, tc.pressure))
            for got, exact in pairs:
                patch = max(patch, np.abs(got.values - reduce(exact, cxp, tc.mapping).values).max())
    out["patch"] = patch
    return out


def test_criterion_5_structure():
    r = _structural_checks()
    ok = r["dd"] and r["RI"] <= 1e-11 and r["Rd"] <= 1e-12 and r["sym"] <= 1e-12 and r["patch"] <= 1e-8
    record(
        5,
        ok,
        f"dd=0 {r['dd']}, |RI-I| {r['RI']:.1e}, |Rd-dR| {r['Rd']:.1e}, "
        f"asym {r['sym']:.1e}, patch {r['patch']:.1e}",
    )
    assert ok


def test_criterion_6_guardrails():
    G = {t.value: t for t in BCType}
    worst = 0.0
    for types in ("g1 g1 g1 g1", "g3 g3 g3 g3", "g1 g3 g1 g3", "g3 g1 g1 g3"):
        case = dataclasses.replace(
            get_case("stokes-g1"), bc_types=dict(zip(Side, (G[t] for t in types.split())))
        )
        cx = build_complex(6, 6, 3)
        system = assemble_stokes(cx, case.mapping, case.boundary_conditions(), case.forcing, case.g)
        assert system.gauge
        worst = max(worst, abs(solve(system).p.values.sum()))
    try:
        get_case("stokes-g1").with_bc("g4").boundary_conditions().validate()
        message = None
    except ConfigurationError as exc:
        message = str(exc)
    ok = worst <= 1e-11 and message is not None
    record(6, ok, f"max |mean p| {worst:.1e}; all-g4: {message or 'NOT rejected'}")
    assert ok
