"""Shared test helpers and the acceptance-criteria summary."""

import numpy as np
from hypothesis import settings

from msem.forms import AnalyticForm, reconstruct_eval

# one slow CPU: timing-based health checks only add noise
settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])


def as_analytic(form):
    """Reconstruction of ``form`` on the identity map as a pointwise field."""
    cx = form.complex
    Mx, My = cx.elements_x, cx.elements_y

    def locate(x, y):
        ex = np.clip(np.floor((x + 1) * Mx / 2).astype(int), 0, Mx - 1)
        ey = np.clip(np.floor((y + 1) * My / 2).astype(int), 0, My - 1)
        return ey * Mx + ex, (x + 1) * Mx - 2 * ex - 1, (y + 1) * My - 2 * ey - 1

    def field(comp):
        def f(x, y):
            x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            out = np.empty(x.shape)
            for idx in np.ndindex(x.shape):
                e, xi, eta = locate(x[idx], y[idx])
                val = reconstruct_eval(form, [xi], [eta], physical=True)[e, 0, 0]
                out[idx] = val if comp is None else val[comp]
            return out

        return f

    if form.degree == 1:
        return AnalyticForm.covector(field(0), field(1))
    return AnalyticForm.scalar(form.degree, field(None))
