import numpy as np
import pytest

from ellipticlab.grid import CoefficientField, PeriodicGrid, assemble, meyers_kenig
from ellipticlab.semigroup import SemigroupEvaluator


def periodic_field(grid, seed, bumps=4, widths=(0.06, 0.15)):
    """Sum of von Mises bumps: smooth and genuinely periodic, unlike a clipped Gaussian."""
    rng = np.random.default_rng(seed)
    x = grid.centers
    f = np.zeros(grid.shape)
    for _ in range(bumps):
        c = rng.uniform(-0.3, 0.3, grid.n).reshape((-1,) + (1,) * grid.n)
        s = rng.uniform(*widths)
        f += rng.normal() * np.exp(np.sum(np.cos(2 * np.pi * (x - c)) - 1, axis=0) / (2 * np.pi * s) ** 2)
    return f


def laplacian(n, N, method="fourier"):
    g = PeriodicGrid(n, N)
    op = assemble(CoefficientField.identity(g), g)
    return g, op, SemigroupEvaluator(op, method)


def mk_operator(N, q=4.0, method="auto"):
    g = PeriodicGrid(2, N)
    op = assemble(meyers_kenig(q, g), g)
    return g, op, SemigroupEvaluator(op, method)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion at the end of the run

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name[len('test_criterion_'):]}  {detail}")
