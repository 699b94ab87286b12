from __future__ import annotations

import numpy as np
import pytest

from pingtsvm import qpsolver

# criterion number -> (title, list of test outcomes)
_CRITERIA: dict[int, list] = {}
_TITLES: dict[int, str] = {}
QP_AUDIT = {"optimal": 0, "worst": [0.0, 0.0, 0.0]}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


def _audit(problem, sol, settings):
    """Recheck the KKT certificate from scratch; tolerances follow the solve's settings."""
    settings = settings or qpsolver.QpSettings()
    P, q, G, h = problem.P, problem.q, problem.G, problem.h
    if settings.ridge > 0:
        P = P + settings.ridge * np.eye(problem.n)
    x, lam = sol.x, sol.dual
    slack = h - G @ x
    primal = max(0.0, float(np.max(-slack))) if slack.size else 0.0
    stat = float(np.max(np.abs(P @ x + q + G.T @ lam))) if x.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    assert np.all(lam >= 0), "negative multiplier on an optimal solve"
    assert primal <= settings.tol_feas, f"primal residual {primal:.3g}"
    assert stat <= settings.tol_stat, f"stationarity residual {stat:.3g}"
    assert comp <= settings.tol_comp, f"complementarity residual {comp:.3g}"
    QP_AUDIT["optimal"] += 1
    QP_AUDIT["worst"] = [max(a, b) for a, b in zip(QP_AUDIT["worst"], (primal, stat, comp))]


@pytest.fixture(autouse=True)
def audited_qp(monkeypatch):
    """Every in-process optimal QP solve is re-certified independently."""
    original = qpsolver.solve_qp

    def checked(problem, settings=None):
        sol = original(problem, settings)
        if sol.status == qpsolver.OPTIMAL:
            _audit(problem, sol, settings)
        return sol

    monkeypatch.setattr(qpsolver, "solve_qp", checked)
    yield


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _TITLES[number] = title
    if rep.when == "call" or rep.failed:
        _CRITERIA.setdefault(number, []).append(rep.passed and not rep.failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok = all(_CRITERIA[number])
        tr.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {_TITLES[number]}")
    w = QP_AUDIT["worst"]
    tr.write_line(f"audited optimal QP solves: {QP_AUDIT['optimal']} "
                  f"(worst primal {w[0]:.2e}, stationarity {w[1]:.2e}, complementarity {w[2]:.2e})")
