"""
The twelve acceptance criteria, each at its stated tolerance and time budget.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import time
from fractions import Fraction

import numpy as np
import pytest

from oracles import (classical_twsvm, enumerate_qp, grid_minimum, linearly_separable,
                     twsvm_predict)
from pingtsvm import qpsolver
from pingtsvm.bench import BenchSpec, run_noise_resilience, run_tau_sweep
from pingtsvm.cli import main
from pingtsvm.dataset import (FeatureDataset, load_csv, make_blobs, make_crossplanes,
                              make_two_moons, save_csv)
from pingtsvm.kernel import GAUSSIAN, LINEAR, KernelSpec
from pingtsvm.metrics import ConfusionMatrix, report
from pingtsvm.model import (SURFACE1, SURFACE2, PinGtsvmParams, empirical_objective, load_model,
                            pinball_loss, save_model, train)
from pingtsvm.modelselect import GridSpec, cross_validate, grid_search


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


# 1 -----------------------------------------------------------------------------

@pytest.mark.criterion(1, "pinball loss matches its definition exactly")
def test_pinball_exact():
    with Budget(1):
        assert pinball_loss(1.0, 0.5) == 0.5
        assert pinball_loss(-1.0, 0.5) == 0.5
        assert pinball_loss(1.0, 1.0) == 0.0 and pinball_loss(-1.0, 1.0) == 1.0
        assert pinball_loss(1.0, 0.0) == 1.0 and pinball_loss(-1.0, 0.0) == 0.0
        rng = np.random.default_rng(1)
        s = rng.normal(scale=10, size=10_000)
        tau = rng.uniform(size=10_000)
        got = np.array([pinball_loss(a, t) for a, t in zip(s, tau)])
        assert np.array_equal(got, np.maximum((1 - tau) * s, -tau * s))


# 2 -----------------------------------------------------------------------------

def _random_qp(rng, trial):
    n = int(rng.integers(1, 9))
    m = int(rng.integers(0, 13))
    L = rng.normal(size=(n, n))
    P = L @ L.T + 0.1 * np.eye(n)
    q = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    # feasible by construction: h = G x0 + nonnegative slack
    x0 = rng.normal(size=n)
    h = G @ x0 + rng.exponential(size=m) * (trial % 3 != 0)
    return P, q, G, h


@pytest.mark.criterion(2, "QP certification and enumeration-oracle agreement")
def test_qp_matches_enumeration():
    rng = np.random.default_rng(2024)
    worst = 0.0
    with Budget(30):
        for trial in range(100):
            P, q, G, h = _random_qp(rng, trial)
            sol = qpsolver.solve_qp(qpsolver.QpProblem(P, q, G, h))
            assert sol.status == qpsolver.OPTIMAL, (trial, sol.message)
            assert sol.primal_residual <= 1e-8
            assert sol.stationarity_residual <= 1e-6
            assert sol.complementarity_residual <= 1e-6
            worst = max(worst, abs(sol.objective - enumerate_qp(P, q, G, h)))
    assert worst <= 1e-6


# 3 -----------------------------------------------------------------------------

@pytest.mark.criterion(3, "trained objective never above the brute-force grid minimum")
def test_brute_force_primal():
    rng = np.random.default_rng(7)
    with Budget(60):
        for _ in range(25):
            n1, n2 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            A = rng.normal(size=(n1, 2)) + [0.8, 0.0]
            B = rng.normal(size=(n2, 2)) - [0.8, 0.0]
            ds = FeatureDataset(np.vstack([A, B]), np.r_[np.ones(n1), -np.ones(n2)])
            c = float(2.0 ** rng.integers(-2, 3))
            tau = float(rng.choice([0.0, 0.3, 0.5, 0.8]))
            # no ridge, so the QP objective equals the weight-space objective exactly
            params = PinGtsvmParams(c, c, tau, tau, KernelSpec(LINEAR), ridge=0.0)
            model = train(ds, params)
            assert model.objective1 <= grid_minimum(A, B, +1, c, tau) + 1e-6
            assert model.objective2 <= grid_minimum(B, A, -1, c, tau) + 1e-6
            for which, obj, u, b in ((SURFACE1, model.objective1, model.u1, model.b1),
                                     (SURFACE2, model.objective2, model.u2, model.b2)):
                assert empirical_objective(which, u, b, ds, params) == pytest.approx(obj, rel=1e-8, abs=1e-12)


# 4 -----------------------------------------------------------------------------

@pytest.mark.criterion(4, "tau = 0 reproduces a classical hinge twin SVM label for label")
def test_hinge_reduction():
    rng = np.random.default_rng(11)
    with Budget(30):
        for _ in range(20):
            A = rng.normal(size=(10, 2)) + [1.0, 0.5]
            B = rng.normal(size=(10, 2)) - [1.0, 0.5]
            ds = FeatureDataset(np.vstack([A, B]), np.r_[np.ones(10), -np.ones(10)])
            model = train(ds, PinGtsvmParams(1.0, 1.0, 0.0, 0.0, KernelSpec(LINEAR)))
            w1, b1, w2, b2 = classical_twsvm(A, B, 1.0, 1.0)
            probes = np.vstack([ds.features, rng.normal(scale=2.0, size=(50, 2))])
            expected, d1, d2 = twsvm_predict(probes, w1, b1, w2, b2)
            # probes sitting on the decision boundary cannot be compared meaningfully
            clear = np.abs(d1 - d2) > 1e-6 * (1 + np.abs(d1))
            assert clear.sum() >= 60
            assert np.array_equal(model.predict(probes)[clear], expected[clear])


# 5 -----------------------------------------------------------------------------

@pytest.mark.criterion(5, "separable blobs: training accuracy 1, 5-fold CV mean 1, std 0")
def test_separability():
    with Budget(10):
        ds = make_blobs(50, 2, 6.0, 1.0, seed=5)
        assert linearly_separable(ds.features, ds.labels)
        params = PinGtsvmParams(1.0, 1.0, 0.5, 0.5, KernelSpec(LINEAR))
        model = train(ds, params)
        assert np.mean(model.predict(ds.features) == ds.labels) == 1.0
        cv = cross_validate(ds, params, k=5, seed=5)
        assert cv.mean_accuracy == 1.0 and cv.std_accuracy == 0.0


# 6 -----------------------------------------------------------------------------

@pytest.mark.criterion(6, "two moons: best Gaussian CV beats best linear by >= 0.05")
def test_kernel_direction():
    ds = make_two_moons(100, 0.1, seed=6)
    # the linear side gets its full default grid; a coarse Gaussian grid suffices
    c_values = tuple(2.0 ** k for k in range(-3, 6, 2))
    with Budget(60):
        linear = grid_search(ds, GridSpec(LINEAR), k=5, seed=6)
        gauss = grid_search(ds, GridSpec(GAUSSIAN, c_values=c_values,
                                         sigma_values=(0.25, 0.5, 1.0), tau_values=(0.5,)),
                            k=5, seed=6)
    assert len(linear) == 33
    assert gauss[0].mean_accuracy >= linear[0].mean_accuracy + 0.05


# 7 -----------------------------------------------------------------------------

@pytest.mark.criterion(7, "noisy crossplanes: mean accuracy at tau 0.5 >= at tau 1")
def test_tau_direction():
    with Budget(120):
        table = run_tau_sweep(BenchSpec.default("tau-sweep"))
    by_tau = {row["tau"]: row for row in table.rows}
    assert by_tau[0.5]["seeds"] == 20 and by_tau[1.0]["seeds"] == 20
    assert by_tau[0.5]["mean_accuracy"] >= by_tau[1.0]["mean_accuracy"]


# 8 -----------------------------------------------------------------------------

@pytest.mark.criterion(8, "20% label noise: mean(tau 0.5) >= mean(tau 0) - 0.01")
def test_noise_resilience():
    with Budget(120):
        table = run_noise_resilience(BenchSpec.default("noise-resilience"))
    cells = {(row["noise_rate"], row["tau"]): row for row in table.rows}
    pin, hinge = cells[(0.2, 0.5)], cells[(0.2, 0.0)]
    assert pin["seeds"] == 20 and hinge["seeds"] == 20
    assert pin["mean_accuracy"] >= hinge["mean_accuracy"] - 0.01


# 9 -----------------------------------------------------------------------------

@pytest.mark.criterion(9, "model and dataset round trips are exact")
def test_round_trips(tmp_path):
    with Budget(5):
        ds = make_two_moons(20, 0.1, seed=9)
        model = train(ds, PinGtsvmParams(2.0, 0.5, 0.5, 0.8, KernelSpec(GAUSSIAN, 0.7)))
        save_model(model, tmp_path / "m.txt")
        loaded = load_model(tmp_path / "m.txt")
        probes = np.random.default_rng(9).normal(size=(100, 2))
        for a, b in zip(model.decision_values(probes), loaded.decision_values(probes)):
            assert np.array_equal(a, b)
        save_csv(ds, tmp_path / "d.csv")
        assert load_csv(tmp_path / "d.csv") == ds


# 10 ----------------------------------------------------------------------------

def _run_cli(capsys, argv):
    assert main(argv) == 0
    return capsys.readouterr().out


@pytest.mark.criterion(10, "grid search and bench output are byte-identical on rerun")
def test_determinism(tmp_path, capsys):
    data = tmp_path / "moons.csv"
    with Budget(120):
        _run_cli(capsys, ["synth", "moons", "--n", "30", "--out", str(data)])
        argv = ["--format", "csv", "gridsearch", "--train", str(data), "--kernel", "gaussian",
                "--c-values", "0.5,2", "--sigma-values", "0.5,1"]
        assert _run_cli(capsys, argv) == _run_cli(capsys, argv)
        for scenario in ("tau-sweep", "kernel-compare", "noise-resilience"):
            argv = ["--format", "jsonl", "bench", "--scenario", scenario, "--seeds", "3,4"]
            first = _run_cli(capsys, argv)
            assert first and first == _run_cli(capsys, argv)


# 11 ----------------------------------------------------------------------------

@pytest.mark.criterion(11, "metrics of the (3, 1, 2, 4) confusion are exact rationals")
def test_metrics_exact():
    with Budget(1):
        rep = report(ConfusionMatrix(tp=3, fp=1, tn=4, fn=2))
        assert rep.precision == Fraction(3, 4)
        assert rep.recall == Fraction(3, 5)
        assert rep.f1 == Fraction(2, 3)
        assert rep.specificity == Fraction(4, 5)
        assert rep.accuracy == Fraction(7, 10)


# 12 ----------------------------------------------------------------------------

@pytest.mark.criterion(12, "default grids hold 33 and 693 tuples; full Gaussian sweep runs")
def test_grid_shape():
    with Budget(1):
        assert len(GridSpec(LINEAR).params()) == 33
        assert len(GridSpec(GAUSSIAN).params()) == 693
        cs = sorted({p.c1 for p in GridSpec(GAUSSIAN).params()})
        assert cs == [2.0 ** k for k in range(-5, 6)]
        widths = sorted({p.kernel.sigma for p in GridSpec(GAUSSIAN).params()})
        assert widths == [2.0 ** k for k in range(-10, 11)]
        assert sorted({p.tau1 for p in GridSpec(LINEAR).params()}) == [0.5, 0.8, 1.0]
    ds = make_blobs(20, 2, 4.0, 1.0, seed=12)
    with Budget(600):
        results = grid_search(ds, GridSpec(GAUSSIAN), k=5, seed=12)
    assert len(results) == 693
    assert sorted(r.grid_index for r in results) == list(range(693))
    assert all(r.status != "failed" for r in results)
