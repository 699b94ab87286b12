from __future__ import annotations

import numpy as np
import pytest

from pingtsvm import qpsolver
from pingtsvm.dataset import DatasetError, FeatureDataset, kfold_indices, make_blobs, make_two_moons
from pingtsvm.kernel import GAUSSIAN, LINEAR, KernelSpec
from pingtsvm.model import PinGtsvmParams, train
from pingtsvm.modelselect import (DEGENERATE, FAILED, OK, CvResult, GridSpec, cross_validate,
                                  grid_search, ranking_key)
from pingtsvm.qpsolver import QpSettings


@pytest.fixture(scope="module")
def moons():
    return make_two_moons(20, 0.15, seed=3)


def test_grid_defaults():
    lin = GridSpec(LINEAR).params()
    assert len(lin) == 33
    assert len(GridSpec(GAUSSIAN).params()) == 693
    assert all(p.c1 == p.c2 and p.tau1 == p.tau2 for p in lin)
    assert lin[0].c1 == 2.0 ** -5 and lin[-1].c1 == 2.0 ** 5


def test_grid_untied():
    grid = GridSpec(LINEAR, c_values=(1, 2, 4), tau_values=(0.5, 0.8), tie_c=False, tie_tau=False)
    params = grid.params()
    assert len(params) == 9 * 4
    assert len({(p.c1, p.c2, p.tau1, p.tau2) for p in params}) == 36


def test_grid_inverse_width():
    grid = GridSpec(GAUSSIAN, sigma_values=(2.0,), width_convention="inverse")
    assert grid.params()[0].kernel.sigma == 0.5


@pytest.mark.parametrize("kwargs", [dict(c_values=()), dict(c_values=(0.0,)),
                                    dict(tau_values=(1.5,)), dict(kernel_kind="poly")])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_cv_separable_blobs():
    ds = make_blobs(50, 2, 6.0, 1.0, seed=5)
    cv = cross_validate(ds, PinGtsvmParams(1.0, 1.0, 0.5, 0.5, KernelSpec(LINEAR)), k=5, seed=5)
    assert cv.mean_accuracy == 1.0 and cv.std_accuracy == 0.0 and cv.status == OK


def test_cv_deterministic_and_consistent(moons):
    params = PinGtsvmParams(1.0, 1.0, 0.5, 0.5, KernelSpec(GAUSSIAN, 0.5))
    a = cross_validate(moons, params, k=4, seed=9)
    b = cross_validate(moons, params, k=4, seed=9)
    assert a == b
    assert len(a.fold_accuracies) == 4
    assert a.mean_accuracy == float(np.mean(a.fold_accuracies))
    assert a.std_accuracy == float(np.std(a.fold_accuracies))


def test_cv_matches_manual_folds(moons):
    params = PinGtsvmParams(2.0, 2.0, 0.8, 0.8, KernelSpec(GAUSSIAN, 1.0))
    cv = cross_validate(moons, params, k=5, seed=1)
    manual = []
    for train_idx, val_idx in kfold_indices(moons.n, 5, moons.labels, 1):
        model = train(moons.subset(train_idx), params)
        val = moons.subset(val_idx)
        manual.append(float(np.mean(model.predict(val.features) == val.labels)))
    assert np.allclose(cv.fold_accuracies, manual, atol=0.0)


def test_cv_too_many_folds():
    ds = make_blobs(3, 2, 4.0, 1.0, seed=0)
    with pytest.raises(DatasetError):
        cross_validate(ds, PinGtsvmParams(), k=4)


def test_cv_degenerate_scored_as_constant(moons):
    cv = cross_validate(moons, PinGtsvmParams(1.0, 1.0, 1.0, 1.0, KernelSpec(LINEAR)), k=5, seed=0)
    assert cv.status == DEGENERATE
    assert cv.mean_accuracy == 0.5


def test_cv_failure_is_flagged(moons, monkeypatch):
    original = qpsolver.solve_qp

    def starved(problem, settings=None):
        return original(problem, QpSettings(max_iter=1, tol_stat=1e-300))

    monkeypatch.setattr(qpsolver, "solve_qp", starved)
    cv = cross_validate(moons, PinGtsvmParams(1.0, 1.0, 0.5, 0.5, KernelSpec(GAUSSIAN, 0.3)), k=2, seed=0)
    assert cv.status == FAILED and cv.failed
    assert all(np.isnan(a) for a in cv.fold_accuracies) and cv.messages


def test_singleton_grid_equals_cross_validate(moons):
    params = PinGtsvmParams(0.5, 0.5, 0.8, 0.8, KernelSpec(GAUSSIAN, 0.25))
    grid = GridSpec(GAUSSIAN, c_values=(0.5,), sigma_values=(0.25,), tau_values=(0.8,))
    results = grid_search(moons, grid, k=5, seed=2)
    assert len(results) == 1
    assert results[0] == cross_validate(moons, params, k=5, seed=2)


def test_grid_ranking_and_rerun(moons):
    grid = GridSpec(GAUSSIAN, c_values=(0.25, 1.0, 4.0), sigma_values=(0.25, 1.0, 4.0),
                    tau_values=(0.5, 1.0))
    results = grid_search(moons, grid, k=3, seed=4)
    assert len(results) == 18
    assert sorted(r.grid_index for r in results) == list(range(18))
    keys = [ranking_key(r) for r in results]
    assert keys == sorted(keys)
    assert results == grid_search(moons, grid, k=3, seed=4)


def test_grid_parallel_matches_serial(moons):
    grid = GridSpec(GAUSSIAN, c_values=(0.5, 2.0), sigma_values=(0.5, 1.0), tau_values=(0.5,))
    assert grid_search(moons, grid, k=3, seed=1, n_jobs=2) == grid_search(moons, grid, k=3, seed=1)


def _result(mean, c=1.0, sigma=1.0, index=0, status=OK):
    params = PinGtsvmParams(c, c, 0.5, 0.5, KernelSpec(GAUSSIAN, sigma))
    return CvResult(params, (mean,), mean, 0.0, status, index)


def test_ranking_tie_breaks():
    rows = [_result(0.9, c=2.0, index=0), _result(0.9, c=1.0, sigma=2.0, index=1),
            _result(0.9, c=1.0, sigma=0.5, index=2), _result(0.95, c=8.0, index=3),
            _result(float("nan"), index=4, status=FAILED), _result(0.9, c=1.0, sigma=0.5, index=5)]
    order = [r.grid_index for r in sorted(rows, key=ranking_key)]
    assert order == [3, 2, 5, 1, 0, 4]


def test_training_folds_never_see_validation_rows(moons, monkeypatch):
    import pingtsvm.modelselect as ms

    folds = kfold_indices(moons.n, 4, moons.labels, 7)
    seen = []
    original = ms.fit_gram

    def spy(ds, params, K, *args, **kwargs):
        seen.append({tuple(row) for row in ds.features})
        return original(ds, params, K, *args, **kwargs)

    monkeypatch.setattr(ms, "fit_gram", spy)
    cross_validate(moons, PinGtsvmParams(kernel=KernelSpec(GAUSSIAN, 0.5)), k=4, seed=7)
    for rows, (_, val) in zip(seen, folds):
        assert not rows & {tuple(r) for r in moons.features[val]}


def test_grid_on_separable_blobs_reaches_one():
    ds = make_blobs(15, 2, 8.0, 1.0, seed=2)
    best = grid_search(ds, GridSpec(LINEAR, c_values=(0.5, 2.0)), k=3, seed=0)[0]
    assert best.mean_accuracy == 1.0


def test_one_point_per_class_is_rejected():
    ds = FeatureDataset([[0.0], [1.0]], [1, -1])
    with pytest.raises(DatasetError):
        grid_search(ds, GridSpec(LINEAR), k=2)
