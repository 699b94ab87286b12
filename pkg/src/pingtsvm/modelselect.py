"""Grid search over (c1, c2, kernel width, tau) scored by stratified k-fold CV."""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureDataset, kfold_indices
from .kernel import GAUSSIAN, LINEAR, KernelSpec, gram, gram_from_sqdist, sqdist
from .model import DegenerateModelError, PinGtsvmParams, TrainingError, fit_gram
from .qpsolver import QpSettings

DEFAULT_C_VALUES = tuple(2.0 ** k for k in range(-5, 6))
DEFAULT_SIGMA_VALUES = tuple(2.0 ** k for k in range(-10, 11))
DEFAULT_TAU_VALUES = (0.5, 0.8, 1.0)

OK = "ok"
DEGENERATE = "degenerate"
FAILED = "failed"


@dataclass(frozen=True)
class GridSpec:
    kernel_kind: str = LINEAR
    c_values: tuple = DEFAULT_C_VALUES
    sigma_values: tuple = DEFAULT_SIGMA_VALUES
    tau_values: tuple = DEFAULT_TAU_VALUES
    tie_c: bool = True
    tie_tau: bool = True
    width_convention: str = "sigma"
    ridge: float = 1e-8

    def __post_init__(self):
        if self.kernel_kind not in (LINEAR, GAUSSIAN):
            raise ValueError(f"unknown kernel kind {self.kernel_kind!r}")
        for name in ("c_values", "sigma_values", "tau_values"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        if min(self.c_values) <= 0 or min(self.sigma_values) <= 0:
            raise ValueError("c and width values must be positive")
        if min(self.tau_values) < 0 or max(self.tau_values) > 1:
            raise ValueError("tau values must lie in [0, 1]")

    def kernels(self):
        if self.kernel_kind == LINEAR:
            return [KernelSpec(LINEAR)]
        return [KernelSpec.from_width(GAUSSIAN, mu, self.width_convention) for mu in self.sigma_values]

    def params(self) -> list[PinGtsvmParams]:
        """Every parameter tuple in grid order: width outermost, then (c1, c2), then (tau1, tau2)."""
        cs = ([(c, c) for c in self.c_values] if self.tie_c
              else list(itertools.product(self.c_values, repeat=2)))
        taus = ([(t, t) for t in self.tau_values] if self.tie_tau
                else list(itertools.product(self.tau_values, repeat=2)))
        return [PinGtsvmParams(c1, c2, t1, t2, k, self.ridge)
                for k, (c1, c2), (t1, t2) in itertools.product(self.kernels(), cs, taus)]


@dataclass(frozen=True)
class CvResult:
    params: PinGtsvmParams
    fold_accuracies: tuple
    mean_accuracy: float
    std_accuracy: float
    status: str = OK
    grid_index: int = 0
    messages: tuple = ()
    wall_time: float = field(default=0.0, compare=False)

    @property
    def failed(self) -> bool:
        return self.status == FAILED


def ranking_key(r: CvResult):
    width = r.params.kernel.sigma if r.params.kernel.kind == GAUSSIAN else 0.0
    mean = r.mean_accuracy if r.status != FAILED else -1.0
    return (r.status == FAILED, -mean, r.params.c1 + r.params.c2, width, r.grid_index)


class KernelCache:
    """Full-dataset kernel matrices, so every fold and width reuses one distance matrix."""

    def __init__(self, ds: FeatureDataset):
        self.ds = ds
        self._sq = None
        self._linear = None
        self._gauss = {}

    def full(self, spec: KernelSpec) -> np.ndarray:
        if spec.kind == LINEAR:
            if self._linear is None:
                self._linear = gram(self.ds.features, self.ds.features, spec)
            return self._linear
        if spec.sigma not in self._gauss:
            if self._sq is None:
                self._sq = sqdist(self.ds.features, self.ds.features)
            self._gauss = {spec.sigma: gram_from_sqdist(self._sq, spec.sigma)}
        return self._gauss[spec.sigma]


def support_order(labels, idx) -> np.ndarray:
    """Indices of ``idx`` reordered class +1 first, matching the model's support matrix."""
    idx = np.asarray(idx)
    lab = np.asarray(labels)[idx]
    return np.concatenate([idx[lab == 1], idx[lab == -1]])


def evaluate_split(ds: FeatureDataset, train_idx, test_idx, params: PinGtsvmParams,
                   qp_settings: QpSettings | None = None, cache: KernelCache | None = None,
                   test_labels=None):
    """
    Train on ``train_idx`` and score on ``test_idx``.

    Returns ``(accuracy, status, message)``. A degenerate model (both
    surfaces zero) predicts +1 everywhere under the tie rule and is scored
    that way with status ``degenerate``; a QP failure gives ``nan`` and
    status ``failed``.
    """
    cache = cache or KernelCache(ds)
    K = cache.full(params.kernel)
    d_idx = support_order(ds.labels, train_idx)
    test_idx = np.asarray(test_idx)
    y_test = ds.labels[test_idx] if test_labels is None else np.asarray(test_labels)
    try:
        model = fit_gram(ds.subset(d_idx), params, K[np.ix_(d_idx, d_idx)], qp_settings)
    except DegenerateModelError as exc:
        return float(np.mean(y_test == 1)), DEGENERATE, str(exc)
    except TrainingError as exc:
        return float("nan"), FAILED, str(exc)
    pred = model.predict(None, kernel_rows=K[np.ix_(test_idx, d_idx)])
    return float(np.mean(pred == y_test)), OK, ""


def _summarize(params, accs, statuses, messages, grid_index, wall):
    accs = tuple(float(a) for a in accs)
    good = np.array([a for a in accs if not np.isnan(a)])
    if FAILED in statuses:
        status = FAILED
    elif DEGENERATE in statuses:
        status = DEGENERATE
    else:
        status = OK
    mean = float(np.mean(good)) if good.size else float("nan")
    std = float(np.std(good)) if good.size else float("nan")
    return CvResult(params, accs, mean, std, status, grid_index,
                    tuple(m for m in messages if m), wall)


def _cv_one(ds, folds, params, qp_settings, cache, grid_index=0):
    start = time.perf_counter()
    accs, statuses, messages = [], [], []
    for train_idx, val_idx in folds:
        acc, status, msg = evaluate_split(ds, train_idx, val_idx, params, qp_settings, cache)
        accs.append(acc)
        statuses.append(status)
        messages.append(msg)
    return _summarize(params, accs, statuses, messages, grid_index, time.perf_counter() - start)


def cross_validate(ds: FeatureDataset, params: PinGtsvmParams, k: int = 5, seed: int = 0,
                   qp_settings: QpSettings | None = None) -> CvResult:
    """k-fold CV accuracy of one parameter tuple; std is the population std."""
    folds = kfold_indices(ds.n, k, ds.labels, seed)
    return _cv_one(ds, folds, params, qp_settings, KernelCache(ds))


_worker = {}


def _init_worker(ds, folds, qp_settings):
    _worker.update(ds=ds, folds=folds, settings=qp_settings, cache=KernelCache(ds))


def _run_indexed(item):
    i, params = item
    w = _worker
    return _cv_one(w["ds"], w["folds"], params, w["settings"], w["cache"], i)


def grid_search(ds: FeatureDataset, grid: GridSpec, k: int = 5, seed: int = 0,
                qp_settings: QpSettings | None = None, n_jobs: int = 1) -> list[CvResult]:
    """
    Cross-validate every tuple of ``grid`` on shared folds and rank them.

    Ranking: mean accuracy descending, then smaller c1 + c2, smaller width,
    earlier grid position; failed tuples go last. The order never depends
    on ``n_jobs``.
    """
    folds = kfold_indices(ds.n, k, ds.labels, seed)
    items = list(enumerate(grid.params()))
    if n_jobs == 1:
        cache = KernelCache(ds)
        results = [_cv_one(ds, folds, p, qp_settings, cache, i) for i, p in items]
    else:
        # tuples sharing a width are kept together so each worker reuses its kernel matrix
        with ProcessPoolExecutor(max_workers=n_jobs or None, initializer=_init_worker,
                                 initargs=(ds, folds, qp_settings)) as pool:
            results = list(pool.map(_run_indexed, items, chunksize=max(1, len(items) // (4 * (n_jobs or 4)))))
    results.sort(key=lambda r: r.grid_index)
    return sorted(results, key=ranking_key)
