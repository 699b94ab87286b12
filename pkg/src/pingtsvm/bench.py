"""
Seeded desk-scale experiments: tau sensitivity, linear vs Gaussian kernel,
and label-noise resilience.

Each scenario is a pure function of its :class:`BenchSpec`. Per-seed cells
are independent and may run in worker processes; results are aggregated by
cell index, so the tables never depend on scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import (GENERATORS, LABEL_FLIP, FeatureDataset, NoiseSpec, inject_label_noise,
                      load_csv, stratified_split)
from .kernel import GAUSSIAN, LINEAR
from .modelselect import (DEGENERATE, FAILED, GridSpec, KernelCache, evaluate_split,
                          grid_search)
from .model import PinGtsvmParams
from .qpsolver import QpSettings

TAU_SWEEP = "tau-sweep"
KERNEL_COMPARE = "kernel-compare"
NOISE_RESILIENCE = "noise-resilience"
SCENARIOS = (TAU_SWEEP, KERNEL_COMPARE, NOISE_RESILIENCE)

DEFAULT_SEEDS = tuple(range(20))

# small selection grids keep every scenario well under two minutes
BENCH_C_VALUES = (2.0 ** -3, 2.0 ** -1, 2.0, 2.0 ** 3)
BENCH_SIGMA_VALUES = (2.0 ** -3, 2.0 ** -2, 2.0 ** -1, 1.0, 2.0)

_DEFAULTS = {
    TAU_SWEEP: dict(
        generator="crossplanes", generator_params={"n_per_class": 50, "noise_sigma": 0.1},
        kernel=GAUSSIAN, tau_values=(0.0, 0.5, 0.8, 1.0), noise_rates=(0.1,)),
    KERNEL_COMPARE: dict(
        generator="moons", generator_params={"n_per_class": 50, "noise_sigma": 0.1},
        kernel=None, tau_values=(0.5,), noise_rates=(0.0,)),
    NOISE_RESILIENCE: dict(
        generator="crossplanes", generator_params={"n_per_class": 50, "noise_sigma": 0.1},
        kernel=GAUSSIAN, tau_values=(0.0, 0.5), noise_rates=(0.0, 0.05, 0.1, 0.2)),
}


class BenchError(ValueError):
    """Invalid scenario parameters."""


@dataclass(frozen=True)
class BenchSpec:
    """
    One scenario run.

    The dataset comes from ``generator`` called with ``generator_params`` and
    the cell seed, or from ``train_csv`` (split per seed) when given. Label
    noise touches the training split only; test labels stay clean.
    ``selection_seed`` fixes the data used by the prior grid search that
    picks (c, sigma) for every cell.
    """

    scenario: str
    generator: str = "crossplanes"
    generator_params: dict = field(default_factory=dict)
    train_csv: str | None = None
    seeds: tuple = DEFAULT_SEEDS
    kernel: str | None = GAUSSIAN
    tau_values: tuple = (0.0, 0.5, 0.8, 1.0)
    noise_rates: tuple = (0.0,)
    c_values: tuple = BENCH_C_VALUES
    sigma_values: tuple = BENCH_SIGMA_VALUES
    selection_taus: tuple = (0.5,)
    test_fraction: float = 0.3
    folds: int = 5
    selection_seed: int = 0
    n_jobs: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise BenchError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise BenchError("at least one seed is required")
        if min(seeds) < 0:
            raise BenchError("seeds must be non-negative")
        object.__setattr__(self, "seeds", seeds)
        if self.train_csv is None and self.generator not in GENERATORS:
            raise BenchError(f"unknown generator {self.generator!r}")
        if self.kernel not in (None, LINEAR, GAUSSIAN):
            raise BenchError(f"unknown kernel {self.kernel!r}")
        for name in ("tau_values", "noise_rates", "c_values", "sigma_values", "selection_taus"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise BenchError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        if any(not 0 <= t <= 1 for t in self.tau_values + self.selection_taus):
            raise BenchError("tau values must lie in [0, 1]")
        if any(not 0 <= r <= 1 for r in self.noise_rates):
            raise BenchError("noise rates must lie in [0, 1]")
        if min(self.c_values) <= 0 or min(self.sigma_values) <= 0:
            raise BenchError("c and sigma values must be positive")
        if not 0 < self.test_fraction < 1:
            raise BenchError("test_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise BenchError("folds must be at least 2")

    @classmethod
    def default(cls, scenario: str, **overrides) -> BenchSpec:
        if scenario not in SCENARIOS:
            raise BenchError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
        kw = dict(_DEFAULTS[scenario])
        kw.update(overrides)
        return cls(scenario=scenario, **kw)

    @property
    def dataset_name(self) -> str:
        return self.train_csv or self.generator


@dataclass(frozen=True)
class BenchTable:
    """Rows of plain values keyed by ``columns``; ``summary`` is an optional second table."""

    name: str
    columns: tuple
    rows: tuple
    summary_columns: tuple = ()
    summary: tuple = ()


# -- cells ---------------------------------------------------------------------

def _stream(seed: int, stream: int) -> int:
    # independent child seeds for data, split and noise
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def _dataset(spec: BenchSpec, seed: int) -> FeatureDataset:
    if spec.train_csv is not None:
        return load_csv(spec.train_csv)
    return GENERATORS[spec.generator](seed=_stream(seed, 0), **spec.generator_params)


def _split(spec: BenchSpec, seed: int, rate: float):
    """Clean test split and the (possibly noisy) training split for one seed."""
    train, test = stratified_split(_dataset(spec, seed), spec.test_fraction, _stream(seed, 1))
    if rate > 0:
        train = inject_label_noise(train, NoiseSpec(LABEL_FLIP, rate=rate, seed=_stream(seed, 2)))
    return train, test


def _test_accuracy(train: FeatureDataset, test: FeatureDataset, params: PinGtsvmParams,
                   qp_settings: QpSettings | None):
    joined = FeatureDataset(np.vstack([train.features, test.features]),
                            np.concatenate([train.labels, test.labels]))
    tr = np.arange(train.n)
    te = np.arange(train.n, joined.n)
    return evaluate_split(joined, tr, te, params, qp_settings, KernelCache(joined))


def _grid(spec: BenchSpec, kernel: str, taus) -> GridSpec:
    return GridSpec(kernel_kind=kernel, c_values=spec.c_values, sigma_values=spec.sigma_values,
                    tau_values=taus)


def select_params(spec: BenchSpec, kernel: str, seed: int, rate: float = 0.0,
                  qp_settings: QpSettings | None = None):
    """Best grid tuple by k-fold CV on the training split of ``seed``."""
    train, _ = _split(spec, seed, rate)
    results = grid_search(train, _grid(spec, kernel, spec.selection_taus), spec.folds,
                          _stream(seed, 3), qp_settings)
    return results[0]


def _cell(args):
    spec, seed, rate, params, qp_settings = args
    train, test = _split(spec, seed, rate)
    return _test_accuracy(train, test, params, qp_settings)


def _run_cells(spec: BenchSpec, cells, qp_settings):
    jobs = [(spec, seed, rate, params, qp_settings) for seed, rate, params in cells]
    if spec.n_jobs == 1:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=spec.n_jobs or None) as pool:
        return list(pool.map(_cell, jobs))


def _aggregate(outcomes):
    """(mean, std, n_ok, n_degenerate, n_failed) over one cell's seeds; failures are skipped."""
    accs = np.array([a for a, status, _ in outcomes if status != FAILED])
    n_deg = sum(status == DEGENERATE for _, status, _ in outcomes)
    n_fail = sum(status == FAILED for _, status, _ in outcomes)
    if accs.size == 0:
        return math.nan, math.nan, 0, n_deg, n_fail
    return float(np.mean(accs)), float(np.std(accs)), int(accs.size), n_deg, n_fail


def _width(params: PinGtsvmParams):
    return params.kernel.sigma if params.kernel.kind == GAUSSIAN else None


# -- scenarios -----------------------------------------------------------------

def run_tau_sweep(spec: BenchSpec, qp_settings: QpSettings | None = None) -> BenchTable:
    """
    Test accuracy at each tau with (c, sigma) fixed by a prior grid search.

    One row per (noise rate, tau). Degenerate models are scored as the
    constant +1 predictor and counted in ``degenerate``.
    """
    kernel = spec.kernel or GAUSSIAN
    rows = []
    for rate in spec.noise_rates:
        best = select_params(spec, kernel, spec.selection_seed, rate, qp_settings).params
        cells = [(seed, rate, replace(best, tau1=tau, tau2=tau))
                 for tau in spec.tau_values for seed in spec.seeds]
        outcomes = _run_cells(spec, cells, qp_settings)
        per_tau = len(spec.seeds)
        for i, tau in enumerate(spec.tau_values):
            mean, std, n_ok, n_deg, n_fail = _aggregate(outcomes[i * per_tau:(i + 1) * per_tau])
            rows.append({"dataset": spec.dataset_name, "noise_rate": rate, "tau": tau,
                         "kernel": kernel, "c": best.c1, "sigma": _width(best),
                         "mean_accuracy": mean, "std_accuracy": std, "seeds": n_ok,
                         "degenerate": n_deg, "failed": n_fail})
    columns = ("dataset", "noise_rate", "tau", "kernel", "c", "sigma", "mean_accuracy",
               "std_accuracy", "seeds", "degenerate", "failed")
    return BenchTable(TAU_SWEEP, columns, tuple(rows))


def run_kernel_compare(spec: BenchSpec, qp_settings: QpSettings | None = None) -> BenchTable:
    """
    Grid-search each kernel per seed, then score the winner on the held-out split.

    ``spec.kernel`` restricts the comparison to one kernel; ``None``
    compares both.
    """
    kernels = (LINEAR, GAUSSIAN) if spec.kernel is None else (spec.kernel,)
    rate = spec.noise_rates[0]
    rows = []
    for kernel in kernels:
        cv, test, statuses = [], [], []
        for seed in spec.seeds:
            best = select_params(spec, kernel, seed, rate, qp_settings)
            train, held_out = _split(spec, seed, rate)
            acc, status, _ = _test_accuracy(train, held_out, best.params, qp_settings)
            cv.append(best.mean_accuracy)
            test.append(acc)
            statuses.append(status)
        ok = np.array([a for a, s in zip(test, statuses) if s != FAILED])
        rows.append({"dataset": spec.dataset_name, "kernel": kernel,
                     "best_cv_accuracy": float(np.mean(cv)),
                     "test_accuracy": float(np.mean(ok)) if ok.size else math.nan,
                     "std_test_accuracy": float(np.std(ok)) if ok.size else math.nan,
                     "seeds": int(ok.size), "failed": statuses.count(FAILED)})
    columns = ("dataset", "kernel", "best_cv_accuracy", "test_accuracy", "std_test_accuracy",
               "seeds", "failed")
    return BenchTable(KERNEL_COMPARE, columns, tuple(rows))


def run_noise_resilience(spec: BenchSpec, qp_settings: QpSettings | None = None) -> BenchTable:
    """
    Label-noise sweep comparing tau values on identical seeds.

    Each tau gets its own (c, sigma) from a grid search on clean training
    data, so every loss is compared at its tuned setting; the same tuned
    parameters are then used at every noise rate. The summary pairs the last
    tau against the first per seed: mean paired difference and counts of
    seeds where it wins, ties or loses.
    """
    kernel = spec.kernel or GAUSSIAN
    tuned = {tau: select_params(replace(spec, selection_taus=(tau,)), kernel,
                                spec.selection_seed, 0.0, qp_settings).params
             for tau in spec.tau_values}
    cells = [(seed, rate, tuned[tau])
             for rate in spec.noise_rates for tau in spec.tau_values for seed in spec.seeds]
    outcomes = _run_cells(spec, cells, qp_settings)
    ns, nt = len(spec.seeds), len(spec.tau_values)
    rows, summary = [], []
    for r, rate in enumerate(spec.noise_rates):
        accs = {}
        for t, tau in enumerate(spec.tau_values):
            block = outcomes[(r * nt + t) * ns:(r * nt + t + 1) * ns]
            accs[tau] = np.array([a for a, _, _ in block])
            mean, std, n_ok, n_deg, n_fail = _aggregate(block)
            rows.append({"noise_rate": rate, "tau": tau, "kernel": kernel, "c": tuned[tau].c1,
                         "sigma": _width(tuned[tau]), "mean_accuracy": mean, "std_accuracy": std,
                         "seeds": n_ok, "degenerate": n_deg, "failed": n_fail})
        base, other = spec.tau_values[0], spec.tau_values[-1]
        diff = accs[other] - accs[base]
        diff = diff[~np.isnan(diff)]
        summary.append({"noise_rate": rate, "tau_a": other, "tau_b": base,
                        "mean_difference": float(np.mean(diff)) if diff.size else math.nan,
                        "wins": int(np.sum(diff > 0)), "ties": int(np.sum(diff == 0)),
                        "losses": int(np.sum(diff < 0))})
    columns = ("noise_rate", "tau", "kernel", "c", "sigma", "mean_accuracy", "std_accuracy",
               "seeds", "degenerate", "failed")
    summary_columns = ("noise_rate", "tau_a", "tau_b", "mean_difference", "wins", "ties", "losses")
    return BenchTable(NOISE_RESILIENCE, columns, tuple(rows), summary_columns, tuple(summary))


RUNNERS = {
    TAU_SWEEP: run_tau_sweep,
    KERNEL_COMPARE: run_kernel_compare,
    NOISE_RESILIENCE: run_noise_resilience,
}


def run(spec: BenchSpec, qp_settings: QpSettings | None = None) -> BenchTable:
    return RUNNERS[spec.scenario](spec, qp_settings)

