"""
Labeled feature datasets: CSV I/O, synthetic generators, splitting, noise.

Feature CSV layout: UTF-8, comma separated, no quoting. Lines starting with
``#`` are comments. Each data row holds ``d`` floats followed by one label
token; tokens are mapped to +1/-1 through a label map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

DEFAULT_LABEL_MAP = {"busy": 1, "1": 1, "+1": 1, "free": -1, "-1": -1}
DEFAULT_TOKENS = {1: "busy", -1: "free"}

SCALE_FLOOR = 1e-12


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels).reshape(-1)
        if X.ndim != 2:
            raise DatasetError(f"features must be a 2-D matrix, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise DatasetError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if y.size != n:
            raise DatasetError(f"{y.size} labels for {n} rows")
        if not np.all(np.isin(y, (-1, 1))):
            raise DatasetError("labels must be +1 or -1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def A(self) -> np.ndarray:
        """Rows of class +1."""
        return self.features[self.labels == 1]

    @property
    def B(self) -> np.ndarray:
        """Rows of class -1."""
        return self.features[self.labels == -1]

    def subset(self, idx) -> "FeatureDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureDataset(self.features[idx], self.labels[idx])

    def with_labels(self, labels) -> "FeatureDataset":
        return FeatureDataset(self.features, labels)

    def with_features(self, features) -> "FeatureDataset":
        return FeatureDataset(features, self.labels)

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


# -- CSV -------------------------------------------------------------------

def _data_lines(path):
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"{path}: no such file") from None
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read: {exc.strerror}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split(",")


def scan_label_tokens(path) -> list[str]:
    """Distinct label tokens in file order."""
    seen = []
    for _, fields in _data_lines(path):
        tok = fields[-1].strip()
        if tok not in seen:
            seen.append(tok)
    return seen


def parse_float(text: str, lineno: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"line {lineno}, field {col}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DatasetError(f"line {lineno}, field {col}: non-finite value {text!r}")
    return value


def load_csv(path, label_map: dict[str, int] | None = None) -> FeatureDataset:
    """
    Read a feature CSV.

    Raises
    ------
    DatasetError
        Missing file, ragged rows, unknown label token or non-numeric
        feature field; messages carry the offending line number.
    """
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    rows, labels = [], []
    width = None
    for lineno, fields in _data_lines(path):
        if width is None:
            width = len(fields)
            if width < 2:
                raise DatasetError(f"line {lineno}: need at least one feature and a label")
        elif len(fields) != width:
            raise DatasetError(f"line {lineno}: expected {width} fields, found {len(fields)}")
        tok = fields[-1].strip()
        if tok not in label_map:
            raise DatasetError(f"line {lineno}: unknown label token {tok!r}")
        rows.append([parse_float(f, lineno, j + 1) for j, f in enumerate(fields[:-1])])
        labels.append(label_map[tok])
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return FeatureDataset(np.array(rows), np.array(labels))


def load_features(path, d: int) -> tuple[np.ndarray, list[str | None]]:
    """
    Read rows for prediction: either ``d`` features, or ``d`` features plus a
    label token. Returns the matrix and the per-row tokens (``None`` when absent).
    """
    rows, tokens = [], []
    for lineno, fields in _data_lines(path):
        if len(fields) == d + 1:
            tokens.append(fields[-1].strip())
            fields = fields[:-1]
        elif len(fields) == d:
            tokens.append(None)
        else:
            raise DatasetError(f"line {lineno}: expected {d} or {d + 1} fields, found {len(fields)}")
        rows.append([parse_float(f, lineno, j + 1) for j, f in enumerate(fields)])
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return np.array(rows), tokens


def save_csv(ds: FeatureDataset, path, label_tokens: dict[int, str] | None = None) -> None:
    tokens = DEFAULT_TOKENS if label_tokens is None else label_tokens
    if ds.d < 1:
        raise DatasetError("cannot write a dataset with no features")
    # repr() is the shortest decimal string that round-trips exactly
    lines = [",".join(repr(float(v)) for v in row) + "," + tokens[int(lab)]
             for row, lab in zip(ds.features, ds.labels)]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"{path}: cannot write: {exc.strerror}") from exc


# -- splitting ---------------------------------------------------------------

def _exact(x: float) -> Fraction:
    # the decimal the caller wrote, so 0.3 * 5 rounds as 1.5 does
    return Fraction(repr(float(x)))


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def stratified_split_indices(labels, test_fraction: float, seed: int):
    labels = np.asarray(labels)
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (1, -1):
        idx = np.flatnonzero(labels == cls)
        n_test = round_half_up(_exact(test_fraction) * idx.size)
        if n_test < 1 or n_test >= idx.size:
            raise DatasetError(
                f"class {cls:+d} with {idx.size} members cannot be split at fraction {test_fraction}")
        perm = rng.permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(ds: FeatureDataset, test_fraction: float, seed: int):
    """Return ``(train, test)``; per-class test counts are round-half-up of count * fraction."""
    tr, te = stratified_split_indices(ds.labels, test_fraction, seed)
    return ds.subset(tr), ds.subset(te)


def kfold_indices(n: int, k: int, labels, seed: int):
    """
    Stratified k-fold partition.

    Each class is shuffled and the concatenated class lists are dealt to
    folds round-robin, so fold sizes differ by at most one overall and per
    class. Returns a list of ``(train_idx, val_idx)`` pairs, both sorted.
    """
    labels = np.asarray(labels)
    if labels.size != n:
        raise DatasetError(f"{labels.size} labels for n={n}")
    if k < 2:
        raise DatasetError(f"need k >= 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    order = []
    for cls in (1, -1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise DatasetError(f"class {cls:+d} has {idx.size} members, fewer than k={k}")
        order.append(rng.permutation(idx))
    order = np.concatenate(order)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, val))
    return folds


# -- generators ----------------------------------------------------------------

def _check_count(n_per_class):
    if n_per_class < 1:
        raise DatasetError(f"n_per_class must be >= 1, got {n_per_class}")


def _check_sigma(sigma, name="sigma"):
    if not (math.isfinite(sigma) and sigma >= 0):
        raise DatasetError(f"{name} must be finite and >= 0, got {sigma}")


def _stack(pos, neg):
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos), dtype=np.int64), -np.ones(len(neg), dtype=np.int64)])
    return FeatureDataset(X, y)


def make_blobs(n_per_class: int, d: int, separation: float, sigma: float, seed: int) -> FeatureDataset:
    """Two isotropic Gaussian blobs centred at (+-separation/2, 0, ..., 0)."""
    _check_count(n_per_class)
    _check_sigma(sigma)
    if d < 1:
        raise DatasetError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    centre = np.zeros(d)
    centre[0] = separation / 2.0
    pos = centre + sigma * rng.standard_normal((n_per_class, d))
    neg = -centre + sigma * rng.standard_normal((n_per_class, d))
    return _stack(pos, neg)


def make_crossplanes(n_per_class: int, noise_sigma: float, seed: int) -> FeatureDataset:
    """Class +1 along y = x, class -1 along y = -x, x uniform on [-1, 1]."""
    _check_count(n_per_class)
    _check_sigma(noise_sigma, "noise_sigma")
    rng = np.random.default_rng(seed)
    t_pos = rng.uniform(-1.0, 1.0, n_per_class)
    t_neg = rng.uniform(-1.0, 1.0, n_per_class)
    pos = np.column_stack([t_pos, t_pos])
    neg = np.column_stack([t_neg, -t_neg])
    pos = pos + noise_sigma * rng.standard_normal(pos.shape)
    neg = neg + noise_sigma * rng.standard_normal(neg.shape)
    return _stack(pos, neg)


def make_two_moons(n_per_class: int, noise_sigma: float, seed: int) -> FeatureDataset:
    """
    Interleaved half circles. Class +1 is the upper unit half circle centred
    at the origin, class -1 the lower one centred at (1, 0.5).
    """
    _check_count(n_per_class)
    _check_sigma(noise_sigma, "noise_sigma")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, np.pi, n_per_class)
    pos = np.column_stack([np.cos(t), np.sin(t)])
    neg = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    pos = pos + noise_sigma * rng.standard_normal(pos.shape)
    neg = neg + noise_sigma * rng.standard_normal(neg.shape)
    return _stack(pos, neg)


GENERATORS = {
    "blobs": make_blobs,
    "crossplanes": make_crossplanes,
    "moons": make_two_moons,
}


# -- noise ---------------------------------------------------------------------

LABEL_FLIP = "label-flip"
FEATURE_GAUSSIAN = "feature-gaussian"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float = 0.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (LABEL_FLIP, FEATURE_GAUSSIAN):
            raise DatasetError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise DatasetError(f"rate must lie in [0, 1], got {self.rate}")
        _check_sigma(self.sigma)
        if self.seed < 0:
            raise DatasetError("seed must be non-negative")


def inject_label_noise(ds: FeatureDataset, spec: NoiseSpec) -> FeatureDataset:
    """Flip exactly floor(rate * n) labels picked by a seeded shuffle."""
    if spec.kind != LABEL_FLIP:
        raise DatasetError(f"expected {LABEL_FLIP} noise, got {spec.kind}")
    n_flip = math.floor(_exact(spec.rate) * ds.n)
    rng = np.random.default_rng(spec.seed)
    flip = rng.permutation(ds.n)[:n_flip]
    labels = ds.labels.copy()
    labels[flip] = -labels[flip]
    return ds.with_labels(labels)


def inject_feature_noise(ds: FeatureDataset, spec: NoiseSpec) -> FeatureDataset:
    if spec.kind != FEATURE_GAUSSIAN:
        raise DatasetError(f"expected {FEATURE_GAUSSIAN} noise, got {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(ds.features.shape)
    return ds.with_features(ds.features + spec.sigma * noise)


# -- standardization -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.size:
            raise DatasetError(f"dimension mismatch: {X.shape[-1]} vs {self.mean.size}")
        return (X - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def fit_standardizer(ds: FeatureDataset) -> Standardizer:
    X = ds.features
    mean = X.mean(axis=0)
    # a computed mean can miss a constant column's value by an ulp
    constant = np.ptp(X, axis=0) == 0
    mean[constant] = X[0, constant]
    scale = np.maximum(X.std(axis=0), SCALE_FLOOR)
    return Standardizer(mean, scale)


def apply_standardizer(std: Standardizer, ds: FeatureDataset) -> FeatureDataset:
    return ds.with_features(std.transform(ds.features))
