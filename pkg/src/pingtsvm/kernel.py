"""Linear and Gaussian kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
GAUSSIAN = "gaussian"
KINDS = (LINEAR, GAUSSIAN)

# How a grid width parameter mu maps onto sigma in exp(-||x-y||^2 / (2 sigma^2)).
#   "sigma":   mu is sigma itself (default)
#   "inverse": mu = 1 / (2 sigma^2), i.e. K = exp(-mu ||x-y||^2)
WIDTH_CONVENTIONS = ("sigma", "inverse")

# rows of the left operand processed per block, bounds the temporary n1*n2*d array
_BLOCK_ELEMS = 1 << 22


@dataclass(frozen=True)
class KernelSpec:
    kind: str = LINEAR
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == GAUSSIAN and not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"gaussian sigma must be finite and > 0, got {self.sigma}")

    @classmethod
    def from_width(cls, kind: str, mu: float, convention: str = "sigma") -> "KernelSpec":
        """Build a spec from a grid width parameter under the given convention."""
        if convention not in WIDTH_CONVENTIONS:
            raise ValueError(f"unknown width convention {convention!r}")
        if kind == LINEAR:
            return cls(LINEAR)
        if not mu > 0:
            raise ValueError(f"width parameter must be > 0, got {mu}")
        sigma = mu if convention == "sigma" else math.sqrt(1.0 / (2.0 * mu))
        return cls(GAUSSIAN, sigma)


def kernel_value(x, y, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    if spec.kind == LINEAR:
        return float(np.sum(x * y))
    diff = x - y
    return math.exp(-float(np.sum(diff * diff)) / (2.0 * spec.sigma ** 2))


def _pairwise(X, Y, op):
    n1 = X.shape[0]
    out = np.empty((n1, Y.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, Y.shape[0] * X.shape[1]))
    for start in range(0, n1, step):
        out[start:start + step] = op(X[start:start + step, None, :], Y[None, :, :])
    return out


def sqdist(X, Y) -> np.ndarray:
    """Squared Euclidean distances; entry (i, j) depends only on rows X_i and Y_j."""
    X, Y = _check_pair(X, Y)

    def op(a, b):
        diff = a - b
        return np.sum(diff * diff, axis=-1)

    return _pairwise(X, Y, op)


def gram_from_sqdist(sq: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-sq / (2.0 * sigma ** 2))


def gram(X, Y, spec: KernelSpec) -> np.ndarray:
    """
    Kernel matrix with entry (i, j) = k(X_i, Y_j).

    Each entry is computed from its two rows alone, so ``gram(X, Y).T`` equals
    ``gram(Y, X)`` bit for bit and sub-blocks of a Gram matrix equal the Gram
    matrix of the corresponding sub-blocks.
    """
    X, Y = _check_pair(X, Y)
    if spec.kind == LINEAR:
        return _pairwise(X, Y, lambda a, b: np.sum(a * b, axis=-1))
    return gram_from_sqdist(sqdist(X, Y), spec.sigma)


def _check_pair(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y
