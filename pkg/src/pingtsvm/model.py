"""
Twin support vector machine with pinball loss.

Two kernel surfaces ``f_k(x) = K(x, D) u_k + b_k`` are trained, one per
class, with ``D`` the training rows of class +1 stacked over those of class
-1. Surface 1 stays close to class +1 while the pinball loss of the residual
``r = 1 + f_1(x)`` over class -1 rows is penalized; surface 2 mirrors this
with ``r = 1 - f_2(x)`` over class +1 rows. Each problem is a convex QP in
``(u, b, xi)`` where ``xi`` is the epigraph variable of the loss. A point is
assigned to the class whose surface is nearer in the kernel metric.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, qpsolver
from .dataset import DatasetError, FeatureDataset, Standardizer
from .kernel import KernelSpec, gram
from .qpsolver import QpProblem, QpSettings

SURFACE1 = "surface1"
SURFACE2 = "surface2"
NORM_EPS = 1e-12
FORMAT_VERSION = "pingtsvm/1"


class TrainingError(RuntimeError):
    """A surface QP could not be solved to certified optimality."""

    def __init__(self, message, surface=None, solution=None):
        super().__init__(message)
        self.surface = surface
        self.solution = solution


class DegenerateModelError(TrainingError):
    """Both trained surfaces are numerically zero, so no decision can be made."""


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PinGtsvmParams:
    c1: float = 1.0
    c2: float = 1.0
    tau1: float = 0.5
    tau2: float = 0.5
    kernel: KernelSpec = field(default_factory=KernelSpec)
    # relative to the mean diagonal of the (u, b) Hessian block
    ridge: float = 1e-8

    def __post_init__(self):
        for name in ("c1", "c2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        for name in ("tau1", "tau2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not (math.isfinite(self.ridge) and self.ridge >= 0):
            raise ValueError(f"ridge must be finite and >= 0, got {self.ridge}")

    def side(self, which):
        """Penalty and quantile for one surface."""
        if which == SURFACE1:
            return self.c1, self.tau1
        if which == SURFACE2:
            return self.c2, self.tau2
        raise ValueError(f"unknown surface {which!r}")


def pinball_loss(s, tau: float):
    """
    Pinball loss of a residual ``s``: ``-tau * s`` for ``s < 0`` and
    ``(1 - tau) * s`` otherwise. Accepts scalars or arrays.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if np.ndim(s) == 0:
        s = float(s)
        return -tau * s if s < 0 else (1.0 - tau) * s
    s = np.asarray(s, dtype=float)
    return np.where(s < 0, -tau * s, (1.0 - tau) * s)


# -- assembly ------------------------------------------------------------------

def support_matrix(ds: FeatureDataset) -> np.ndarray:
    """D = [A; B]: class +1 rows over class -1 rows, each in dataset order."""
    return np.vstack([ds.A, ds.B])


def _blocks(which, K_DD, l1):
    """Fit and penalty design matrices ``[K | 1]`` plus the residual sign."""
    ones = np.ones((K_DD.shape[0], 1))
    KD1 = np.hstack([K_DD, ones])
    M_A, M_B = KD1[:l1], KD1[l1:]
    if which == SURFACE1:
        return M_A, M_B, 1.0
    if which == SURFACE2:
        return M_B, M_A, -1.0
    raise ValueError(f"unknown surface {which!r}")


def effective_ridge(fit: np.ndarray, ridge: float) -> float:
    # mean diagonal of fit' fit, i.e. mean squared column norm
    return ridge * float(np.mean(np.sum(fit * fit, axis=0)))


def _assemble(which, K_DD, l1, params):
    c, tau = params.side(which)
    fit, pen, sign = _blocks(which, K_DD, l1)
    p = fit.shape[1]
    l = pen.shape[0]
    H = fit.T @ fit
    H = 0.5 * (H + H.T)
    H[np.diag_indices(p)] += effective_ridge(fit, params.ridge)
    P = np.zeros((p + l, p + l))
    P[:p, :p] = H
    q = np.concatenate([np.zeros(p), np.full(l, c)])
    # xi_i >= (1 - tau) r_i  and  xi_i >= -tau r_i  with  r = 1 + sign * pen @ v
    eye = np.eye(l)
    G = np.block([[(1.0 - tau) * sign * pen, -eye],
                  [-tau * sign * pen, -eye]])
    h = np.concatenate([np.full(l, -(1.0 - tau)), np.full(l, tau)])
    return QpProblem(P, q, G, h)


def _check_classes(ds):
    l1 = int(np.sum(ds.labels == 1))
    l2 = ds.n - l1
    if l1 == 0 or l2 == 0:
        raise DatasetError(f"both classes must be present (class +1: {l1}, class -1: {l2})")
    return l1, l2


def assemble_primal(which: str, ds: FeatureDataset, params: PinGtsvmParams,
                    K_DD: np.ndarray | None = None) -> QpProblem:
    """
    Build the QP for one surface over variables ``(u, b, xi)``.

    The problem has ``m + 1 + l`` variables and ``2 l`` inequality rows, where
    ``m`` is the number of training rows and ``l`` the size of the opposite
    class. ``K_DD`` may be passed to reuse a precomputed Gram matrix of D.
    """
    l1, _ = _check_classes(ds)
    if K_DD is None:
        D = support_matrix(ds)
        K_DD = gram(D, D, params.kernel)
    return _assemble(which, K_DD, l1, params)


def empirical_objective(which: str, u, b: float, ds: FeatureDataset,
                        params: PinGtsvmParams, K_DD: np.ndarray | None = None) -> float:
    """
    Recompute one surface's training objective from ``(u, b)`` directly:
    half the squared fit residual, the ridge term and the summed pinball
    loss of the opposite class.
    """
    l1, _ = _check_classes(ds)
    if K_DD is None:
        D = support_matrix(ds)
        K_DD = gram(D, D, params.kernel)
    c, tau = params.side(which)
    fit, pen, sign = _blocks(which, K_DD, l1)
    v = np.append(np.asarray(u, dtype=float), b)
    fit_res = fit @ v
    r = 1.0 + sign * (pen @ v)
    ridge = effective_ridge(fit, params.ridge)
    return float(0.5 * fit_res @ fit_res + 0.5 * ridge * v @ v
                 + c * np.sum(pinball_loss(r, tau)))


# -- model -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PinGtsvmModel:
    D: np.ndarray
    u1: np.ndarray
    b1: float
    u2: np.ndarray
    b2: float
    norm1: float
    norm2: float
    kernel: KernelSpec
    params: PinGtsvmParams
    label_map: dict = field(default_factory=lambda: {1: "busy", -1: "free"})
    standardizer: Standardizer | None = None
    objective1: float = float("nan")
    objective2: float = float("nan")
    train_time: float = 0.0

    @property
    def d(self) -> int:
        return self.D.shape[1]

    def _kernel_rows(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: model expects {self.d} features, got {X.shape[1]}")
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return gram(X, self.D, self.kernel)

    def decision_values(self, X, kernel_rows: np.ndarray | None = None):
        """
        Return ``(f1, f2, d1, d2)`` arrays for the rows of ``X``: surface
        values and their kernel-metric distances ``|f_k| / norm_k``.
        """
        Kx = self._kernel_rows(X) if kernel_rows is None else kernel_rows
        f1 = Kx @ self.u1 + self.b1
        f2 = Kx @ self.u2 + self.b2
        return f1, f2, np.abs(f1) / self.norm1, np.abs(f2) / self.norm2

    def predict(self, X, kernel_rows: np.ndarray | None = None) -> np.ndarray:
        _, _, d1, d2 = self.decision_values(X, kernel_rows)
        return np.where(d1 <= d2, 1, -1)


def decision_values(model: PinGtsvmModel, x):
    f1, f2, d1, d2 = model.decision_values(np.asarray(x, dtype=float).reshape(1, -1))
    return float(f1[0]), float(f2[0]), float(d1[0]), float(d2[0])


def predict(model: PinGtsvmModel, X) -> np.ndarray:
    return model.predict(X)


def _solve_surface(which, K_DD, l1, params, settings):
    problem = _assemble(which, K_DD, l1, params)
    sol = qpsolver.solve_qp(problem, settings)
    if not sol.ok:
        raise TrainingError(f"{which}: QP {sol.status} ({sol.message}; primal={sol.primal_residual:.3g}, "
                            f"stationarity={sol.stationarity_residual:.3g})",
                            surface=which, solution=sol)
    m = K_DD.shape[0]
    return sol.x[:m].copy(), float(sol.x[m]), sol.objective


def fit_gram(ds: FeatureDataset, params: PinGtsvmParams, K_DD: np.ndarray,
             qp_settings: QpSettings | None = None, label_map=None,
             standardizer=None) -> PinGtsvmModel:
    """Train from a precomputed Gram matrix of ``support_matrix(ds)``."""
    start = time.perf_counter()
    l1, _ = _check_classes(ds)
    D = support_matrix(ds)
    u1, b1, obj1 = _solve_surface(SURFACE1, K_DD, l1, params, qp_settings)
    u2, b2, obj2 = _solve_surface(SURFACE2, K_DD, l1, params, qp_settings)
    sq1 = max(float(u1 @ K_DD @ u1), 0.0)
    sq2 = max(float(u2 @ K_DD @ u2), 0.0)
    if sq1 + b1 * b1 <= NORM_EPS and sq2 + b2 * b2 <= NORM_EPS:
        raise DegenerateModelError("both surfaces are numerically zero")
    D.setflags(write=False)
    return PinGtsvmModel(
        D=D, u1=u1, b1=b1, u2=u2, b2=b2,
        norm1=math.sqrt(sq1 + NORM_EPS), norm2=math.sqrt(sq2 + NORM_EPS),
        kernel=params.kernel, params=params,
        label_map=dict(label_map or {1: "busy", -1: "free"}),
        standardizer=standardizer, objective1=obj1, objective2=obj2,
        train_time=time.perf_counter() - start)


def train(ds: FeatureDataset, params: PinGtsvmParams, qp_settings: QpSettings | None = None,
          label_map=None, standardizer: Standardizer | None = None) -> PinGtsvmModel:
    """
    Solve both surface QPs and return the trained model.

    If ``standardizer`` is given, ``ds`` must already be standardized with
    it; the model then standardizes inputs at prediction time.

    Raises
    ------
    DatasetError
        A class is empty.
    TrainingError
        A QP was not solved to certified optimality; ``surface`` names it.
    DegenerateModelError
        Both surfaces came out numerically zero.
    """
    _check_classes(ds)
    D = support_matrix(ds)
    return fit_gram(ds, params, gram(D, D, params.kernel), qp_settings,
                    label_map=label_map, standardizer=standardizer)


# -- persistence -------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _vector_block(name, values):
    return [f"[{name}]"] + [_fmt(v) for v in np.asarray(values).reshape(-1)]


def save_model(model: PinGtsvmModel, path) -> None:
    p = model.params
    header = [
        FORMAT_VERSION,
        f"kernel: {model.kernel.kind}",
        f"sigma: {_fmt(model.kernel.sigma)}",
        f"c1: {_fmt(p.c1)}",
        f"c2: {_fmt(p.c2)}",
        f"tau1: {_fmt(p.tau1)}",
        f"tau2: {_fmt(p.tau2)}",
        f"ridge: {_fmt(p.ridge)}",
        f"d: {model.d}",
        f"m: {model.D.shape[0]}",
        "label_map: " + json.dumps({f"{k:+d}": v for k, v in sorted(model.label_map.items())},
                                   sort_keys=True),
        f"standardized: {'yes' if model.standardizer is not None else 'no'}",
        f"created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        f"software: pingtsvm {__version__}",
    ]
    body = ["[D]"] + [",".join(_fmt(v) for v in row) for row in model.D]
    body += _vector_block("u1", model.u1) + _vector_block("b1", [model.b1])
    body += _vector_block("u2", model.u2) + _vector_block("b2", [model.b2])
    body += _vector_block("norm1", [model.norm1]) + _vector_block("norm2", [model.norm2])
    if model.standardizer is not None:
        body += _vector_block("mean", model.standardizer.mean)
        body += _vector_block("scale", model.standardizer.scale)
    payload = "\n".join(header + body) + "\n"
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    Path(path).write_text(payload + f"sha256:{digest}\n", encoding="utf-8")


def load_model(path) -> PinGtsvmModel:
    """
    Read a model file written by :func:`save_model`.

    Raises
    ------
    ModelFormatError
        Wrong version, checksum failure, or a truncated or malformed file.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"{path}: cannot read: {exc.strerror}") from exc
    first = text.split("\n", 1)[0].strip()
    if not first.startswith("pingtsvm/"):
        raise ModelFormatError(f"{path}: not a model file")
    if first != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: version mismatch: {first!r}, expected {FORMAT_VERSION!r}")
    body, sep, tail = text.rstrip("\n").rpartition("\n")
    if not sep or not tail.startswith("sha256:"):
        raise ModelFormatError(f"{path}: truncated file (no checksum line)")
    payload = body + "\n"
    if hashlib.sha256(payload.encode("utf-8")).hexdigest() != tail[len("sha256:"):].strip():
        raise ModelFormatError(f"{path}: checksum mismatch")

    lines = payload.rstrip("\n").split("\n")[1:]
    header, blocks, current = {}, {}, None
    for line in lines:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
        else:
            blocks[current].append(line)
    try:
        d, m = int(header["d"]), int(header["m"])
        kernel = KernelSpec(header["kernel"], float(header["sigma"]))
        params = PinGtsvmParams(float(header["c1"]), float(header["c2"]), float(header["tau1"]),
                                float(header["tau2"]), kernel, float(header["ridge"]))
        label_map = {int(k): v for k, v in json.loads(header["label_map"]).items()}
        D = np.array([[float(v) for v in row.split(",")] for row in blocks["D"]]).reshape(m, d)

        def vec(name, size):
            arr = np.array([float(v) for v in blocks[name]])
            if arr.size != size:
                raise ModelFormatError(f"{path}: block [{name}] has {arr.size} values, expected {size}")
            return arr

        std = None
        if header.get("standardized") == "yes":
            std = Standardizer(vec("mean", d), vec("scale", d))
        D.setflags(write=False)
        return PinGtsvmModel(
            D=D, u1=vec("u1", m), b1=float(vec("b1", 1)[0]), u2=vec("u2", m),
            b2=float(vec("b2", 1)[0]), norm1=float(vec("norm1", 1)[0]),
            norm2=float(vec("norm2", 1)[0]), kernel=kernel, params=params,
            label_map=label_map, standardizer=std)
    except ModelFormatError:
        raise
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file: {exc}") from exc
