"""
Dense convex quadratic programming.

Solves

    minimize    1/2 x' P x + q' x
    subject to  G x <= h

with P symmetric positive semidefinite, using a Mehrotra predictor-corrector
interior point method. Once the iterates identify the active constraints, the
equality-constrained KKT system on that set is solved directly ("polishing"),
which gives a solution accurate to round-off. A solution is reported as
``optimal`` only after its KKT residuals have been checked against the
absolute tolerances in :class:`QpSettings`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import warnings

import numpy as np
import scipy.linalg as sla
from scipy.optimize import nnls

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# step-to-boundary fraction
_ETA = 0.99
# iterations without progress before giving up
_STALL_WINDOW = 30
_INFEAS_TOL = 1e-9
_REFINE_STEPS = 2
# relative defect accepted from the cheaper normal-equations step
_DIRECTION_TOL = 1e-9


class QpError(ValueError):
    """Raised for malformed problem data."""


@dataclass(frozen=True)
class QpProblem:
    """Standard-form convex QP. ``G`` may have zero rows."""

    P: np.ndarray
    q: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        q = np.array(self.q, dtype=float).reshape(-1)
        n = q.size
        if P.shape != (n, n):
            raise QpError(f"P has shape {P.shape}, expected ({n}, {n})")
        G = np.zeros((0, n)) if self.G is None else np.array(self.G, dtype=float, ndmin=2)
        h = np.zeros(0) if self.h is None else np.array(self.h, dtype=float).reshape(-1)
        if G.size == 0:
            G = G.reshape(0, n) if G.shape[-1] == n else np.zeros((0, n))
        if G.shape[1] != n or G.shape[0] != h.size:
            raise QpError(f"G has shape {G.shape}, h has length {h.size}; n={n}")
        for name, arr in (("P", P), ("q", q), ("G", G), ("h", h)):
            if not np.all(np.isfinite(arr)):
                raise QpError(f"{name} contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(P))) if P.size else 1.0)
        if np.max(np.abs(P - P.T), initial=0.0) > 1e-12 * scale:
            raise QpError("P is not symmetric")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.h.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass(frozen=True)
class QpSettings:
    tol_feas: float = 1e-8
    tol_stat: float = 1e-6
    tol_comp: float = 1e-6
    max_iter: int = 200000
    # added to the diagonal of P before solving; callers normally regularize themselves
    ridge: float = 0.0

    def __post_init__(self):
        if min(self.tol_feas, self.tol_stat, self.tol_comp) <= 0:
            raise QpError("tolerances must be positive")
        if self.max_iter < 1:
            raise QpError("max_iter must be at least 1")
        if self.ridge < 0:
            raise QpError("ridge must be non-negative")


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    primal_residual: float
    stationarity_residual: float
    complementarity_residual: float
    iterations: int
    dual: np.ndarray = field(default=None, repr=False)
    polished: bool = False
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(problem: QpProblem, x: np.ndarray, lam: np.ndarray):
    """
    Return ``(primal, stationarity, dual, complementarity)`` residuals.

    primal          max(0, max_i (Gx - h)_i)
    stationarity    ||Px + q + G' lam||_inf
    dual            max(0, -min_i lam_i)
    complementarity max_i |lam_i (h - Gx)_i|
    """
    slack = problem.h - problem.G @ x
    primal = max(0.0, float(-slack.min())) if slack.size else 0.0
    grad = problem.P @ x + problem.q + problem.G.T @ lam
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    dual = max(0.0, float(-lam.min())) if lam.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if lam.size else 0.0
    return primal, stat, dual, comp


def _certified(problem, settings, x, lam):
    primal, stat, dual, comp = kkt_residuals(problem, x, lam)
    good = (primal <= settings.tol_feas and stat <= settings.tol_stat
            and dual == 0.0 and comp <= settings.tol_comp)
    return good, (primal, stat, comp)


def _make_solution(problem, x, lam, status, iterations, polished=False, message=""):
    primal, stat, _, comp = kkt_residuals(problem, x, lam)
    return QpSolution(x=x, objective=problem.objective(x), status=status,
                      primal_residual=primal, stationarity_residual=stat,
                      complementarity_residual=comp, iterations=iterations,
                      dual=lam, polished=polished, message=message)


def _solve_unconstrained(problem, settings):
    # P x = -q has a solution iff q lies in range(P); otherwise the objective is unbounded
    P, q = problem.P, problem.q
    lam = np.zeros(0)
    try:
        x = sla.solve(P, -q, assume_a="sym")
    except (sla.LinAlgError, np.linalg.LinAlgError):
        x = np.linalg.lstsq(P, -q, rcond=None)[0]
    for _ in range(3):
        r = P @ x + q
        if np.max(np.abs(r), initial=0.0) <= settings.tol_stat:
            break
        x = x - np.linalg.lstsq(P, r, rcond=None)[0]
    ok, _ = _certified(problem, settings, x, lam)
    if ok:
        return _make_solution(problem, x, lam, OPTIMAL, 1)
    return _make_solution(problem, x, lam, UNBOUNDED, 1,
                          message="linear term not in the range of P")


def _kkt_solve(problem, active):
    """Solve the KKT system with the constraints in ``active`` held at equality."""
    P, q, G, h = problem.P, problem.q, problem.G, problem.h
    n = problem.n
    Ga = G[active]
    k = Ga.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = P
    K[:n, n:] = Ga.T
    K[n:, :n] = Ga
    rhs = np.concatenate([-q, h[active]])
    # quasi-definite regularization, removed by iterative refinement
    delta = 1e-10 * max(1.0, float(np.max(np.abs(K))))
    Kreg = K.copy()
    Kreg[np.arange(n), np.arange(n)] += delta
    Kreg[np.arange(n, n + k), np.arange(n, n + k)] -= delta
    try:
        lu = sla.lu_factor(Kreg, check_finite=False)
    except (sla.LinAlgError, ValueError):
        return None
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    for _ in range(10):
        r = rhs - K @ sol
        if np.max(np.abs(r)) <= 1e-14 * max(1.0, float(np.max(np.abs(rhs)))):
            break
        sol = sol + sla.lu_solve(lu, r, check_finite=False)
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def _nonneg_multipliers(problem, x, active):
    """Least-squares multipliers >= 0 on ``active`` for a fixed primal point."""
    idx = np.flatnonzero(active)
    lam = np.zeros(problem.m)
    if idx.size == 0:
        return lam
    try:
        lam_a, _ = nnls(problem.G[idx].T, -(problem.P @ x + problem.q), maxiter=50 * idx.size)
    except RuntimeError:
        return None
    lam[idx] = lam_a
    return lam


def _polish(problem, settings, active, rounds=8):
    """
    Primal-dual active-set refinement started from an interior-point guess.

    Each round solves the equality-constrained KKT system on ``active``, then
    adds violated constraints and drops constraints with negative multipliers.
    Returns ``(x, lam)`` once the KKT certificate holds, else ``None``.
    """
    active = np.asarray(active, dtype=bool).copy()
    seen = set()
    for _ in range(rounds):
        key = active.tobytes()
        if key in seen:
            return None
        seen.add(key)
        idx = np.flatnonzero(active)
        solved = _kkt_solve(problem, idx)
        if solved is None:
            return None
        x, lam_a = solved
        lam = np.zeros(problem.m)
        lam[idx] = lam_a
        violated = (problem.G @ x - problem.h) > settings.tol_feas
        negative = lam < -settings.tol_stat
        if not violated.any() and not negative.any():
            lam = np.maximum(lam, 0.0)
            ok, _ = _certified(problem, settings, x, lam)
            return (x, lam) if ok else None
        if not violated.any():
            # degenerate active set: x may be right while the multipliers are not unique
            lam = _nonneg_multipliers(problem, x, active)
            if lam is not None and _certified(problem, settings, x, lam)[0]:
                return x, lam
        active = (active | violated) & ~negative
    return None


class _NewtonSystem:
    """
    Newton directions at one interior-point iterate.

    Solves  P dx + G'dz = -rd,  G dx + ds = -rp,  Z ds + S dz = -rc.
    The normal equations (Cholesky of P + G'WG) are tried first since they
    are several times cheaper; when their refined direction misses the
    unreduced system by too much, as happens on nearly singular kernel
    blocks, the augmented system is factored instead.
    """

    def __init__(self, P, G, s, z, reg, use_normal=True):
        self.P, self.G, self.s, self.z, self.reg = P, G, s, z, reg
        self.w = z / s
        self._chol = None
        self._lu = None
        self.use_normal = use_normal

    def _solve_normal(self, ed, ep, ec):
        P, G, s, z, w = self.P, self.G, self.s, self.z, self.w
        if self._chol is None:
            H = P + G.T @ (w[:, None] * G)
            H[np.diag_indices_from(H)] += self.reg
            self._chol = sla.cho_factor(H, check_finite=False)
        dx = sla.cho_solve(self._chol, -ed - G.T @ (w * ep - ec / s), check_finite=False)
        dz = w * (G @ dx + ep) - ec / s
        return dx, -(ec + s * dz) / z, dz

    def _solve_augmented(self, ed, ep, ec):
        P, G, s, z = self.P, self.G, self.s, self.z
        n = P.shape[0]
        if self._lu is None:
            K = np.block([[P, G.T], [G, -np.diag(1.0 / self.w)]])
            K[np.arange(n), np.arange(n)] += self.reg
            with warnings.catch_warnings():
                # an exactly singular pivot makes the factor useless
                warnings.simplefilter("error", sla.LinAlgWarning)
                self._lu = sla.lu_factor(K, check_finite=False)
        sol = sla.lu_solve(self._lu, np.concatenate([-ed, -ep + ec / z]), check_finite=False)
        dx, dz = sol[:n], sol[n:]
        return dx, -(ec + s * dz) / z, dz

    def _refined(self, solve, rd, rp, rc):
        P, G, s, z = self.P, self.G, self.s, self.z

        def defect(dx, ds, dz):
            return (-rd - (P @ dx + G.T @ dz), -rp - (G @ dx + ds), -rc - (z * ds + s * dz))

        d = solve(rd, rp, rc)
        err = defect(*d)
        size = max(float(np.max(np.abs(e))) for e in err)
        for _ in range(_REFINE_STEPS):
            c = solve(-err[0], -err[1], -err[2])
            trial = tuple(a + b for a, b in zip(d, c))
            terr = defect(*trial)
            tsize = max(float(np.max(np.abs(e))) for e in terr)
            # refinement with a poor factorization can diverge
            if not tsize < size:
                break
            d, err, size = trial, terr, tsize
        return d, size

    def direction(self, rd, rp, rc):
        """Refined ``(dx, ds, dz)``, or ``(None, None, None)`` if no system could be factored."""
        scale = max(float(np.max(np.abs(rd), initial=0.0)), float(np.max(np.abs(rp))),
                    float(np.max(np.abs(rc))))
        if self.use_normal:
            try:
                d, size = self._refined(self._solve_normal, rd, rp, rc)
                if size <= _DIRECTION_TOL * scale and all(np.all(np.isfinite(v)) for v in d):
                    return d
            except (sla.LinAlgError, ValueError):
                pass
            self.use_normal = False
        try:
            d, _ = self._refined(self._solve_augmented, rd, rp, rc)
        except (sla.LinAlgError, sla.LinAlgWarning, ValueError):
            return None, None, None
        if not all(np.all(np.isfinite(v)) for v in d):
            return None, None, None
        return d


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(problem: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """
    Solve a dense convex QP and certify the result.

    Parameters
    ----------
    problem : QpProblem
    settings : QpSettings, optional

    Returns
    -------
    QpSolution
        ``status`` is ``optimal`` only when the primal residual, stationarity
        and complementarity all meet the tolerances in ``settings`` and the
        returned multipliers are non-negative. Otherwise ``infeasible``,
        ``unbounded`` or ``max-iterations`` with the residuals of the last
        iterate.
    """
    settings = settings or QpSettings()
    if settings.ridge > 0:
        problem = QpProblem(problem.P + settings.ridge * np.eye(problem.n),
                            problem.q, problem.G, problem.h)
    if problem.m == 0:
        return _solve_unconstrained(problem, settings)

    P, q, G, h = problem.P, problem.q, problem.G, problem.h
    n, m = problem.n, problem.m
    data_scale = max(1.0, float(np.max(np.abs(P), initial=0.0)),
                     float(np.max(np.abs(G), initial=0.0)))
    reg = 1e-13 * data_scale

    # deterministic start from the KKT system with unit scaling, as in CVXOPT:
    # [P G'; G -I] (x, u) = (-q, h), then s = -u and z = u shifted into the interior
    K0 = np.block([[P, G.T], [G, -np.eye(m)]])
    K0[np.arange(n), np.arange(n)] += reg + 1e-8 * data_scale
    try:
        sol0 = sla.solve(K0, np.concatenate([-q, h]), check_finite=False)
    except (sla.LinAlgError, ValueError):
        sol0 = np.zeros(n + m)
    if not np.all(np.isfinite(sol0)):
        sol0 = np.zeros(n + m)
    x, u = sol0[:n], sol0[n:]
    s, z = -u, u.copy()
    s = s + max(0.0, -float(s.min())) + 1.0
    z = z + max(0.0, -float(z.min())) + 1.0
    best = None
    use_normal = True
    mu_hist = []
    x_prev = x
    it = 0
    for it in range(1, settings.max_iter + 1):
        rd = P @ x + q + G.T @ z
        rp = G @ x + s - h
        mu = float(s @ z) / m

        ok, res = _certified(problem, settings, x, z)
        if ok:
            # the interior iterate meets tolerance; the polished vertex is usually exact
            polished = _polish(problem, settings, z > s)
            if polished is not None:
                return _make_solution(problem, *polished, OPTIMAL, it, polished=True)
            return _make_solution(problem, x, z, OPTIMAL, it)
        if best is None or max(res[0] / settings.tol_feas, res[1] / settings.tol_stat,
                               res[2] / settings.tol_comp) < best[0]:
            best = (max(res[0] / settings.tol_feas, res[1] / settings.tol_stat,
                        res[2] / settings.tol_comp), x.copy(), z.copy())

        # Farkas certificate: z >= 0, G'z ~ 0, h'z < 0
        hz = float(h @ z)
        if hz < 0 and np.max(np.abs(G.T @ z)) <= _INFEAS_TOL * -hz:
            return _make_solution(problem, x, z / -hz, INFEASIBLE, it,
                                  message="primal infeasibility certificate found")
        # recession direction: Pd ~ 0, q'd < 0, Gd <= 0
        if np.max(np.abs(x)) > 1e8:
            d = x - x_prev
            dn = float(np.max(np.abs(d)))
            if dn > 0:
                d = d / dn
                if (np.max(np.abs(P @ d)) <= 1e-9 * data_scale and q @ d < -1e-9
                        and np.max(G @ d) <= 1e-9 * data_scale):
                    return _make_solution(problem, x, z, UNBOUNDED, it,
                                          message="objective decreases along a feasible ray")

        mu_hist.append(mu + float(np.max(np.abs(rp))) + float(np.max(np.abs(rd))))
        if len(mu_hist) > _STALL_WINDOW and mu_hist[-1] > 0.5 * mu_hist[-1 - _STALL_WINDOW]:
            break

        # conditioning only worsens as mu falls, so once the normal equations
        # are rejected the remaining iterations use the augmented system
        newton = _NewtonSystem(P, G, s, z, reg, use_normal)

        def direction(rc):
            return newton.direction(rd, rp, rc)

        # predictor
        dx_a, ds_a, dz_a = direction(s * z)
        if dx_a is None:
            break
        a_p = _max_step(s, ds_a)
        a_d = _max_step(z, dz_a)
        mu_aff = float((s + a_p * ds_a) @ (z + a_d * dz_a)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, ds, dz = direction(s * z + ds_a * dz_a - sigma * mu)
        if dx is None:
            break
        use_normal = newton.use_normal
        a_p = min(1.0, _ETA * _max_step(s, ds)) if np.any(ds < 0) else 1.0
        a_d = min(1.0, _ETA * _max_step(z, dz)) if np.any(dz < 0) else 1.0
        alpha = min(a_p, a_d)
        if not np.all(np.isfinite(dx)) or alpha < 1e-14:
            break
        x_prev = x
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        s = np.maximum(s, 1e-300)
        z = np.maximum(z, 1e-300)

    # no certificate reached; the active set of the best iterate may still be right
    _, xb, zb = best
    slack_b = np.maximum(h - G @ xb, 0.0)
    polished = _polish(problem, settings, zb > slack_b)
    if polished is not None:
        return _make_solution(problem, *polished, OPTIMAL, it, polished=True)
    primal_b = kkt_residuals(problem, xb, zb)[0]
    hz = float(h @ zb)
    # an approximate Farkas certificate, looser than the in-loop test
    if (primal_b > settings.tol_feas and hz < 0
            and np.max(np.abs(G.T @ zb)) <= 1e-6 * -hz):
        return _make_solution(problem, xb, zb, INFEASIBLE, it,
                              message="iteration stalled with persistent infeasibility")
    return _make_solution(problem, xb, zb, MAX_ITERATIONS, it,
                          message="KKT tolerances not reached")
