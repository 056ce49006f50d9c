"""Dense convex QP solver.

    minimize    1/2 z'Hz + g'z
    subject to  A_eq z  = b_eq
                A_in z <= b_in
                lb <= z <= ub

Implemented as the Goldfarb-Idnani dual active-set method. It starts from the
unconstrained minimizer and adds violated constraints one at a time, so it
needs no feasible starting point and it proves infeasibility exactly (a
violated constraint that cannot be added is a Farkas certificate). The
active-set matrices are refactored from scratch each step; the problems here
have at most a few hundred variables, so clarity wins over rank-one updates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ValidationError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


def _as_rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return A, b


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    const: float = 0.0  # added to the reported objective, never to the argmin

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValidationError(f"H has shape {self.H.shape}, expected {(n, n)}")
        scale = max(1.0, float(np.abs(self.H).max(initial=0.0)))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-12 * scale:
            raise ValidationError("H is not symmetric")
        self.A_eq, self.b_eq = _as_rows(self.A_eq, self.b_eq, n)
        self.A_in, self.b_in = _as_rows(self.A_in, self.b_in, n)
        for name, A, b in (("eq", self.A_eq, self.b_eq), ("in", self.A_in, self.b_in)):
            if A.shape[1] != n or A.shape[0] != b.shape[0]:
                raise ValidationError(f"A_{name} / b_{name} dimensions inconsistent with n={n}")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.broadcast_to(
            np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(
            np.asarray(self.ub, dtype=float), (n,)).copy()
        if np.any(self.lb > self.ub):
            raise ValidationError("lower bound exceeds upper bound")
        arrays = (self.H, self.g, self.A_eq, self.b_eq, self.A_in, self.b_in)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValidationError("nonfinite problem data")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z + self.const)


@dataclass
class Multipliers:
    """Lagrange multipliers; all but ``eq`` are nonnegative at a KKT point."""

    eq: np.ndarray
    ineq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float
    dual: float = 0.0  # magnitude of sign-violating multipliers

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.dual)


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    residuals: KktResiduals
    multipliers: Multipliers | None = None
    iterations: int = 0
    active: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(problem: QpProblem, z, multipliers: Multipliers | None = None) -> KktResiduals:
    """Infinity-norm KKT residuals of ``z`` with the given multipliers.

    Without multipliers every multiplier is taken as zero, so stationarity is
    just the gradient norm.
    """
    p = problem
    z = np.asarray(z, dtype=float)
    if multipliers is None:
        multipliers = Multipliers(np.zeros(len(p.b_eq)), np.zeros(len(p.b_in)),
                                  np.zeros(p.n), np.zeros(p.n))
    y, lam, ml, mu = multipliers.eq, multipliers.ineq, multipliers.lower, multipliers.upper
    grad = p.H @ z + p.g + p.A_eq.T @ y + p.A_in.T @ lam - ml + mu
    stat = float(np.abs(grad).max(initial=0.0))

    slack_in = p.b_in - p.A_in @ z
    with np.errstate(invalid="ignore"):
        slack_lo = np.where(np.isfinite(p.lb), z - p.lb, np.inf)
        slack_hi = np.where(np.isfinite(p.ub), p.ub - z, np.inf)
    primal = max(float(np.abs(p.A_eq @ z - p.b_eq).max(initial=0.0)),
                 float(np.maximum(-slack_in, 0).max(initial=0.0)),
                 float(np.maximum(-slack_lo, 0).max(initial=0.0)),
                 float(np.maximum(-slack_hi, 0).max(initial=0.0)))

    def comp(mult, slack):
        finite = np.isfinite(slack)
        prod = np.where(finite, mult * np.where(finite, slack, 0.0), np.abs(mult))
        return float(np.abs(prod).max(initial=0.0))

    complementarity = max(comp(lam, slack_in), comp(ml, slack_lo), comp(mu, slack_hi))
    dual = float(max(np.maximum(-lam, 0).max(initial=0.0), np.maximum(-ml, 0).max(initial=0.0),
                     np.maximum(-mu, 0).max(initial=0.0)))
    return KktResiduals(stat, primal, complementarity, dual)


def _stack_inequalities(p: QpProblem):
    """All inequalities as rows of C z >= d, plus a (kind, index) tag per row."""
    rows, rhs, tags = [p.A_in.reshape(-1, p.n) * -1.0], [-p.b_in], []
    tags += [("in", i) for i in range(len(p.b_in))]
    lo = np.flatnonzero(np.isfinite(p.lb))
    hi = np.flatnonzero(np.isfinite(p.ub))
    eye = np.eye(p.n)
    rows += [eye[lo], -eye[hi]]
    rhs += [p.lb[lo], -p.ub[hi]]
    tags += [("lb", i) for i in lo] + [("ub", i) for i in hi]
    return np.vstack(rows), np.concatenate(rhs), tags


def _independent_rows(E, tol=1e-10):
    if E.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = la.qr(E.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag.max(initial=0.0))))
    return np.sort(piv[:rank])


def _check_convex(H):
    eig = np.linalg.eigvalsh(H)
    if eig.size and eig[0] < -1e-8:
        raise ValidationError(f"H is not positive semidefinite (min eigenvalue {eig[0]:.3g})")
    return eig


def solve(problem: QpProblem, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    """Solve a convex QP; infeasibility and iteration limits are reported by status.

    Strictly convex problems take one dual active-set pass. Semidefinite ones
    (e.g. linear slack variables) run proximal-point passes, each a strictly
    convex QP centred on the previous iterate, until the true KKT conditions
    hold on the identified active set.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    p = problem
    eig = _check_convex(p.H)
    hscale = max(1.0, float(eig[-1]) if eig.size else 1.0)
    scale = max(1.0, hscale, float(np.abs(p.g).max(initial=0.0)))
    C, d, tags = _stack_inequalities(p)
    keep = _independent_rows(p.A_eq)
    E, e = p.A_eq[keep], p.b_eq[keep]
    dscale = max(1.0, np.abs(d).max(initial=0.0))
    if len(keep) < len(p.b_eq):  # dropped rows must agree with the kept ones
        z_ls = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)[0]
        if np.abs(p.A_eq @ z_ls - p.b_eq).max() > tol * max(1.0, np.abs(p.b_eq).max()):
            return _failure(p, INFEASIBLE)

    def finish(x, u_eq, u_in, active, iters, status=None):
        x, u_eq, u_in = _refine(p, x, u_eq, u_in, E, e, C, d, active, tol)
        mult = _unpack_multipliers(p, keep, u_eq, u_in, active, tags)
        res = kkt_residuals(p, x, mult)
        ok = res.stationarity <= tol * scale and res.primal <= tol * dscale and res.dual <= tol * scale
        return QpSolution(x, p.objective(x), status or (OPTIMAL if ok else ITERATION_LIMIT), res, mult,
                          iters, [tags[i] for i in active])

    if eig.size and eig[0] > 1e-9 * hscale:
        out = _dual_active_set(p.H, p.g, E, e, C, d, tol, max_iter)
        if isinstance(out, str):
            return _failure(p, out)
        return finish(*out)

    rho = 1e-3 * hscale
    G = p.H + rho * np.eye(p.n)
    center = np.zeros(p.n)
    total = 0
    sol = None
    for _ in range(PROX_PASSES):
        out = _dual_active_set(G, p.g - rho * center, E, e, C, d, tol, max_iter)
        if isinstance(out, str):
            return _failure(p, out)
        total += out[-1]
        sol = finish(*out[:-1], total)
        if sol.status == OPTIMAL or np.abs(sol.z - center).max(initial=0.0) <= 1e-14 * (1 + np.abs(center).max()):
            return sol
        center = out[0]
    return sol


PROX_PASSES = 200


def _failure(p, status):
    nan = KktResiduals(np.nan, np.nan, np.nan, np.nan)
    return QpSolution(np.full(p.n, np.nan), np.nan, status, nan)


def _dual_active_set(G, g, E, e, C, d, tol, max_iter):
    """Goldfarb-Idnani dual active set for strictly convex ``G``.

    Returns ``(x, u_eq, u_in, active, iterations)`` or a status string.
    """
    n = len(g)
    chol = la.cho_factor(G)

    def Ginv(v):
        return la.cho_solve(chol, v)

    m_eq = len(e)
    viol_tol = 0.1 * tol
    x = -Ginv(g)
    u_eq = np.zeros(m_eq)
    if m_eq:
        GE = Ginv(E.T)
        u_eq = np.linalg.solve(E @ GE, e - E @ x)
        x = x + GE @ u_eq
        if np.abs(E @ x - e).max() > max(tol, 1e-9 * np.abs(e).max()):
            return INFEASIBLE
    # u here follows G x + g - N u = 0 with N the active constraint normals
    active: list[int] = []
    u_in = np.zeros(0)
    iters = 0
    cnorm = np.linalg.norm(C, axis=1) if len(d) else np.zeros(0)
    cnorm[cnorm == 0] = 1.0
    while True:
        s = C @ x - d
        violated = s < -viol_tol
        if not np.any(violated):
            return x, u_eq, u_in, active, iters
        p_idx = int(np.argmin(np.where(violated, s / cnorm, np.inf)))
        n_p = C[p_idx]
        u_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return ITERATION_LIMIT
            N = np.vstack([E, C[active]]).T if (m_eq or active) else np.zeros((n, 0))
            Gn = Ginv(n_p)
            if N.shape[1]:
                GN = Ginv(N)
                r = np.linalg.solve(N.T @ GN, GN.T @ n_p)
                z = Gn - GN @ r
            else:
                r = np.zeros(0)
                z = Gn
            ztn = float(z @ n_p)
            sp_now = float(n_p @ x - d[p_idx])
            t2 = -sp_now / ztn if ztn > 1e-12 * float(n_p @ Gn) else np.inf
            r_in = r[m_eq:]
            t1, k_drop = np.inf, -1
            for j, rj in enumerate(r_in):
                if rj > 1e-14:
                    ratio = u_in[j] / rj
                    if ratio < t1:
                        t1, k_drop = ratio, j
            if not np.isfinite(t1) and not np.isfinite(t2):
                return INFEASIBLE
            t = min(t1, t2)
            if np.isfinite(t2):
                x = x + t * z
            u_eq = u_eq - t * r[:m_eq]
            u_in = u_in - t * r_in
            u_p += t
            if t2 <= t1:
                active.append(p_idx)
                u_in = np.append(u_in, u_p)
                break
            del active[k_drop]
            u_in = np.delete(u_in, k_drop)
            u_in = np.maximum(u_in, 0.0)


def _refine(p, x, u_eq, u_in, E, e, C, d, active, tol):
    """Re-solve the KKT system of the final active set with the unregularized H."""
    N = np.vstack([E, C[active]]) if (len(e) or active) else np.zeros((0, p.n))
    b = np.concatenate([e, d[active]])
    m = N.shape[0]
    K = np.block([[p.H, -N.T], [N, np.zeros((m, m))]])
    rhs = np.concatenate([-p.g, b])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return x, u_eq, u_in
    if not np.all(np.isfinite(sol)):
        return x, u_eq, u_in
    xr, ur = sol[:p.n], sol[p.n:]
    m_eq = len(e)
    feasible = np.all(C @ xr - d >= -0.1 * tol * max(1.0, np.abs(d).max(initial=0.0))) if len(d) else True
    if feasible and np.all(ur[m_eq:] >= -tol) and np.abs(xr - x).max(initial=0.0) < 1e-4 * (1 + np.abs(x).max()):
        return xr, ur[:m_eq], np.maximum(ur[m_eq:], 0.0)
    return x, u_eq, u_in


def _unpack_multipliers(p, keep, u_eq, u_in, active, tags):
    y = np.zeros(len(p.b_eq))
    y[keep] = -u_eq
    lam = np.zeros(len(p.b_in))
    ml = np.zeros(p.n)
    mu = np.zeros(p.n)
    for uj, idx in zip(u_in, active):
        kind, i = tags[idx]
        if kind == "in":
            lam[i] = uj
        elif kind == "lb":
            ml[i] = uj
        else:
            mu[i] = uj
    return Multipliers(y, lam, ml, mu)
