"""Short-range learning MPC (SR-LMPC).

One learning iteration sweeps ``tau = 0..N-nu``. At each ``tau`` a
``nu``-step problem starts from the current follower state and must end
exactly on one stored safe-set state; every candidate terminal state gives a
convex QP, and the cheapest (QP objective + candidate cost-to-go) wins. The
first input is applied and the window slides. The last window reaches step
``N``, so the applied prefix plus the last plan is a full-length trajectory,
which is stored as the next iteration once it passes the feasibility audit.

Terminal candidates are valued by their cost-to-go *from the time they would
be reached*: the stored state at offset ``eta`` is continued with its stored
inputs (coasting past the stored end) against the leader from step
``tau + nu`` to ``N``. For ``eta == tau + nu`` this is exactly the stored
cost-to-go; for shifted candidates it keeps the objective an honest cost of a
real trajectory, which is what makes iteration costs nonincreasing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelPredictor, in_zone
from .costs import MpcWeights, stage_costs, terminal_cost
from .dynamics import Trajectory, VehicleState, simulate, step
from .errors import HorizonError, InfeasibleError, ValidationError
from .feasibility import SafetyLimits, validate_trajectory
from .horizon import HorizonQp, build_horizon_qp, rollout_matrices
from .nominal import QP_MAX_ITER, solve_nominal
from .qp import solve
from .safe_set import (DynamicSafeSet, SafeSetEntry, StoredIteration, candidates,
                       compute_cost_to_go_with_comm)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SrLmpcConfig:
    N: int = 70
    nu: int = 60
    dt: float = 0.2
    weights: MpcWeights = MpcWeights()
    gap_ref: float = 20.0
    limits: SafetyLimits = SafetyLimits()
    alpha: float = 0.9
    omega_max: float = 10.0  # s, stands in for a dropped packet inside costs
    eps_conv: float = 1e-3
    L_max: int = 30
    dead_zone: tuple[float, float] | None = None
    dead_zone_margin: float = 1.0
    dead_zone_branch: str = "behind"
    qp_tol: float = 1e-8
    tie_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.nu < self.N:
            raise ValidationError(f"need 0 < nu < N, got nu={self.nu}, N={self.N}")
        if not self.eps_conv > 0:
            raise ValidationError("eps_conv must be positive")
        if self.L_max < 1:
            raise ValidationError("L_max must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if not self.dt > 0 or not self.omega_max > 0:
            raise ValidationError("dt and omega_max must be positive")
        if self.dead_zone is not None and not self.dead_zone[0] < self.dead_zone[1]:
            raise ValidationError("dead zone must satisfy min < max")


@dataclass
class SubproblemResult:
    tau: int
    plan: Trajectory  # states tau .. tau+nu
    selected: tuple[int, int]  # (iteration, eta) of the terminal safe-set entry
    terminal: SafeSetEntry
    objective: float
    n_candidates: int = 0
    qp_solves: int = 0

    @property
    def inputs(self) -> np.ndarray:
        return self.plan.inputs


@dataclass
class IterationRecord:
    iteration: int
    trajectory: Trajectory
    omega: np.ndarray  # predicted delivery time per state, inf = dropped
    q: np.ndarray
    cost: float
    subproblems: list[SubproblemResult] = field(default_factory=list)

    @property
    def dropped_steps(self) -> int:
        return int(np.sum(~np.isfinite(self.omega)))


@dataclass
class SrLmpcResult:
    records: list[IterationRecord]
    safe_set: DynamicSafeSet
    converged: bool
    hit_cap: bool
    failure: str | None = None

    @property
    def costs(self) -> list[float]:
        return [r.cost for r in self.records]

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def first_input(self) -> float:
        return float(self.final.trajectory.inputs[0])


def update_dead_zone(leader_positions, zone) -> list:
    """Forbidden follower interval per step: the zone while the leader is in it."""
    if zone is None:
        return [None] * len(leader_positions)
    inside = in_zone(leader_positions, zone)
    return [tuple(zone) if flag else None for flag in inside]


def _terminal_lower_bounds(hqp: HorizonQp, targets: np.ndarray) -> np.ndarray:
    """Objective of the pinned QP with all inequalities dropped, for each target state."""
    qp = hqp.qp
    E, e_free = hqp.terminal_rows
    try:
        L = np.linalg.cholesky(qp.H)
    except np.linalg.LinAlgError:
        return np.full(len(targets), -np.inf)
    Hinv = np.linalg.inv(L).T @ np.linalg.inv(L)
    u0 = -Hinv @ qp.g
    f0 = 0.5 * u0 @ qp.H @ u0 + qp.g @ u0 + qp.const
    W = E @ Hinv @ E.T
    if np.linalg.matrix_rank(W) < W.shape[0]:
        return np.full(len(targets), -np.inf)  # too few inputs to pin both states; no pruning
    r = targets - e_free - E @ u0
    return f0 + 0.5 * np.einsum("ij,ij->i", r @ np.linalg.inv(W), r)


def solve_subproblem(x_start: VehicleState, tau: int, leader: Trajectory, cands: list[SafeSetEntry],
                     forbidden, cfg: SrLmpcConfig, exhaustive: bool = False) -> SubproblemResult:
    """Pick the terminal safe-set entry minimizing running cost plus its ``q``.

    ``leader`` holds the leader states ``tau .. tau+nu``. Candidates are solved
    in order of a relaxation lower bound and the scan stops once no remaining
    bound can beat the incumbent, so the result equals full enumeration.
    Exact ties go to the smallest (iteration, eta).
    """
    if not cands:
        raise InfeasibleError("no terminal candidates", ("safe_set",))
    nu = cfg.nu
    hqp = build_horizon_qp(x_start, leader, nu, cfg.weights, cfg.gap_ref, cfg.limits, cfg.dt,
                           forbidden=forbidden, branch=cfg.dead_zone_branch,
                           margin=cfg.dead_zone_margin, terminal_cost=False)
    targets = np.array([[c.state.position, c.state.velocity] for c in cands])
    qs = np.array([c.q for c in cands])
    if exhaustive:
        bounds = np.full(len(cands), -np.inf)
    else:
        bounds = _terminal_lower_bounds(hqp, targets) + qs
    order = sorted(range(len(cands)), key=lambda i: (bounds[i], cands[i].iteration, cands[i].eta))

    best = None  # (objective, iteration, eta, index, z)
    solves = 0
    for i in order:
        if best is not None and bounds[i] > best[0] + cfg.tie_tol * (1 + abs(best[0])):
            break
        c = cands[i]
        sol = solve(hqp.pin_terminal(c.state), tol=cfg.qp_tol, max_iter=QP_MAX_ITER)
        solves += 1
        if not sol.ok:
            continue
        obj = sol.objective + c.q
        key = (obj, c.iteration, c.eta, i, sol.z)
        if best is None or obj < best[0] - cfg.tie_tol * (1 + abs(best[0])):
            best = key
        elif abs(obj - best[0]) <= cfg.tie_tol * (1 + abs(best[0])) and (c.iteration, c.eta) < best[1:3]:
            best = key
    if best is None:
        raise InfeasibleError(f"all {len(cands)} terminal candidates infeasible at tau={tau}",
                              tuple(hqp.groups) + ("terminal",))
    obj, ell, eta, i, z = best
    u = np.clip(hqp.inputs(z), cfg.limits.bounds.lower, cfg.limits.bounds.upper)
    plan = simulate(x_start, u, cfg.dt, origin=tau)
    return SubproblemResult(tau, plan, (ell, eta), cands[i], float(obj), len(cands), solves)


class ContinuationCosts:
    """Cost-to-go of stored states re-anchored at the step they would be reached.

    Cached per (iteration, anchor step); stored trajectories never change.
    """

    def __init__(self, leader: Trajectory, predictor: ChannelPredictor, cfg: SrLmpcConfig):
        self.leader = leader
        self.predictor = predictor
        self.cfg = cfg
        self._cache: dict = {}

    def q_values(self, rec: StoredIteration, T: int) -> np.ndarray:
        key = (rec.iteration, T)
        if key not in self._cache:
            self._cache[key] = self._compute(rec, T)
        return self._cache[key]

    def _compute(self, rec: StoredIteration, T: int) -> np.ndarray:
        cfg, N, dt = self.cfg, self.cfg.N, self.cfg.dt
        traj = rec.trajectory
        n_eta = len(traj)
        h = N - T
        if h < 0:
            raise HorizonError(f"anchor step {T} lies beyond the horizon {N}")
        # inputs along each continuation, coasting once the stored inputs run out
        idx = np.arange(n_eta)[:, None] + np.arange(h)[None, :]
        padded = np.append(traj.inputs, np.zeros(h + 1))
        U = np.where(idx < traj.horizon, padded[np.minimum(idx, len(padded) - 1)], 0.0)
        p0, v0 = traj.positions[:, None], traj.velocities[:, None]
        if h:
            Sp, Sv = rollout_matrices(h, dt)
            k = np.arange(1, h + 1)[None, :]
            P = np.hstack([p0, p0 + k * dt * v0 + U @ Sp.T])
            V = np.hstack([v0, v0 + U @ Sv.T])
        else:
            P, V = p0, v0
        lp = self.leader.positions[T:N + 1][None, :]
        lv = self.leader.velocities[T:N + 1][None, :]

        lim = cfg.limits
        tol = 1e-9
        gap = lp - P
        ok = np.all(gap[:, 1:] >= lim.min_gap - tol, axis=1)
        ok &= np.all(gap[:, 1:] - lim.ttc_min * (V[:, 1:] - lv[:, 1:]) >= -tol, axis=1)
        ok &= np.all((V[:, 1:] >= lim.v_min - tol) & (V[:, 1:] <= lim.v_max + tol), axis=1)
        if cfg.dead_zone is not None:
            both = in_zone(P[:, 1:], cfg.dead_zone) & in_zone(lp[:, 1:], cfg.dead_zone)
            ok &= ~np.any(both, axis=1)

        w = cfg.weights
        e_p = lp - cfg.gap_ref - P
        e_v = lv - V
        z = ((w.gap + w.reference) * e_p[:, 1:] ** 2 + w.reference * e_v[:, 1:] ** 2
             + w.effort * U ** 2)
        term = w.terminal * np.abs(e_p[:, -1])
        disc = cfg.alpha ** np.arange(h + 1)
        q = np.full(n_eta, np.inf)
        for eta in np.flatnonzero(ok):
            omega = self.predictor(P[eta], lp[0], T).costed(cfg.omega_max)
            q[eta] = disc @ omega + z[eta].sum() + term[eta]
        return q


def anchored_candidates(ds: DynamicSafeSet, T: int, costs: ContinuationCosts,
                        effective_horizon: int) -> list[SafeSetEntry]:
    """Safe-set candidates with ``q`` replaced by the re-anchored value; infeasible ones dropped."""
    by_iter = {rec.iteration: costs.q_values(rec, T) for rec in ds.records}
    out = []
    for e in candidates(ds, effective_horizon):
        q = by_iter[e.iteration][e.eta]
        if math.isfinite(q):
            out.append(replace(e, q=float(q)))
    return out


def trajectory_q(traj: Trajectory, leader: Trajectory, predictor: ChannelPredictor, cfg: SrLmpcConfig):
    """Predicted delivery times and the communication-augmented cost-to-go of a trajectory."""
    lw = leader.window(traj.origin - leader.origin, traj.origin - leader.origin + traj.horizon)
    profile = predictor(traj.positions, lw.positions, traj.origin)
    z = stage_costs(traj, lw, cfg.weights, cfg.gap_ref)
    term = terminal_cost(traj, lw, cfg.weights, cfg.gap_ref)
    q = compute_cost_to_go_with_comm(z, profile.costed(cfg.omega_max), cfg.alpha, term)
    return profile.omega, q


def run_iteration(L: int, ds: DynamicSafeSet, predictor: ChannelPredictor, x0: VehicleState,
                  leader: Trajectory, cfg: SrLmpcConfig, costs: ContinuationCosts | None = None,
                  effective_horizon: int | None = None) -> IterationRecord:
    """One learning iteration; stores the trajectory in ``ds`` on success.

    Raises ``InfeasibleError`` (and leaves ``ds`` untouched) if any window
    has no feasible terminal candidate.
    """
    if ds.iterations == 0:
        raise ValidationError("the safe set must be seeded before iterating")
    N, nu = cfg.N, cfg.nu
    if len(leader) < N + 1:
        raise HorizonError(f"leader prediction covers {len(leader) - 1} steps, need {N}")
    costs = costs or ContinuationCosts(leader, predictor, cfg)
    n_eff = N if effective_horizon is None else effective_horizon
    frozen = ds.snapshot()
    x = x0
    applied: list[float] = []
    subs = []
    for tau in range(N - nu + 1):
        T = tau + nu
        forbidden = update_dead_zone(leader.positions[tau + 1:T + 1], cfg.dead_zone)
        cands = anchored_candidates(frozen, T, costs, n_eff)
        res = solve_subproblem(x, tau, leader.window(tau, T), cands, forbidden, cfg)
        subs.append(res)
        if tau < N - nu:
            u0 = float(res.inputs[0])
            applied.append(u0)
            x = step(x, u0, cfg.dt)
        else:
            applied.extend(float(u) for u in res.inputs)
    traj = simulate(x0, applied, cfg.dt, iteration=L)
    terminal_err = max(abs(traj.positions[-1] - subs[-1].terminal.state.position),
                       abs(traj.velocities[-1] - subs[-1].terminal.state.velocity))
    if terminal_err > 1e-8:
        log.warning("iteration %d: terminal state misses the selected entry by %.3g", L, terminal_err)
    violations = validate_trajectory(traj, leader, cfg.limits, cfg.dead_zone)
    omega, q = trajectory_q(traj, leader, predictor, cfg)
    ell = ds.insert_trajectory(traj, violations, leader, q, omega, cfg.dead_zone)
    return IterationRecord(ell, traj, omega, q, float(q[0]), subs)


def check_convergence(J_history, eps_conv: float, L_max: int) -> bool:
    """Relative improvement below ``eps_conv``, or the iteration cap reached.

    ``J_history[0]`` is the seed trajectory's cost, so ``len(J_history) - 1``
    learning iterations have completed.
    """
    if len(J_history) < 2:
        raise ValidationError("need at least one completed iteration")
    if len(J_history) - 1 >= L_max:
        return True
    prev, cur = J_history[-2], J_history[-1]
    return abs(cur - prev) <= eps_conv * max(1.0, abs(prev))


def seed_safe_set(x0: VehicleState, leader: Trajectory, predictor: ChannelPredictor, cfg: SrLmpcConfig
                  ) -> tuple[DynamicSafeSet, IterationRecord]:
    """Solve the nominal MPC and store its plan as iteration 0."""
    plan = solve_nominal(x0, leader, cfg.weights, cfg.N, cfg.gap_ref, cfg.limits, tol=cfg.qp_tol)
    traj = plan.trajectory
    traj.iteration = 0
    ds = DynamicSafeSet()
    omega, q = trajectory_q(traj, leader, predictor, cfg)
    ds.insert_trajectory(traj, validate_trajectory(traj, leader, cfg.limits), leader, q, omega, None)
    return ds, IterationRecord(0, traj, omega, q, float(q[0]))


def run(x0: VehicleState, leader: Trajectory, cfg: SrLmpcConfig, predictor: ChannelPredictor
        ) -> SrLmpcResult:
    """Seed from the nominal MPC, then iterate until converged or capped."""
    ds, seed = seed_safe_set(x0, leader, predictor, cfg)
    records = [seed]
    costs = ContinuationCosts(leader, predictor, cfg)
    converged = hit_cap = False
    failure = None
    while True:
        L = len(records)
        try:
            rec = run_iteration(L, ds, predictor, x0, leader, cfg, costs)
        except (InfeasibleError, ValidationError) as exc:
            failure = f"iteration {L}: {exc}"
            log.warning("SR-LMPC stopped: %s", failure)
            break
        records.append(rec)
        log.info("iteration %d: J=%.6f dropped=%d", L, rec.cost, rec.dropped_steps)
        if check_convergence([r.cost for r in records], cfg.eps_conv, cfg.L_max):
            hit_cap = len(records) - 1 >= cfg.L_max
            converged = True
            break
    return SrLmpcResult(records, ds, converged, hit_cap, failure)
