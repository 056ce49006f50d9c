"""Condensed finite-horizon QPs for the point-mass follower.

Decision vector: inputs u(0..n-1), optionally followed by one slack for the
1-norm terminal cost. Positions and velocities are affine in u:

    p(k) = p0 + k*dt*v0 + Sp[k-1] @ u,   v(k) = v0 + Sv[k-1] @ u,   k = 1..n
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .costs import MpcWeights
from .dynamics import Trajectory, VehicleState
from .errors import HorizonError, ValidationError
from .feasibility import SafetyLimits
from .qp import QpProblem


@lru_cache(maxsize=64)
def rollout_matrices(n: int, dt: float):
    k = np.arange(1, n + 1)[:, None]
    j = np.arange(n)[None, :]
    lower = j < k
    Sp = np.where(lower, dt * dt * (k - j - 0.5), 0.0)
    Sv = np.where(lower, dt, 0.0)
    Sp.setflags(write=False)
    Sv.setflags(write=False)
    return Sp, Sv


def free_response(x0: VehicleState, n: int, dt: float):
    k = np.arange(1, n + 1)
    return x0.position + k * dt * x0.velocity, np.full(n, x0.velocity)


@dataclass
class HorizonQp:
    qp: QpProblem
    n_inputs: int
    x0: VehicleState
    dt: float
    groups: dict = field(default_factory=dict)  # constraint group -> slice of A_in rows
    terminal_rows: tuple | None = None  # (E, e_free): E @ u = target - e_free pins the end state

    def inputs(self, z) -> np.ndarray:
        return np.asarray(z[:self.n_inputs], dtype=float)

    def pin_terminal(self, state: VehicleState) -> QpProblem:
        E, e_free = self.terminal_rows
        b = np.array([state.position, state.velocity]) - e_free
        q = self.qp
        return QpProblem(q.H, q.g, E, b, q.A_in, q.b_in, q.lb, q.ub, q.const)


def build_horizon_qp(x0: VehicleState, leader: Trajectory, n: int, weights: MpcWeights,
                     gap_ref: float, limits: SafetyLimits, dt: float,
                     forbidden=None, branch: str = "behind", margin: float = 1.0,
                     terminal_cost: bool = True, ttc_scale: float = 1.0) -> HorizonQp:
    """Assemble the tracking/effort QP over ``n`` steps against ``leader`` states ``0..n``.

    ``forbidden[k-1]`` is ``None`` or an interval the follower must avoid at
    step ``k``; ``branch`` picks the side it stays on.
    """
    if n < 1:
        raise HorizonError("horizon must contain at least one step")
    if len(leader) < n + 1:
        raise HorizonError(f"leader prediction covers {len(leader) - 1} steps, horizon needs {n}")
    if branch not in ("behind", "ahead"):
        raise ValidationError(f"unknown dead-zone branch {branch!r}")
    Sp, Sv = rollout_matrices(n, dt)
    p_free, v_free = free_response(x0, n, dt)
    pL = leader.positions[1:n + 1]
    vL = leader.velocities[1:n + 1]

    wp = weights.gap + weights.reference
    wv = weights.reference
    r_p = pL - gap_ref - p_free
    r_v = vL - v_free
    H = 2.0 * (wp * Sp.T @ Sp + wv * Sv.T @ Sv + weights.effort * np.eye(n))
    g = -2.0 * (wp * Sp.T @ r_p + wv * Sv.T @ r_v)
    const = float(wp * r_p @ r_p + wv * r_v @ r_v)

    gamma = limits.ttc_min * ttc_scale
    blocks, rhs, groups = [], [], {}

    def add(name, A, b):
        start = sum(len(x) for x in rhs)
        blocks.append(A)
        rhs.append(b)
        groups[name] = slice(start, start + len(b))

    add("ttc", Sp + gamma * Sv, pL - p_free + gamma * (vL - v_free))
    add("min_gap", Sp, pL - p_free - limits.min_gap)
    add("v_max", Sv, limits.v_max - v_free)
    add("v_min", -Sv, v_free - limits.v_min)
    if forbidden is not None:
        rows = [k for k, iv in enumerate(forbidden[:n]) if iv is not None]
        if rows:
            if branch == "behind":
                A = Sp[rows]
                b = np.array([forbidden[k][0] - margin for k in rows]) - p_free[rows]
            else:
                A = -Sp[rows]
                b = p_free[rows] - np.array([forbidden[k][1] + margin for k in rows])
            add("dead_zone", A, b)

    lb = np.full(n, limits.bounds.lower)
    ub = np.full(n, limits.bounds.upper)
    A_in = np.vstack(blocks)
    b_in = np.concatenate(rhs)
    nz = n
    if terminal_cost and weights.terminal > 0:
        # slack s >= |e_p(n)|, costed linearly
        nz = n + 1
        H = np.pad(H, ((0, 1), (0, 1)))
        g = np.append(g, weights.terminal)
        A_in = np.hstack([A_in, np.zeros((len(b_in), 1))])
        last = Sp[-1]
        slack_rows = np.array([np.append(-last, -1.0), np.append(last, -1.0)])
        start = len(b_in)
        A_in = np.vstack([A_in, slack_rows])
        b_in = np.concatenate([b_in, [-r_p[-1], r_p[-1]]])
        groups["terminal"] = slice(start, start + 2)
        lb = np.append(lb, 0.0)
        ub = np.append(ub, np.inf)

    E = np.zeros((2, nz))
    E[0, :n] = Sp[-1]
    E[1, :n] = Sv[-1]
    e_free = np.array([p_free[-1], v_free[-1]])
    qp = QpProblem(H, g, A_in=A_in, b_in=b_in, lb=lb, ub=ub, const=const)
    return HorizonQp(qp, n, x0, dt, groups, (E, e_free))
