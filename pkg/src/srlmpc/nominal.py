"""Perfect-communication platooning MPC.

Tracks the leader at ``gap_ref`` with an effort penalty and a 1-norm terminal
gap cost, subject to input bounds, speed bounds, a minimum gap and the
time-to-collision floor written as the linear row
``gap(k) >= ttc_min * (v(k) - v_lead(k))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import MpcWeights, trajectory_cost
from .dynamics import Trajectory, VehicleState, simulate
from .errors import HorizonError, InfeasibleError
from .feasibility import SafetyLimits
from .horizon import HorizonQp, build_horizon_qp
from .qp import QpSolution, solve

QP_MAX_ITER = 1000


@dataclass
class NominalPlan:
    trajectory: Trajectory
    objective: float
    solution: QpSolution

    @property
    def inputs(self) -> np.ndarray:
        return self.trajectory.inputs

    @property
    def first_input(self) -> float:
        return float(self.trajectory.inputs[0])


def build_problem(x_t: VehicleState, leader: Trajectory, weights: MpcWeights, N: int,
                  gap_ref: float, limits: SafetyLimits, forbidden=None,
                  ttc_scale: float = 1.0) -> HorizonQp:
    if len(leader) < N + 1:
        raise HorizonError(f"leader prediction has {len(leader) - 1} steps, need {N}")
    if leader.positions[0] < x_t.position:
        raise HorizonError("follower must start behind the leader")
    return build_horizon_qp(x_t, leader, N, weights, gap_ref, limits, leader.dt,
                            forbidden=forbidden, ttc_scale=ttc_scale)


def plan_from_inputs(hqp: HorizonQp, z, limits: SafetyLimits, origin: int = 0) -> Trajectory:
    u = np.clip(hqp.inputs(z), limits.bounds.lower, limits.bounds.upper)
    return simulate(hqp.x0, u, hqp.dt, origin=origin)


def solve_nominal(x_t: VehicleState, leader: Trajectory, weights: MpcWeights, N: int,
                  gap_ref: float, limits: SafetyLimits, tol: float = 1e-8,
                  forbidden=None, ttc_scale: float = 1.0, origin: int = 0) -> NominalPlan:
    hqp = build_problem(x_t, leader, weights, N, gap_ref, limits, forbidden, ttc_scale)
    sol = solve(hqp.qp, tol=tol, max_iter=QP_MAX_ITER)
    if not sol.ok:
        raise InfeasibleError(f"no feasible trajectory ({sol.status})", hqp.groups)
    traj = plan_from_inputs(hqp, sol.z, limits, origin)
    J = trajectory_cost(traj, leader, weights, gap_ref)
    return NominalPlan(traj, J, sol)
