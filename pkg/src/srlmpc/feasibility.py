"""Independent constraint audit for planned and stored trajectories.

Everything here is evaluated pointwise from the dynamics and TTC definitions,
never from the QP rows, so it can catch formulation mistakes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import in_zone
from .dynamics import InputBounds, Trajectory, dynamics_residual, time_to_collision
from .errors import ValidationError


@dataclass(frozen=True)
class SafetyLimits:
    bounds: InputBounds = InputBounds()
    ttc_min: float = 2.0  # s
    min_gap: float = 5.0  # m
    v_min: float = 0.0
    v_max: float = 50.0

    def __post_init__(self):
        if self.ttc_min < 0 or self.min_gap < 0:
            raise ValidationError("ttc_min and min_gap must be nonnegative")
        if not 0 <= self.v_min < self.v_max:
            raise ValidationError("velocity bounds must satisfy 0 <= v_min < v_max")


def validate_trajectory(traj: Trajectory, leader: Trajectory, limits: SafetyLimits,
                        dead_zone: tuple[float, float] | None = None,
                        tol: float = 1e-6, residual_tol: float = 1e-10) -> list[str]:
    """Return a list of violations; an empty list means feasible.

    ``dead_zone`` enforces the rule that the follower is never inside the zone
    while the leader is.
    """
    problems = []
    if len(leader) < len(traj):
        return [f"leader prediction covers {len(leader)} states, need {len(traj)}"]
    res = dynamics_residual(traj)
    if res > residual_tol:
        problems.append(f"dynamics residual {res:.3g}")
    for k, u in enumerate(traj.inputs):
        if not limits.bounds.contains(float(u), tol=1e-9):
            problems.append(f"input {u:.6g} out of bounds at step {k}")
    for k in range(1, len(traj)):
        ego, lead = traj.state(k), leader.state(k)
        if not limits.v_min - tol <= ego.velocity <= limits.v_max + tol:
            problems.append(f"velocity {ego.velocity:.6g} out of bounds at step {k}")
        gap = lead.position - ego.position
        if gap < limits.min_gap - tol:
            problems.append(f"gap {gap:.6g} below minimum at step {k}")
            continue
        ttc = time_to_collision(ego, lead)
        closing = ego.velocity - lead.velocity
        if math.isfinite(ttc) and ttc < limits.ttc_min and gap < limits.ttc_min * closing - tol:
            problems.append(f"time to collision {ttc:.4g}s below {limits.ttc_min}s at step {k}")
        if dead_zone is not None and in_zone(lead.position, dead_zone) and in_zone(ego.position, dead_zone):
            problems.append(f"both vehicles in dead zone at step {k}")
    return problems
