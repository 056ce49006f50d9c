"""Stage and terminal costs shared by the nominal MPC, SR-LMPC and the safe set.

With gap error ``e_p = p_lead - p - gap_ref`` and speed error
``e_v = v_lead - v``, the cost of applying input ``u(k)`` is

    z(k) = gap * e_p(k+1)**2 + reference * (e_p(k+1)**2 + e_v(k+1)**2) + effort * u(k)**2

and the terminal cost is ``terminal * |e_p(N)|``. The reference trajectory is
the leader shifted back by ``gap_ref``, so ``reference`` adds speed matching
on top of gap keeping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import ValidationError


@dataclass(frozen=True)
class MpcWeights:
    gap: float = 1.0
    reference: float = 0.0
    effort: float = 1.0
    terminal: float = 1.0

    def __post_init__(self):
        for name in ("gap", "reference", "effort", "terminal"):
            if getattr(self, name) < 0:
                raise ValidationError(f"weight {name} must be nonnegative")
        if self.gap == 0 and self.reference == 0 and self.effort == 0:
            raise ValidationError("at least one running weight must be positive")


def _aligned(traj: Trajectory, leader: Trajectory):
    if len(leader) < len(traj):
        raise ValidationError(f"leader covers {len(leader)} states, trajectory needs {len(traj)}")
    return leader.positions[:len(traj)], leader.velocities[:len(traj)]


def stage_costs(traj: Trajectory, leader: Trajectory, weights: MpcWeights, gap_ref: float) -> np.ndarray:
    lp, lv = _aligned(traj, leader)
    e_p = lp[1:] - traj.positions[1:] - gap_ref
    e_v = lv[1:] - traj.velocities[1:]
    return ((weights.gap + weights.reference) * e_p ** 2 + weights.reference * e_v ** 2
            + weights.effort * traj.inputs ** 2)


def terminal_cost(traj: Trajectory, leader: Trajectory, weights: MpcWeights, gap_ref: float) -> float:
    lp, _ = _aligned(traj, leader)
    return float(weights.terminal * abs(lp[-1] - traj.positions[-1] - gap_ref))


def trajectory_cost(traj, leader, weights, gap_ref) -> float:
    return float(stage_costs(traj, leader, weights, gap_ref).sum()
                 + terminal_cost(traj, leader, weights, gap_ref))


def control_energy(inputs, dt: float) -> float:
    """Sum of u**2 * dt, the effort metric reported in comparisons."""
    inputs = np.asarray(inputs, dtype=float)
    return float(np.sum(inputs ** 2) * dt)
