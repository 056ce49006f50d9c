"""Point-mass longitudinal vehicle model.

States are (position, velocity) along the lane, inputs are accelerations held
constant over one sample period. The update is the exact double-integrator
discretization, so rollouts carry no discretization error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class VehicleState:
    position: float  # m, arc length along the lane
    velocity: float  # m/s

    def __post_init__(self):
        if not (math.isfinite(self.position) and math.isfinite(self.velocity)):
            raise ValidationError(f"nonfinite state {self!r}")
        if self.velocity < 0.0:
            raise ValidationError(f"negative velocity {self.velocity}")

    def as_array(self) -> np.ndarray:
        return np.array([self.position, self.velocity])


@dataclass(frozen=True)
class InputBounds:
    lower: float = -6.0  # m/s^2
    upper: float = 6.0

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValidationError("input bounds must satisfy lower <= upper")

    def contains(self, u: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= u <= self.upper + tol


@dataclass
class Trajectory:
    """States ``0..n`` and the ``n`` inputs between them.

    ``origin`` is the step index of the first state on the scenario clock and
    ``iteration`` the learning iteration that produced the trajectory.
    """

    positions: np.ndarray
    velocities: np.ndarray
    inputs: np.ndarray
    dt: float
    origin: int = 0
    iteration: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 1:
            raise ValidationError("positions and velocities must be 1-D of equal length")
        if len(self.inputs) != len(self.positions) - 1:
            raise ValidationError("need exactly one input per transition")

    def __len__(self):
        return len(self.positions)

    @property
    def horizon(self) -> int:
        return len(self.inputs)

    @property
    def states(self) -> list[VehicleState]:
        return [VehicleState(float(p), float(v)) for p, v in zip(self.positions, self.velocities)]

    def state(self, k: int) -> VehicleState:
        return VehicleState(float(self.positions[k]), float(self.velocities[k]))

    def window(self, start: int, stop: int) -> "Trajectory":
        """States ``start..stop`` (inclusive) as a new trajectory."""
        return Trajectory(self.positions[start:stop + 1], self.velocities[start:stop + 1],
                          self.inputs[start:stop], self.dt, self.origin + start, self.iteration)


def step(state: VehicleState, u: float, dt: float) -> VehicleState:
    """Advance one sample period with constant acceleration ``u``.

    A vehicle braking to a standstill inside the period stops there rather
    than reversing.
    """
    if not (math.isfinite(u) and math.isfinite(dt)):
        raise ValidationError("nonfinite input or dt")
    if dt <= 0:
        raise ValidationError("dt must be positive")
    p, v = state.position, state.velocity
    v_next = v + u * dt
    if v_next >= 0.0:
        return VehicleState(p + v * dt + 0.5 * u * dt * dt, v_next)
    t_stop = -v / u
    return VehicleState(p + v * t_stop + 0.5 * u * t_stop * t_stop, 0.0)


def simulate(x0: VehicleState, inputs: Sequence[float], dt: float,
             bounds: InputBounds | None = None, origin: int = 0, iteration: int = 0) -> Trajectory:
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if bounds is not None:
        bad = [i for i, u in enumerate(inputs) if not bounds.contains(u)]
        if bad:
            raise ValidationError(f"inputs out of bounds at steps {bad[:5]}")
    pos = np.empty(len(inputs) + 1)
    vel = np.empty(len(inputs) + 1)
    pos[0], vel[0] = x0.position, x0.velocity
    x = x0
    for k, u in enumerate(inputs):
        x = step(x, float(u), dt)
        pos[k + 1], vel[k + 1] = x.position, x.velocity
    return Trajectory(pos, vel, inputs, dt, origin, iteration)


def dynamics_residual(traj: Trajectory) -> float:
    """Largest deviation between stored successors and ``step`` of their predecessors."""
    worst = 0.0
    for k, u in enumerate(traj.inputs):
        nxt = step(traj.state(k), float(u), traj.dt)
        worst = max(worst, abs(nxt.position - traj.positions[k + 1]),
                    abs(nxt.velocity - traj.velocities[k + 1]))
    return worst


def time_to_collision(ego: VehicleState, lead: VehicleState) -> float:
    """Gap over closing speed, or ``inf`` when the follower is not closing."""
    gap = lead.position - ego.position
    if gap < 0:
        raise ValidationError(f"leader ({lead.position}) is behind ego ({ego.position})")
    closing = ego.velocity - lead.velocity
    if closing <= 0:
        return math.inf
    return gap / closing


def constant_velocity(x0: VehicleState, n_steps: int, dt: float, origin: int = 0) -> Trajectory:
    """Unforced rollout, used for the leader and for extrapolation."""
    return simulate(x0, np.zeros(n_steps), dt, origin=origin)
