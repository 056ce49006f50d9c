import numpy as np
import pytest

from srlmpc.costs import MpcWeights, control_energy, stage_costs, terminal_cost, trajectory_cost
from srlmpc.dynamics import Trajectory, VehicleState, constant_velocity, simulate
from srlmpc.errors import ValidationError
from srlmpc.feasibility import SafetyLimits, validate_trajectory

LIMITS = SafetyLimits()


def lead(p=100.0, v=30.0, n=10):
    return constant_velocity(VehicleState(p, v), n, 0.2)


def test_clean_trajectory_passes():
    assert validate_trajectory(simulate(VehicleState(0.0, 30.0), np.zeros(10), 0.2), lead(), LIMITS) == []


@pytest.mark.parametrize("traj,needle", [
    (Trajectory(np.arange(11) * 6.0 + np.eye(11)[-1], np.full(11, 30.0), np.zeros(10), 0.2), "residual"),
    (simulate(VehicleState(0.0, 30.0), [7.0] + [0.0] * 9, 0.2), "out of bounds"),
    (simulate(VehicleState(0.0, 49.9), np.full(10, 1.0), 0.2), "velocity"),
    (simulate(VehicleState(96.0, 30.0), np.zeros(10), 0.2), "gap"),
    (simulate(VehicleState(50.0, 60.0 - 15.0), np.zeros(10), 0.2), "time to collision"),
])
def test_violations_are_named(traj, needle):
    problems = validate_trajectory(traj, lead(), LIMITS)
    assert any(needle in p for p in problems), problems


def test_dead_zone_rule():
    leader = lead(440.0, 0.0)
    traj = simulate(VehicleState(420.0, 0.0), np.zeros(10), 0.2)
    assert validate_trajectory(traj, leader, LIMITS, dead_zone=(435.0, 480.0)) == []
    traj = simulate(VehicleState(436.0, 0.0), np.zeros(10), 0.2)
    problems = validate_trajectory(traj, leader, SafetyLimits(min_gap=0.0), dead_zone=(435.0, 480.0))
    assert any("dead zone" in p for p in problems)


def test_short_leader():
    assert validate_trajectory(simulate(VehicleState(0.0, 30.0), np.zeros(10), 0.2), lead(n=5), LIMITS)


def test_costs():
    w = MpcWeights(gap=2.0, reference=1.0, effort=0.5, terminal=4.0)
    traj = simulate(VehicleState(0.0, 30.0), [1.0, -1.0], 0.2)
    leader = lead(20.0, 30.0, 2)
    e_p = leader.positions[1:] - traj.positions[1:] - 15.0
    e_v = leader.velocities[1:] - traj.velocities[1:]
    expected = 3.0 * e_p ** 2 + e_v ** 2 + 0.5 * np.array([1.0, 1.0])
    np.testing.assert_allclose(stage_costs(traj, leader, w, 15.0), expected)
    assert terminal_cost(traj, leader, w, 15.0) == pytest.approx(4.0 * abs(e_p[-1]))
    assert trajectory_cost(traj, leader, w, 15.0) == pytest.approx(expected.sum() + 4.0 * abs(e_p[-1]))
    assert control_energy([1.0, -2.0], 0.2) == pytest.approx(1.0)


def test_weight_validation():
    with pytest.raises(ValidationError):
        MpcWeights(gap=-1.0)
    with pytest.raises(ValidationError):
        MpcWeights(gap=0.0, reference=0.0, effort=0.0)
    with pytest.raises(ValidationError):
        SafetyLimits(v_min=5.0, v_max=1.0)
