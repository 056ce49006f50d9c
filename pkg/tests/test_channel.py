import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srlmpc.channel import (DROPPED, DeliveryProfile, LeaderPacket, TablePredictor,
                            constant_predictor, dead_zone_predictor, delay_steps,
                            discounted_comm_cost, effective_horizon, prune_stale,
                            simulate_reception)
from srlmpc.dynamics import VehicleState, constant_velocity
from srlmpc.errors import NoUsablePrediction, ValidationError

ZONE = (435.0, 480.0)


@pytest.mark.parametrize("ego,lead,dropped", [(400, 450, False), (440, 460, True), (500, 520, False)])
def test_dead_zone_rule(ego, lead, dropped):
    prof = dead_zone_predictor(ZONE, 0.2)([ego], [lead])
    assert bool(prof.dropped[0]) == dropped
    if not dropped:
        assert prof.omega[0] == 0.2


def test_dead_zone_costed_penalty():
    prof = dead_zone_predictor(ZONE, 0.2)([440, 400], [460, 450])
    np.testing.assert_array_equal(prof.costed(10.0), [10.0, 0.2])


def test_dead_zone_rejects_bad_zone():
    with pytest.raises(ValidationError):
        dead_zone_predictor((480.0, 435.0), 0.2)


@given(shift=st.floats(-400, 400), ego=st.floats(0, 1000), lead=st.floats(0, 1000))
def test_dead_zone_translation_symmetry(shift, ego, lead):
    pred = dead_zone_predictor(ZONE, 0.2)
    moved = dead_zone_predictor((ZONE[0] + shift, ZONE[1] + shift), 0.2)
    a = pred([ego], [lead]).dropped[0]
    b = moved([ego + shift], [lead + shift]).dropped[0]
    inside = lambda x, z: z[0] <= x <= z[1]
    same_membership = (inside(ego, ZONE) == inside(ego + shift, (ZONE[0] + shift, ZONE[1] + shift))
                       and inside(lead, ZONE) == inside(lead + shift, (ZONE[0] + shift, ZONE[1] + shift)))
    if same_membership:  # rounding at the zone edge can flip membership
        assert a == b


def _packet(t_m, N=70):
    return LeaderPacket(t_m, constant_velocity(VehicleState(100.0 + 6.0 * t_m, 30.0), N, 0.2, origin=t_m))


def test_prune_stale_examples():
    assert len(prune_stale(_packet(7), 10)) == 68
    assert prune_stale(_packet(7), 10).origin == 10
    p = _packet(3)
    np.testing.assert_array_equal(prune_stale(p, 3).positions, p.prediction.positions)
    assert len(prune_stale(p, 73)) == 1


def test_prune_stale_errors():
    with pytest.raises(NoUsablePrediction):
        prune_stale(_packet(0), 71)
    with pytest.raises(ValidationError):
        prune_stale(_packet(5), 4)


def test_effective_horizon_examples():
    assert effective_horizon(13, 10, 70) == 67
    assert effective_horizon(10, 10, 70) == 70
    assert effective_horizon(80, 10, 70) == 0
    with pytest.raises(ValidationError):
        effective_horizon(81, 10, 70)


@given(t_m=st.integers(0, 50), age=st.integers(0, 70))
def test_prune_length_matches_horizon(t_m, age):
    assert len(prune_stale(_packet(t_m), t_m + age)) == effective_horizon(t_m + age, t_m, 70) + 1


def test_discounted_cost_examples():
    assert discounted_comm_cost([2, 2, 2], 0.5) == pytest.approx(3.5, abs=1e-15)
    assert discounted_comm_cost([1.7], 0.3) == 1.7
    with pytest.raises(ValidationError):
        discounted_comm_cost([1.0], 1.0)


@given(w=st.floats(0.01, 20), n=st.integers(1, 100), alpha=st.floats(0.01, 0.99))
def test_discounted_geometric(w, n, alpha):
    closed = w * (1 - alpha ** n) / (1 - alpha)
    assert discounted_comm_cost([w] * n, alpha) == pytest.approx(closed, rel=1e-12)


@given(omega=st.lists(st.floats(0.01, 10), min_size=1, max_size=20), data=st.data(),
       alpha=st.floats(0.01, 0.99))
def test_discounted_monotone_in_omega(omega, data, alpha):
    k = data.draw(st.integers(0, len(omega) - 1))
    bumped = list(omega)
    bumped[k] += data.draw(st.floats(0, 5))
    assert discounted_comm_cost(bumped, alpha) >= discounted_comm_cost(omega, alpha)


@given(w=st.floats(0.01, 10), n=st.integers(1, 30), a1=st.floats(0.01, 0.99), a2=st.floats(0.01, 0.99))
def test_discounted_monotone_in_alpha(w, n, a1, a2):
    lo, hi = sorted((a1, a2))
    assert discounted_comm_cost([w] * n, lo) <= discounted_comm_cost([w] * n, hi) * (1 + 1e-12)


def test_delay_quantization():
    assert delay_steps(0.2, 0.2) == 1
    assert delay_steps(0.39, 0.2) == 1
    assert delay_steps(0.4, 0.2) == 2
    with pytest.raises(ValidationError):
        delay_steps(DROPPED, 0.2)


def test_reception_examples():
    packets = [_packet(t) for t in range(3)]
    assert simulate_reception(packets, [0.2] * 3, 3, 0.2).send_time == 2
    packets = [_packet(4), _packet(5)]
    assert simulate_reception(packets, [0.2, DROPPED], 7, 0.2).send_time == 4
    with pytest.raises(NoUsablePrediction):
        simulate_reception(packets, [DROPPED, DROPPED], 7, 0.2)


def test_reception_requires_sorted_schedule():
    with pytest.raises(ValidationError):
        simulate_reception([_packet(2), _packet(1)], [0.2, 0.2], 5, 0.2)


def test_delivery_profile_validation():
    with pytest.raises(ValidationError):
        DeliveryProfile([0.2, 0.0])
    assert DeliveryProfile([0.2, math.inf]).dropped.tolist() == [False, True]


def test_constant_predictor():
    prof = constant_predictor(0.2)(np.zeros(5), np.ones(5), 3)
    assert len(prof) == 5 and prof.first_step == 3 and np.all(prof.omega == 0.2)


def test_table_predictor(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("# lookup\nego_bucket,lead_bucket,omega\n43,46,inf\n44,46,0.6\n")
    pred = TablePredictor.load(path, bucket=10.0, default=0.2)
    prof = pred([435.0, 441.0, 100.0], [460.0, 465.0, 120.0])
    assert prof.dropped.tolist() == [True, False, False]
    np.testing.assert_array_equal(prof.omega[1:], [0.6, 0.2])


def test_table_predictor_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("ego,lead,omega\n")
    with pytest.raises(ValidationError):
        TablePredictor.load(path, 10.0, 0.2)
