import numpy as np
import pytest

from srlmpc.channel import LeaderPacket
from srlmpc.dynamics import VehicleState, constant_velocity
from srlmpc.errors import ValidationError
from srlmpc.scenario import (ITERATIONS_HEADER, ITERATION_COLUMNS, PLOT_COLUMNS, PLOT_HEADER,
                             STEPS_HEADER, STEP_COLUMNS, BaselineController, ScenarioConfig,
                             bundled_config, compare, emit_csv, emit_plot_data, load_config,
                             parse_config, run_scenario)


@pytest.fixture(scope="module")
def bridge():
    return load_config(bundled_config("bridge.cfg"))


@pytest.fixture(scope="module")
def bridge_runs(bridge):
    return {mode: run_scenario(bridge, mode) for mode in ("baseline", "srlmpc")}


def test_bundled_bridge_values(bridge):
    assert (bridge.dt, bridge.N, bridge.nu) == (0.2, 70, 60)
    assert (bridge.u_min, bridge.u_max) == (-6.0, 6.0)
    assert (bridge.leader_speed, bridge.follower_speed) == (30.0, 35.0)
    assert bridge.zone == (435.0, 480.0)


def test_nu_not_below_n_is_rejected():
    with pytest.raises(ValidationError, match="nu"):
        parse_config("N = 60\nnu = 60\n")


def test_range_errors_name_the_field():
    with pytest.raises(ValidationError, match="alpha"):
        parse_config("alpha = 1.5\n")
    with pytest.raises(ValidationError, match="zone_min"):
        parse_config("zone_min = 500\n")


def test_missing_alpha_defaults_and_echoes():
    cfg = parse_config("dt = 0.2\n")
    assert cfg.alpha == 0.9
    echo = cfg.echo()
    assert "alpha = 0.9\n" in echo
    assert "omega_max = 10.0\n" in echo  # resolved from 50 * dt


def test_echo_round_trips(bridge):
    assert parse_config(bridge.echo()) == bridge


@pytest.mark.parametrize("text,msg", [
    ("speed = 3\n", "unknown key"),
    ("dt = 0.2\ndt = 0.1\n", "duplicate"),
    ("N = seventy\n", "cannot parse"),
    ("just words\n", "key = value"),
])
def test_strict_schema(text, msg):
    with pytest.raises(ValidationError, match=msg):
        parse_config(text)


def test_overrides_apply():
    cfg = parse_config("seed = 1\n", seed=7, L_max=None)
    assert cfg.seed == 7 and cfg.L_max == 30


def test_missing_bundled_config():
    with pytest.raises(ValidationError):
        bundled_config("nope.cfg")


def test_unknown_mode(bridge):
    with pytest.raises(ValidationError):
        run_scenario(bridge, "fancy")


def test_baseline_loses_packets(bridge_runs):
    m = bridge_runs["baseline"].metrics()
    assert m["dead_zone_steps"] >= 1 and m["dropout_steps"] >= 1


def test_srlmpc_avoids_zone(bridge_runs):
    m = bridge_runs["srlmpc"].metrics()
    assert m["dead_zone_steps"] == 0 and m["dropout_steps"] == 0


def test_applied_run_is_converged_iteration(bridge_runs):
    art = bridge_runs["srlmpc"]
    np.testing.assert_array_equal(art.trajectory.inputs, art.lmpc.final.trajectory.inputs)


def test_effective_horizon_tracks_staleness(bridge_runs):
    art = bridge_runs["baseline"]
    assert art.effective_horizon[0] == 70
    stale = ~art.delivered[:-1]
    # every dropped packet shrinks the usable horizon below N at the next step
    assert np.all(art.effective_horizon[1:][stale] < 70)


def test_fallback_when_prediction_is_fully_stale(bridge):
    ctl = BaselineController(bridge)
    packet = LeaderPacket(0, constant_velocity(VehicleState(150.0, 30.0), 5, 0.2))
    u = ctl(10, VehicleState(60.0, 30.0), packet, 0)
    assert bridge.u_min <= u <= bridge.u_max


def test_perfect_channel_modes_agree():
    cfg = load_config(bundled_config("perfect.cfg"))
    out = compare(cfg)
    (a, ma), (b, mb) = out["baseline"], out["srlmpc"]
    np.testing.assert_allclose(a.trajectory.positions, b.trajectory.positions, atol=1e-3)
    np.testing.assert_allclose(a.trajectory.velocities, b.trajectory.velocities, atol=1e-3)
    for key in ("control_cost", "dropout_steps", "saturation_steps", "min_ttc", "min_gap"):
        assert ma[key] == pytest.approx(mb[key], abs=1e-3)


def test_csv_is_byte_stable(bridge, tmp_path):
    for name in ("a", "b"):
        art = run_scenario(bridge, "srlmpc")
        emit_csv(art, tmp_path / name)
        emit_plot_data(art, tmp_path / name / "plot.csv")
    for fname in ("srlmpc_steps.csv", "srlmpc_iterations.csv", "plot.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_csv_schema_and_rows(bridge, bridge_runs, tmp_path):
    art = bridge_runs["srlmpc"]
    steps, iters = emit_csv(art, tmp_path)
    lines = steps.read_bytes().decode().split("\n")
    assert b"\r" not in steps.read_bytes()
    assert lines[0] == STEPS_HEADER and lines[1] == ",".join(STEP_COLUMNS)
    assert len(lines[2:-1]) == bridge.N + 1
    ilines = iters.read_text().splitlines()
    assert ilines[0] == ITERATIONS_HEADER and ilines[1] == ",".join(ITERATION_COLUMNS)
    assert len(ilines[2:]) == len(art.lmpc.records)
    assert ilines[2].startswith("0,")  # the seed trajectory is row 0
    plot = emit_plot_data(art, tmp_path / "plot.csv").read_text().splitlines()
    assert plot[0] == PLOT_HEADER and plot[1] == ",".join(PLOT_COLUMNS)


def test_nine_significant_digits(bridge_runs, tmp_path):
    steps, _ = emit_csv(bridge_runs["baseline"], tmp_path)
    row = steps.read_text().splitlines()[3].split(",")
    mantissa = row[1].replace(".", "").replace("-", "").split("e")[0].lstrip("0")
    assert len(mantissa) <= 9


def test_config_rejects_leader_behind():
    with pytest.raises(ValidationError, match="leader_position"):
        ScenarioConfig(leader_position=0.0)
