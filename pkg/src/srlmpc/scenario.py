"""Leader/follower/channel co-simulation on one scenario clock.

Both modes share the clock: the leader broadcasts its prediction, the
channel decides whether and when each packet arrives, and a controller turns
the follower state plus the newest delivered packet into an input.

* ``baseline`` re-solves the nominal MPC at every step on the newest
  delivered prediction, with no knowledge of the channel.
* ``srlmpc`` runs the learning loop once at step 0 with the channel
  predictor and then applies the converged inputs.

The planning window of both modes ends at step ``N``, the end of the scenario.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import (LeaderPacket, constant_predictor, dead_zone_predictor, in_zone, prune_stale,
                      simulate_reception)
from .costs import MpcWeights, control_energy
from .dynamics import InputBounds, Trajectory, VehicleState, constant_velocity, step, time_to_collision
from .errors import InfeasibleError, NoUsablePrediction, ValidationError
from .feasibility import SafetyLimits
from .lmpc import SrLmpcConfig, SrLmpcResult, run as run_srlmpc
from .nominal import solve_nominal

log = logging.getLogger(__name__)

MODES = ("baseline", "srlmpc")
SATURATION_TOL = 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    dt: float = 0.2
    N: int = 70
    nu: int = 60
    u_min: float = -6.0
    u_max: float = 6.0
    leader_position: float = 100.0
    leader_speed: float = 30.0
    follower_position: float = 0.0
    follower_speed: float = 35.0
    leader_period: int = 1  # steps between leader broadcasts
    channel: str = "dead_zone"  # or "perfect"
    zone_min: float = 435.0
    zone_max: float = 480.0
    base_omega: float = 0.2  # s, delivery time outside the zone
    gap_ref: float = 15.0
    ttc_min: float = 2.0
    min_gap: float = 5.0
    v_min: float = 0.0
    v_max: float = 50.0
    w_gap: float = 0.005
    w_reference: float = 0.0
    w_effort: float = 1.0
    w_terminal: float = 50.0
    alpha: float = 0.9
    omega_max: float | None = None  # None means 50 * dt
    dead_zone_margin: float = 1.0
    dead_zone_branch: str = "behind"
    fallback_ttc_scale: float = 1.5
    eps_conv: float = 1e-3
    L_max: int = 30
    seed: int = 0

    def __post_init__(self):
        errs = []

        def need(ok, name, msg):
            if not ok:
                errs.append(f"{name}: {msg}")

        need(self.dt > 0, "dt", "must be positive")
        need(self.N >= 2, "N", "must be at least 2")
        need(0 < self.nu < self.N, "nu", f"must satisfy 0 < nu < N (N={self.N})")
        need(self.u_min <= 0 <= self.u_max, "u_min/u_max", "need u_min <= 0 <= u_max")
        need(self.leader_speed >= 0, "leader_speed", "must be nonnegative")
        need(self.follower_speed >= 0, "follower_speed", "must be nonnegative")
        need(self.leader_position > self.follower_position, "leader_position",
             "leader must start ahead of the follower")
        need(self.leader_period >= 1, "leader_period", "must be at least 1")
        need(self.channel in ("dead_zone", "perfect"), "channel", "must be dead_zone or perfect")
        need(self.zone_min < self.zone_max, "zone_min/zone_max", "need zone_min < zone_max")
        need(self.base_omega > 0, "base_omega", "must be positive")
        need(self.gap_ref >= 0, "gap_ref", "must be nonnegative")
        need(self.ttc_min >= 0, "ttc_min", "must be nonnegative")
        need(self.min_gap >= 0, "min_gap", "must be nonnegative")
        need(0 <= self.v_min < self.v_max, "v_min/v_max", "need 0 <= v_min < v_max")
        for name in ("w_gap", "w_reference", "w_effort", "w_terminal"):
            need(getattr(self, name) >= 0, name, "must be nonnegative")
        need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        need(self.omega_max is None or self.omega_max > 0, "omega_max", "must be positive")
        need(self.dead_zone_margin >= 0, "dead_zone_margin", "must be nonnegative")
        need(self.dead_zone_branch in ("behind", "ahead"), "dead_zone_branch", "must be behind or ahead")
        need(self.fallback_ttc_scale >= 1, "fallback_ttc_scale", "must be at least 1")
        need(self.eps_conv > 0, "eps_conv", "must be positive")
        need(self.L_max >= 1, "L_max", "must be at least 1")
        if errs:
            raise ValidationError("; ".join(errs))

    @property
    def resolved_omega_max(self) -> float:
        return 50 * self.dt if self.omega_max is None else self.omega_max

    @property
    def zone(self) -> tuple[float, float] | None:
        return (self.zone_min, self.zone_max) if self.channel == "dead_zone" else None

    @property
    def weights(self) -> MpcWeights:
        return MpcWeights(self.w_gap, self.w_reference, self.w_effort, self.w_terminal)

    @property
    def limits(self) -> SafetyLimits:
        return SafetyLimits(InputBounds(self.u_min, self.u_max), self.ttc_min, self.min_gap,
                            self.v_min, self.v_max)

    def lmpc_config(self) -> SrLmpcConfig:
        return SrLmpcConfig(N=self.N, nu=self.nu, dt=self.dt, weights=self.weights,
                            gap_ref=self.gap_ref, limits=self.limits, alpha=self.alpha,
                            omega_max=self.resolved_omega_max, eps_conv=self.eps_conv,
                            L_max=self.L_max, dead_zone=self.zone,
                            dead_zone_margin=self.dead_zone_margin,
                            dead_zone_branch=self.dead_zone_branch)

    def predictor(self):
        if self.zone is None:
            return constant_predictor(self.base_omega)
        return dead_zone_predictor(self.zone, self.base_omega)

    def echo(self) -> str:
        """Every field with its resolved value, in the config file syntax."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "omega_max":
                value = self.resolved_omega_max
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _parse_value(name: str, raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is str:
            return raw
        return float(raw)
    except ValueError:
        raise ValidationError(f"{name}: cannot parse {raw!r}") from None


_KINDS = {"N": int, "nu": int, "leader_period": int, "L_max": int, "seed": int,
          "channel": str, "dead_zone_branch": str}


def parse_config(text: str, source: str = "<config>", **overrides) -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = {f.name for f in fields(ScenarioConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValidationError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, _KINDS.get(key, float))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(**values)


def load_config(path, **overrides) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path), **overrides)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``bridge.cfg``."""
    ref = resources.files("srlmpc") / "configs" / name
    if not ref.is_file():
        raise ValidationError(f"no bundled config named {name!r}")
    return Path(str(ref))


@dataclass
class IterationRow:
    iteration: int
    cost: float
    saturation_steps: int
    dropout_steps: int
    control_cost: float


@dataclass
class RunArtifact:
    mode: str
    config: ScenarioConfig
    trajectory: Trajectory  # follower states 0..N as applied on the clock
    leader: Trajectory  # leader states 0..N
    delivered: np.ndarray  # packet sent at step t arrives (bool per step)
    effective_horizon: np.ndarray  # usable prediction length at step t
    iterations: list[IterationRow] = field(default_factory=list)
    lmpc: SrLmpcResult | None = None

    @property
    def inputs(self) -> np.ndarray:
        return self.trajectory.inputs

    def metrics(self) -> dict:
        cfg = self.config
        traj, lead = self.trajectory, self.leader
        ttcs = [time_to_collision(traj.state(k), lead.state(k)) for k in range(len(traj))]
        zone = (cfg.zone_min, cfg.zone_max)
        both = in_zone(traj.positions, zone) & in_zone(lead.positions, zone)
        return {
            "control_cost": control_energy(traj.inputs, cfg.dt),
            "dropout_steps": int(np.sum(~self.delivered)),
            "dead_zone_steps": int(np.sum(both)),
            "saturation_steps": saturation_steps(traj.inputs, cfg),
            "min_ttc": float(min(ttcs)),
            "min_gap": float(np.min(lead.positions - traj.positions)),
            "iterations": max(0, len(self.iterations) - 1),  # learning iterations, seed excluded
        }


def saturation_steps(inputs, cfg: ScenarioConfig) -> int:
    u = np.asarray(inputs, dtype=float)
    return int(np.sum((u >= cfg.u_max - SATURATION_TOL) | (u <= cfg.u_min + SATURATION_TOL)))


def leader_trajectory(cfg: ScenarioConfig, n_steps: int) -> Trajectory:
    return constant_velocity(VehicleState(cfg.leader_position, cfg.leader_speed), n_steps, cfg.dt)


class BaselineController:
    """Nominal MPC on the newest delivered prediction, planning up to step N."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def __call__(self, t: int, x: VehicleState, packet: LeaderPacket, n_eff: int) -> float:
        cfg = self.cfg
        n = min(n_eff, cfg.N - t)
        ttc_scale = 1.0
        if n >= 1:
            leader = prune_stale(packet, t).window(0, n)
        else:
            # nothing usable left: extrapolate the last predicted state at constant speed
            last = packet.prediction.state(packet.horizon)
            gap_steps = t - (packet.send_time + packet.horizon)
            start = VehicleState(last.position + last.velocity * gap_steps * cfg.dt, last.velocity)
            n = cfg.N - t
            leader = constant_velocity(start, n, cfg.dt, origin=t)
            ttc_scale = cfg.fallback_ttc_scale
        plan = solve_nominal(x, leader, cfg.weights, n, cfg.gap_ref, cfg.limits,
                             ttc_scale=ttc_scale, origin=t)
        return plan.first_input


class SrLmpcController:
    """Learns once at step 0, then replays the converged inputs."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.result: SrLmpcResult | None = None

    def __call__(self, t: int, x: VehicleState, packet: LeaderPacket, n_eff: int) -> float:
        cfg = self.cfg
        if self.result is None:
            if t != 0 or n_eff < cfg.N:
                raise ValidationError("the learning loop needs a full prediction at step 0")
            leader = prune_stale(packet, t).window(0, cfg.N)
            self.result = run_srlmpc(x, leader, cfg.lmpc_config(), cfg.predictor())
        return float(self.result.final.trajectory.inputs[t])


def run_scenario(cfg: ScenarioConfig, mode: str) -> RunArtifact:
    """Run one mode on the scenario clock; raises ``InfeasibleError`` if a plan fails."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    controller = BaselineController(cfg) if mode == "baseline" else SrLmpcController(cfg)
    N, dt = cfg.N, cfg.dt
    lead = leader_trajectory(cfg, 2 * N)
    channel = cfg.predictor()  # realized delivery uses the same deterministic model

    x = VehicleState(cfg.follower_position, cfg.follower_speed)
    states, inputs = [x], []
    packets: list[LeaderPacket] = []
    omegas: list[float] = []
    delivered = np.zeros(N + 1, dtype=bool)
    n_eff = np.zeros(N + 1, dtype=int)
    for t in range(N + 1):
        omega = float(channel([x.position], [lead.positions[t]], t).omega[0])
        delivered[t] = math.isfinite(omega)
        if t % cfg.leader_period == 0:
            packets.append(LeaderPacket(t, lead.window(t, t + N)))
            omegas.append(omega)
        try:
            packet = simulate_reception(packets, omegas, t, dt)
        except NoUsablePrediction:
            packet = packets[0]  # the initial prediction is known before the run starts
        n_eff[t] = max(0, N - (t - packet.send_time))
        if t == N:
            break
        try:
            u = controller(t, x, packet, int(n_eff[t]))
        except InfeasibleError as exc:
            raise InfeasibleError(f"{mode} step {t}: {exc}", exc.constraints) from exc
        inputs.append(u)
        x = step(x, u, dt)
        states.append(x)

    traj = Trajectory([s.position for s in states], [s.velocity for s in states], inputs, dt)
    artifact = RunArtifact(mode, cfg, traj, lead.window(0, N), delivered, n_eff)
    if mode == "srlmpc":
        res = controller.result
        artifact.lmpc = res
        artifact.iterations = [
            IterationRow(r.iteration, r.cost, saturation_steps(r.trajectory.inputs, cfg),
                         r.dropped_steps, control_energy(r.trajectory.inputs, dt))
            for r in res.records]
    return artifact


def compare(cfg: ScenarioConfig) -> dict:
    """Metrics per mode for the same configuration."""
    out = {}
    for mode in MODES:
        art = run_scenario(cfg, mode)
        m = art.metrics()
        if art.lmpc is not None:
            m["converged"] = art.lmpc.converged
            m["iteration1_control_cost"] = (art.iterations[1].control_cost
                                            if len(art.iterations) > 1 else math.nan)
        out[mode] = (art, m)
    return out


STEP_COLUMNS = ("t", "ego_position", "ego_velocity", "input", "leader_position", "leader_velocity",
                "delivered", "effective_horizon")
ITERATION_COLUMNS = ("iteration", "cost", "saturation_steps", "dropout_steps", "control_cost")
PLOT_COLUMNS = ("series", "iteration", "t", "value")
STEPS_HEADER = "# srlmpc-steps v1"
ITERATIONS_HEADER = "# srlmpc-iterations v1"
PLOT_HEADER = "# srlmpc-plot v1"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def _write(path: Path, header: str, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def emit_csv(artifact: RunArtifact, out_dir) -> tuple[Path, Path]:
    """Write ``<mode>_steps.csv`` (N+1 rows) and ``<mode>_iterations.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj, lead = artifact.trajectory, artifact.leader
    u = np.append(traj.inputs, math.nan)  # no input is applied at the final step
    steps = [(t, traj.positions[t], traj.velocities[t], u[t], lead.positions[t], lead.velocities[t],
              artifact.delivered[t], artifact.effective_horizon[t]) for t in range(len(traj))]
    iters = [tuple(asdict(r).values()) for r in artifact.iterations]
    p_steps = out_dir / f"{artifact.mode}_steps.csv"
    p_iters = out_dir / f"{artifact.mode}_iterations.csv"
    _write(p_steps, STEPS_HEADER, STEP_COLUMNS, steps)
    _write(p_iters, ITERATIONS_HEADER, ITERATION_COLUMNS, iters)
    return p_steps, p_iters


def emit_plot_data(artifact: RunArtifact, path) -> Path:
    """Long-format series: the applied run (iteration -1) plus every learning iteration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []

    def add(traj: Trajectory, iteration: int):
        gap = artifact.leader.positions[:len(traj)] - traj.positions
        for name, values in (("position", traj.positions), ("velocity", traj.velocities),
                             ("gap", gap), ("input", traj.inputs)):
            rows.extend((name, iteration, t, v) for t, v in enumerate(values))

    add(artifact.trajectory, -1)
    rows.extend(("leader_position", -1, t, v) for t, v in enumerate(artifact.leader.positions))
    if artifact.lmpc is not None:
        for rec in artifact.lmpc.records:
            add(rec.trajectory, rec.iteration)
    _write(path, PLOT_HEADER, PLOT_COLUMNS, rows)
    return path
