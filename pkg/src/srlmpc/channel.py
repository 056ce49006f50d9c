"""V2V channel model: delivery times, packet staleness, effective horizon.

A channel predictor is any callable

    predictor(ego_positions, leader_positions, first_step) -> DeliveryProfile

that returns the expected delivery time of a packet sent at each step. The
controller treats it as a black box.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import NoUsablePrediction, ValidationError

DROPPED = math.inf


@dataclass
class DeliveryProfile:
    """Delivery time (s) of a packet sent at steps ``first_step, first_step+1, ...``.

    ``inf`` marks a dropped packet. ``costed`` replaces it with a finite
    penalty for use inside objective functions.
    """

    omega: np.ndarray
    first_step: int = 0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if np.any(np.isnan(self.omega)) or np.any(self.omega <= 0):
            raise ValidationError("delivery times must be positive (or inf for dropped)")

    def __len__(self):
        return len(self.omega)

    @property
    def dropped(self) -> np.ndarray:
        return ~np.isfinite(self.omega)

    def costed(self, omega_max: float) -> np.ndarray:
        return np.where(self.dropped, omega_max, np.minimum(self.omega, omega_max))


class ChannelPredictor(Protocol):
    def __call__(self, ego_positions: np.ndarray, leader_positions: np.ndarray,
                 first_step: int = 0) -> DeliveryProfile: ...


def in_zone(position, zone) -> np.ndarray:
    lo, hi = zone
    position = np.asarray(position, dtype=float)
    return (position >= lo) & (position <= hi)


def dead_zone_predictor(zone: tuple[float, float], base_omega: float) -> ChannelPredictor:
    """Packets drop whenever both vehicles are inside ``zone`` at the same step."""
    lo, hi = zone
    if not lo < hi:
        raise ValidationError(f"dead zone must satisfy min < max, got {zone}")
    if not base_omega > 0:
        raise ValidationError("base_omega must be positive")

    def predict(ego_positions, leader_positions, first_step=0):
        both = in_zone(ego_positions, zone) & in_zone(leader_positions, zone)
        return DeliveryProfile(np.where(both, DROPPED, base_omega), first_step)

    predict.zone = (float(lo), float(hi))
    return predict


def constant_predictor(omega: float) -> ChannelPredictor:
    """A perfect channel: every packet takes ``omega`` seconds."""

    def predict(ego_positions, leader_positions, first_step=0):
        return DeliveryProfile(np.full(len(np.asarray(ego_positions)), float(omega)), first_step)

    predict.zone = None
    return predict


@dataclass
class TablePredictor:
    """Lookup-table oracle keyed by bucketed (ego, leader) positions.

    File format, CSV with header ``ego_bucket,lead_bucket,omega``; bucket ``b``
    covers positions ``[b*bucket, (b+1)*bucket)``. ``omega`` is seconds or
    ``inf`` for a dropped packet. Missing cells fall back to ``default``.
    """

    table: dict
    bucket: float
    default: float
    zone = None

    @classmethod
    def load(cls, path, bucket: float, default: float) -> "TablePredictor":
        table = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.startswith("#"))
            missing = {"ego_bucket", "lead_bucket", "omega"} - set(reader.fieldnames or ())
            if missing:
                raise ValidationError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                table[int(row["ego_bucket"]), int(row["lead_bucket"])] = float(row["omega"])
        return cls(table, float(bucket), float(default))

    def __call__(self, ego_positions, leader_positions, first_step=0):
        ego_b = np.floor(np.asarray(ego_positions, dtype=float) / self.bucket).astype(int)
        lead_b = np.floor(np.asarray(leader_positions, dtype=float) / self.bucket).astype(int)
        omega = [self.table.get((int(a), int(b)), self.default) for a, b in zip(ego_b, lead_b)]
        return DeliveryProfile(np.asarray(omega, dtype=float), first_step)


@dataclass
class LeaderPacket:
    send_time: int
    prediction: Trajectory  # leader states send_time .. send_time + N

    @property
    def horizon(self) -> int:
        return len(self.prediction) - 1


def effective_horizon(now: int, t_m: int, N: int) -> int:
    """Usable prediction length once the ``now - t_m`` stale states are dropped."""
    if not t_m <= now <= t_m + N:
        raise ValidationError(f"need t_m <= now <= t_m + N, got t_m={t_m}, now={now}, N={N}")
    return N - (now - t_m)


def prune_stale(packet: LeaderPacket, now: int) -> Trajectory:
    """Leader states ``now .. t_m + N`` from a packet sent at ``t_m``."""
    t_m = packet.send_time
    if now < t_m:
        raise ValidationError(f"packet sent at {t_m} cannot be used at {now}")
    if now > t_m + packet.horizon:
        raise NoUsablePrediction(f"packet from step {t_m} is fully stale at step {now}")
    return packet.prediction.window(now - t_m, packet.horizon)


def discounted_comm_cost(omega: Sequence[float], alpha: float) -> float:
    """Sum of delivery times weighted ``alpha**(last - k)``; the last step weighs 1."""
    _check_alpha(alpha)
    omega = np.asarray(omega, dtype=float)
    weights = alpha ** np.arange(len(omega) - 1, -1, -1, dtype=float)
    return float(weights @ omega)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")


def delay_steps(omega: float, dt: float) -> int:
    """Whole steps ``j`` with ``j*dt <= omega < (j+1)*dt``."""
    if not math.isfinite(omega):
        raise ValidationError("a dropped packet has no delay")
    return int(math.floor(omega / dt + 1e-9))


def simulate_reception(packets: Sequence[LeaderPacket], omegas: Sequence[float], now: int,
                       dt: float) -> LeaderPacket:
    """Newest packet that has arrived by ``now``; dropped packets never arrive."""
    sends = [pk.send_time for pk in packets]
    if sends != sorted(sends):
        raise ValidationError("packet schedule must be sorted by send time")
    best = None
    for packet, omega in zip(packets, omegas):
        if not math.isfinite(omega) or packet.send_time > now:
            continue
        if packet.send_time + delay_steps(omega, dt) <= now:
            best = packet
    if best is None:
        raise NoUsablePrediction(f"no packet delivered by step {now}")
    return best


def load_table_predictor(path: str | Path, bucket: float, default: float) -> TablePredictor:
    return TablePredictor.load(path, bucket, default)

