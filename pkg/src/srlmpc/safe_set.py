"""Dynamic safe set: stored feasible trajectories and their costs-to-go."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, VehicleState
from .errors import ValidationError


def compute_cost_to_go(stage_costs, terminal_q: float) -> np.ndarray:
    """Backward recursion q(k) = z(k) + q(k+1), with q(last) = terminal_q."""
    z = np.asarray(stage_costs, dtype=float)
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise ValidationError("stage costs must be finite and nonnegative")
    if not terminal_q >= 0:
        raise ValidationError("terminal cost must be nonnegative")
    q = np.empty(len(z) + 1)
    q[-1] = terminal_q
    for k in range(len(z) - 1, -1, -1):
        q[k] = z[k] + q[k + 1]
    return q


def compute_cost_to_go_with_comm(stage_costs, omega, alpha: float, terminal_q: float) -> np.ndarray:
    """Cost-to-go including discounted delivery times.

    q(k) = sum_{j>=k} alpha**(j-k) * omega(j) + sum_{j>=k} z(j) + terminal_q,
    where ``omega`` has one entry per state and ``stage_costs`` one per input.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    omega = np.asarray(omega, dtype=float)
    plain = compute_cost_to_go(stage_costs, terminal_q)
    if omega.shape != plain.shape:
        raise ValidationError(f"omega needs {len(plain)} entries, got {len(omega)}")
    if not np.all(np.isfinite(omega)):
        raise ValidationError("omega must be finite; substitute the dropout penalty first")
    comm = np.empty_like(omega)
    acc = 0.0
    for k in range(len(omega) - 1, -1, -1):
        acc = omega[k] + alpha * acc
        comm[k] = acc
    return plain + comm


@dataclass(frozen=True)
class SafeSetEntry:
    state: VehicleState
    iteration: int
    eta: int  # step offset within its trajectory
    q: float
    input: float | None = None  # input applied at this state, None at the end


@dataclass
class StoredIteration:
    iteration: int
    trajectory: Trajectory
    leader: Trajectory
    q: np.ndarray
    omega: np.ndarray | None = None
    dead_zone: tuple[float, float] | None = None  # rule the trajectory was planned under
    keep: np.ndarray | None = None  # candidate mask; pruning clears entries, never the trajectory

    def __post_init__(self):
        if len(self.q) != len(self.trajectory):
            raise ValidationError("need one cost-to-go value per stored state")
        if self.keep is None:
            self.keep = np.ones(len(self.q), dtype=bool)

    def entries(self):
        traj = self.trajectory
        for eta in np.flatnonzero(self.keep):
            u = float(traj.inputs[eta]) if eta < traj.horizon else None
            yield SafeSetEntry(traj.state(eta), self.iteration, int(eta), float(self.q[eta]), u)


@dataclass
class DynamicSafeSet:
    records: list[StoredIteration] = field(default_factory=list)

    def __len__(self):
        return sum(int(r.keep.sum()) for r in self.records)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def insert_trajectory(self, traj: Trajectory, violations: list[str], leader: Trajectory,
                          q, omega=None, dead_zone=None) -> int:
        """Store a validated trajectory as the next iteration; returns its index.

        ``violations`` is the output of the feasibility validator. Anything
        non-empty rejects the trajectory and leaves the set unchanged.
        """
        if violations:
            raise ValidationError("trajectory failed validation: " + "; ".join(violations[:3]))
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValidationError("cost-to-go must be finite")
        ell = len(self.records)
        traj.iteration = ell
        self.records.append(StoredIteration(ell, traj, leader, q,
                                            None if omega is None else np.asarray(omega, float),
                                            dead_zone))
        return ell

    def update_costs(self, ell: int, q, omega=None):
        rec = self.records[ell]
        q = np.asarray(q, dtype=float)
        if q.shape != rec.q.shape:
            raise ValidationError("cost-to-go shape mismatch")
        rec.q = q
        if omega is not None:
            rec.omega = np.asarray(omega, dtype=float)

    def entries(self) -> list[SafeSetEntry]:
        return [e for r in self.records for e in r.entries()]

    def snapshot(self) -> "DynamicSafeSet":
        """Shallow copy whose record list is frozen against later inserts."""
        return DynamicSafeSet(list(self.records))


def candidates(ds: DynamicSafeSet, effective_horizon: int) -> list[SafeSetEntry]:
    """Every stored entry with ``eta <= effective_horizon``, ordered by (iteration, eta)."""
    if effective_horizon < 0:
        raise ValidationError("effective horizon must be nonnegative")
    for rec in ds.records:
        if effective_horizon > rec.trajectory.horizon:
            raise ValidationError(f"effective horizon {effective_horizon} exceeds stored "
                                  f"trajectory length {rec.trajectory.horizon}")
    return [e for e in ds.entries() if e.eta <= effective_horizon]


def prune(ds: DynamicSafeSet, max_entries_per_iteration: int) -> DynamicSafeSet:
    """Bound the number of candidate entries.

    A set that already fits in ``max_entries_per_iteration`` entries is
    returned unchanged. Otherwise duplicate states at the same ``eta`` keep
    only their lowest-q copy, then older iterations share a budget of
    ``max_entries_per_iteration`` entries (ties on rank broken by lower q);
    the most recent iteration is always kept whole.
    """
    if not ds.records:
        return DynamicSafeSet([])
    longest = max(len(r.trajectory) for r in ds.records)
    if max_entries_per_iteration < longest:
        raise ValidationError(f"cap {max_entries_per_iteration} is below the horizon length {longest}")
    records = [StoredIteration(r.iteration, r.trajectory, r.leader, r.q, r.omega, r.dead_zone,
                               r.keep.copy()) for r in ds.records]
    if len(ds) <= max_entries_per_iteration:
        return DynamicSafeSet(records)

    best = {}
    for r in reversed(records):  # newest first, so equal q keeps the newest copy
        for eta in np.flatnonzero(r.keep):
            key = (int(eta), float(r.trajectory.positions[eta]), float(r.trajectory.velocities[eta]))
            if key in best:
                other, oeta = best[key]
                if r.q[eta] < other.q[oeta]:
                    other.keep[oeta] = False
                    best[key] = (r, eta)
                else:
                    r.keep[eta] = False
            else:
                best[key] = (r, eta)

    latest = records[-1]
    latest.keep[:] = True  # may resurrect a duplicate of a cheaper older entry; both stay

    older = [(r, int(eta)) for r in records[:-1] for eta in np.flatnonzero(r.keep)]
    if len(older) > max_entries_per_iteration:
        by_eta: dict[int, list] = {}
        for r, eta in older:
            by_eta.setdefault(eta, []).append((float(r.q[eta]), r.iteration, r, eta))
        ranked = []
        for eta, items in by_eta.items():
            items.sort(key=lambda t: (t[0], t[1]))
            ranked += [(rank, q, eta, it, r) for rank, (q, it, r, _) in enumerate(items)]
        ranked.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
        for r, eta in older:
            r.keep[eta] = False
        for _, _, eta, _, r in ranked[:max_entries_per_iteration]:
            r.keep[eta] = True
    return DynamicSafeSet(records)


HEADER = "# srlmpc-safe-set v1: iteration eta position velocity q input"


def dump_entries(ds: DynamicSafeSet, path):
    """Write one entry per line; ``input`` is ``nan`` at trajectory ends."""
    with open(path, "w", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for e in ds.entries():
            u = math.nan if e.input is None else e.input
            fh.write(f"{e.iteration} {e.eta} {e.state.position:.17g} {e.state.velocity:.17g} "
                     f"{e.q:.17g} {u:.17g}\n")


def load_entries(path) -> list[SafeSetEntry]:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValidationError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            ell, eta = int(parts[0]), int(parts[1])
            pos, vel, q, u = (float(x) for x in parts[2:])
            entries.append(SafeSetEntry(VehicleState(pos, vel), ell, eta, q,
                                        None if math.isnan(u) else u))
    return entries


def safe_set_from_entries(entries: list[SafeSetEntry], dt: float, leader: Trajectory | None = None
                          ) -> DynamicSafeSet:
    """Rebuild stored trajectories from a dump (each iteration must be complete)."""
    groups: dict[int, list[SafeSetEntry]] = {}
    for e in entries:
        groups.setdefault(e.iteration, []).append(e)
    ds = DynamicSafeSet()
    for ell in sorted(groups):
        items = sorted(groups[ell], key=lambda e: e.eta)
        if [e.eta for e in items] != list(range(len(items))):
            raise ValidationError(f"iteration {ell} is not contiguous in eta")
        traj = Trajectory([e.state.position for e in items], [e.state.velocity for e in items],
                          [e.input for e in items[:-1]], dt, iteration=ell)
        ds.records.append(StoredIteration(ell, traj, leader, np.array([e.q for e in items])))
    return ds
