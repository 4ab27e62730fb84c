"""Greatest-discharge-duration-first dispatch and its closed-loop simulation.

Devices are ranked by time-to-discharge. Groups of equal rank are served
in decreasing order: leading groups run at rated power, one marginal group
runs at a common fraction of rated power, the rest idle. In the
availability-aware variant only *available* capacity counts toward
covering the demand, while every member of a leading group (available or
not) still discharges.

Because demand is piecewise constant, every group depletes linearly
between events and :func:`simulate` integrates the flow exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import DEFAULT_GROUP_TOL, DemandProfile, Fleet, group_partition


# Merges only shrink the group count, so events are finite; the factor is a bug guard.
EVENT_BOUND_FACTOR = 10


class SimulationError(RuntimeError):
    """Raised when the event loop misbehaves; signals a bug, not a model condition."""


def group_fractions(covering_cap: np.ndarray, demand: float) -> tuple[np.ndarray, float]:
    """Per-group discharge fraction for groups listed in priority order.

    ``covering_cap[k]`` is the capacity of group ``k`` that counts toward
    the demand. Returns the fraction of rated power each group runs at and
    the shortfall (demand beyond the total covering capacity).

    A group runs at full power when the cumulative covering capacity up to
    and including it does not exceed the demand *and* the groups before it
    have not already covered it. The second condition only matters for
    groups without covering capacity sitting right where the demand is met
    exactly; they stay idle.
    """
    cap = np.asarray(covering_cap, dtype=float)
    if cap.size == 0:
        return np.zeros(0), float(demand)
    eps = 1e-12 * max(1.0, abs(demand))
    cum = np.cumsum(cap)
    prev = cum - cap
    full = (cum <= demand + eps) & (prev < demand - eps)
    frac = full.astype(float)
    marginal = np.flatnonzero((prev < demand - eps) & (cum > demand + eps))
    if marginal.size:
        k = marginal[0]
        frac[k] = min(1.0, max(0.0, (demand - prev[k]) / cap[k]))
    shortfall = demand - cum[-1]
    return frac, shortfall if shortfall > eps else 0.0


def policy_rates(
    t: float,
    x,
    d_t: float,
    fleet: Fleet,
    availability_aware: bool = True,
    tol: float = DEFAULT_GROUP_TOL,
    available: np.ndarray | None = None,
) -> np.ndarray:
    """Power per device (kW) dispatched at time ``t`` from state ``x``.

    ``available`` overrides the availability mask evaluated at ``t``.
    """
    if d_t < 0:
        raise ValueError(f"demand must be >= 0, got {d_t}")
    x = np.asarray(x, dtype=float)
    power = fleet.rated_power
    avail = fleet.available_at(t) if available is None else np.asarray(available, dtype=bool)
    groups = group_partition(x, tol)
    caps = np.array(
        [power[list(m)][avail[list(m)]].sum() if availability_aware else power[list(m)].sum() for _, m in groups]
    )
    frac, _ = group_fractions(caps, d_t)
    u = np.zeros(fleet.size)
    for (_, members), f in zip(groups, frac):
        idx = list(members)
        u[idx] = f * power[idx]
    return u


def dispatch_shortfall(t: float, d_t: float, fleet: Fleet, availability_aware: bool = True) -> float:
    """Demand (kW) beyond what the fleet can cover at time ``t``."""
    cap = fleet.rated_power[fleet.available_at(t)].sum() if availability_aware else fleet.rated_power.sum()
    return max(0.0, d_t - cap) if d_t - cap > 1e-12 * max(1.0, d_t) else 0.0


def augmented_demand_pointwise(t: float, x, d_t: float, fleet: Fleet, tol: float = DEFAULT_GROUP_TOL) -> float:
    """Demand plus the power the aware policy draws from unavailable devices."""
    avail = fleet.available_at(t)
    u = policy_rates(t, x, d_t, fleet, True, tol, available=avail)
    return d_t + float(u[~avail].sum())


@dataclass
class Trajectory:
    """Piecewise-linear closed-loop solution.

    ``states[k]`` is the time-to-discharge at ``event_times[k]``; rates,
    demand, shortfall and the availability mask are constant on each
    segment ``(event_times[k], event_times[k+1])``.
    """

    event_times: np.ndarray
    states: np.ndarray
    rates: np.ndarray
    demand: np.ndarray
    shortfall: np.ndarray
    available: np.ndarray
    rated_power: np.ndarray
    availability_aware: bool = True
    allow_negative: bool = False
    stop_time: float | None = None
    zero_crossings: list[tuple[float, tuple[int, ...]]] = field(default_factory=list)

    @property
    def n_devices(self) -> int:
        return self.states.shape[1]

    @property
    def n_segments(self) -> int:
        return self.rates.shape[0]

    @property
    def end_time(self) -> float:
        return float(self.event_times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.event_times)

    def state_at(self, t) -> np.ndarray:
        """Linear interpolation of the state; accepts a scalar or an array of times."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.column_stack([np.interp(ts, self.event_times, self.states[:, j]) for j in range(self.n_devices)])
        return out[0] if np.ndim(t) == 0 else out

    def off_window_rates(self) -> np.ndarray:
        return np.where(self.available, 0.0, self.rates)

    def to_csv(self, path: str | Path) -> None:
        n = self.n_devices
        header = ["t"] + [f"x_{j + 1}" for j in range(n)] + [f"u_{j + 1}" for j in range(n)] + ["shortfall"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(self.event_times):
                row = [repr(float(t))] + [repr(float(v)) for v in self.states[k]]
                if k < self.n_segments:
                    row += [repr(float(v)) for v in self.rates[k]] + [repr(float(self.shortfall[k]))]
                else:
                    row += [""] * (n + 1)
                writer.writerow(row)


def _segment_grid(fleet: Fleet, demand: DemandProfile) -> np.ndarray:
    pts = np.union1d(demand.breakpoint_array, fleet.boundary_times)
    return pts[(pts >= 0.0) & (pts <= fleet.horizon)]


def simulate(
    fleet: Fleet,
    x0,
    demand: DemandProfile,
    availability_aware: bool = True,
    allow_negative: bool = False,
    tol: float = DEFAULT_GROUP_TOL,
) -> Trajectory:
    """Exact event-driven integration of the closed loop.

    Events are demand breakpoints, availability boundaries, group merges and
    zero crossings. Without ``allow_negative`` the run stops as soon as the
    policy would push an empty device below zero; ``stop_time`` records when.
    """
    x0 = np.asarray(x0, dtype=float)
    n = fleet.size
    if x0.shape != (n,):
        raise ValueError(f"expected {n} initial states, got shape {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    if abs(demand.horizon - fleet.horizon) > 1e-9 * max(1.0, fleet.horizon):
        raise ValueError(f"demand spans [0, {demand.horizon}] but the fleet horizon is {fleet.horizon}")

    grid = _segment_grid(fleet, demand)
    mids = 0.5 * (grid[:-1] + grid[1:])
    cell_demand = demand.values_at(mids)
    cell_avail = fleet.available_on(mids)

    # Rank order never changes along solutions; groups stay contiguous blocks.
    order = np.argsort(-x0, kind="stable")
    power_sorted = fleet.rated_power[order]
    xs = x0[order]
    starts = np.concatenate(([0], np.flatnonzero(xs[:-1] - xs[1:] > tol) + 1))
    taus = xs[starts].copy()

    n_endpoints = sum(len(d.availability.endpoints) for d in fleet.devices)
    max_events = EVENT_BOUND_FACTOR * (n + len(demand.breakpoints) + n_endpoints) + EVENT_BOUND_FACTOR

    times = [0.0]
    states = [_expand(taus, starts, n, order)]
    seg_rates, seg_demand, seg_short, seg_avail = [], [], [], []
    crossings: list[tuple[float, tuple[int, ...]]] = []
    stop_time = None

    t = 0.0
    cell = 0
    n_cells = grid.size - 1
    events = 0
    while cell < n_cells:
        cell_end = grid[cell + 1]
        if t >= cell_end:
            cell += 1
            continue
        events += 1
        if events > max_events:
            raise SimulationError(f"event loop exceeded {max_events} events at t={t}")

        d_c = cell_demand[cell]
        avail_sorted = cell_avail[cell][order]
        total_cap = np.add.reduceat(power_sorted, starts)
        cover_cap = np.add.reduceat(power_sorted * avail_sorted, starts) if availability_aware else total_cap
        frac, shortfall = group_fractions(cover_cap, d_c)

        if not allow_negative and np.any((taus <= tol) & (frac > 0)):
            stop_time = t
            break

        dt = cell_end - t
        kind = "cell"
        if taus.size > 1:
            gap = taus[:-1] - taus[1:]
            closing = frac[:-1] - frac[1:]
            with np.errstate(divide="ignore", invalid="ignore"):
                merge_dt = np.where(closing > 0, gap / closing, np.inf)
            m = float(merge_dt.min())
            if m < dt:
                dt, kind = m, "merge"
        with np.errstate(divide="ignore", invalid="ignore"):
            cross_dt = np.where((taus > tol) & (frac > 0), taus / frac, np.inf)
        c = float(cross_dt.min())
        if c < dt:
            dt, kind = c, "cross"
        hitting = np.flatnonzero(cross_dt <= dt * (1 + 1e-12))

        rates_sorted = np.repeat(frac, np.diff(np.append(starts, n))) * power_sorted
        rates = np.empty(n)
        rates[order] = rates_sorted
        seg_rates.append(rates)
        seg_demand.append(d_c)
        seg_short.append(shortfall)
        seg_avail.append(cell_avail[cell].copy())

        taus = taus - frac * dt
        t = cell_end if kind == "cell" else t + dt
        if hitting.size:
            taus[hitting] = 0.0
            members = np.concatenate([order[starts[g] : _block_end(starts, g, n)] for g in hitting])
            crossings.append((t, tuple(sorted(int(i) for i in members))))

        # Merge neighbours that met (or came within tolerance) during the step.
        if taus.size > 1:
            keep = np.concatenate(([True], taus[:-1] - taus[1:] > tol))
            if not keep.all():
                idx = np.flatnonzero(keep)
                taus = np.maximum.reduceat(taus, idx)
                starts = starts[idx]

        times.append(t)
        states.append(_expand(taus, starts, n, order))

    # Zero-length segments are never recorded: every recorded step has dt > 0.
    rates_arr = np.array(seg_rates).reshape(-1, n)
    return Trajectory(
        event_times=np.array(times),
        states=np.array(states),
        rates=rates_arr,
        demand=np.array(seg_demand, dtype=float),
        shortfall=np.array(seg_short, dtype=float),
        available=np.array(seg_avail, dtype=bool).reshape(-1, n),
        rated_power=fleet.rated_power.copy(),
        availability_aware=availability_aware,
        allow_negative=allow_negative,
        stop_time=stop_time,
        zero_crossings=crossings,
    )


def _block_end(starts: np.ndarray, g: int, n: int) -> int:
    return int(starts[g + 1]) if g + 1 < starts.size else n


def _expand(taus: np.ndarray, starts: np.ndarray, n: int, order: np.ndarray) -> np.ndarray:
    sorted_x = np.repeat(taus, np.diff(np.append(starts, n)))
    x = np.empty(n)
    x[order] = sorted_x
    return x


def simulate_fixed_step(
    fleet: Fleet,
    x0,
    demand: DemandProfile,
    availability_aware: bool = True,
    allow_negative: bool = False,
    dt: float = 1e-3,
    tol: float = DEFAULT_GROUP_TOL,
) -> Trajectory:
    """Explicit Euler stepping of the same closed loop (test oracle).

    Demand and availability are sampled at step midpoints; the policy is
    evaluated on the state at the start of each step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x0, dtype=float).copy()
    n = fleet.size
    horizon = fleet.horizon
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    times = [0.0]
    states = [x.copy()]
    seg_rates, seg_demand, seg_short, seg_avail = [], [], [], []
    stop_time = None
    power = fleet.rated_power
    for k in range(n_steps):
        t = k * dt
        h = min(dt, horizon - t)
        if h <= 0:
            break
        mid = t + 0.5 * h
        d_t = demand.value_at(mid)
        avail = fleet.available_at(mid)
        u = policy_rates(mid, x, d_t, fleet, availability_aware, tol, available=avail)
        if not allow_negative and np.any((x <= tol) & (u > 0)):
            stop_time = t
            break
        cap = power[avail].sum() if availability_aware else power.sum()
        seg_rates.append(u)
        seg_demand.append(d_t)
        seg_short.append(max(0.0, d_t - cap))
        seg_avail.append(avail)
        x = x - u * h / power
        times.append(t + h)
        states.append(x.copy())
    return Trajectory(
        event_times=np.array(times),
        states=np.array(states),
        rates=np.array(seg_rates).reshape(-1, n),
        demand=np.array(seg_demand, dtype=float),
        shortfall=np.array(seg_short, dtype=float),
        available=np.array(seg_avail, dtype=bool).reshape(-1, n),
        rated_power=power.copy(),
        availability_aware=availability_aware,
        allow_negative=allow_negative,
        stop_time=stop_time,
    )
