"""Best-effort schedules when the demand cannot be met in full.

:func:`min_unserved_energy` minimises the integral of unmet demand over the
whole horizon. :func:`max_time_to_failure` instead postpones the first
failure as long as possible, by repeatedly shrinking the window to the
failure time of the previous augmented run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .feasibility import restricted_schedule
from .fixed_point import FixedPointResult, solve_fixed_point
from .ggddf import Trajectory
from .model import DemandProfile, Fleet
from .schedule import DispatchSchedule, unserved_energy

__all__ = [
    "TtfResult",
    "UnservedResult",
    "clip_to_budget",
    "max_time_to_failure",
    "min_unserved_energy",
    "time_to_failure",
    "unserved_energy",
]

log = logging.getLogger(__name__)

CROSSING_TOL = 1e-9
TAU_TOL = 1e-6
MAX_OUTER = 100


class NonMonotoneIterates(RuntimeError):
    pass


@dataclass
class UnservedResult:
    unserved_energy: float
    schedule: DispatchSchedule
    served_energy: float
    fixed_point: FixedPointResult | None = None

    def to_json(self) -> dict:
        out = {"unserved_energy_kwh": self.unserved_energy, "served_energy_kwh": self.served_energy}
        if self.fixed_point is not None:
            out["fixed_point"] = self.fixed_point.to_json()
        return out


@dataclass
class TtfResult:
    tau_star: float
    schedule: DispatchSchedule
    iterates: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"tau_star_hours": self.tau_star, "iterates": list(self.iterates), "outer_iterations": len(self.iterates) - 1}


def clip_to_budget(schedule: DispatchSchedule, budget: np.ndarray) -> DispatchSchedule:
    """Zero each device's rate from the instant its cumulative draw reaches ``budget``.

    Segments in which some device runs out are split at that instant.
    """
    bp = schedule.breakpoints
    drawn = np.vstack([np.zeros(schedule.n_devices), np.cumsum(schedule.rates * schedule.durations[:, None], axis=0)])
    cuts = []
    for j in range(schedule.n_devices):
        over = np.flatnonzero(drawn[1:, j] > budget[j])
        if over.size:
            k = over[0]
            rate = schedule.rates[k, j]
            cuts.append(bp[k] + (budget[j] - drawn[k, j]) / rate)
    grid = np.union1d(bp, np.clip(cuts, bp[0], bp[-1])) if cuts else bp.copy()
    grid = grid[np.concatenate(([True], np.diff(grid) > 0))]
    mids = 0.5 * (grid[:-1] + grid[1:])
    idx = np.clip(np.searchsorted(bp, mids, side="right") - 1, 0, schedule.rates.shape[0] - 1)
    rates = schedule.rates[idx].copy()
    spent = np.vstack([np.zeros(schedule.n_devices), np.cumsum(rates * np.diff(grid)[:, None], axis=0)])
    # A cell is dropped once the device had already used its budget at its start.
    exhausted = spent[:-1] >= budget[None, :] - 1e-12 * np.maximum(budget[None, :], 1.0)
    rates[exhausted] = 0.0
    return DispatchSchedule(grid, rates)


def min_unserved_energy(fleet: Fleet, demand: DemandProfile, tol: float = 1e-8, max_iter: int = 1000) -> UnservedResult:
    """Minimum integral of unmet demand, with an admissible schedule attaining it.

    The value is the terminal energy deficit of the augmented run plus any
    demand exceeding the power available at the time.
    """
    fp = solve_fixed_point(fleet, demand, tol=tol, max_iter=max_iter)
    traj = fp.trajectory
    deficit = np.maximum(-traj.final_state, 0.0) @ fleet.rated_power
    short = float(traj.shortfall @ traj.durations) if traj.n_segments else 0.0
    value = float(deficit + short)
    schedule = clip_to_budget(restricted_schedule(traj), fleet.initial_energy)
    served = float(schedule.energy().sum())
    return UnservedResult(value, schedule, served, fp)


def time_to_failure(traj: Trajectory, tol: float = CROSSING_TOL) -> float:
    """First time a state goes negative or demand outruns available power.

    Returns the trajectory end when neither happens.
    """
    end = traj.end_time
    if np.any(traj.states[0] < -tol):
        return float(traj.event_times[0])
    short = np.flatnonzero(traj.shortfall > tol)
    if short.size:
        end = float(traj.event_times[short[0]])
    below = np.flatnonzero(np.any(traj.states[1:] < -tol, axis=1))
    if below.size:
        k = below[0]
        if traj.event_times[k] < end:
            start, stop = traj.states[k], traj.states[k + 1]
            slope = (start - stop) / traj.durations[k]
            neg = stop < -tol
            crossing = traj.event_times[k] + np.maximum(start[neg], 0.0) / slope[neg]
            end = min(end, float(crossing.min()))
    return float(end)


def max_time_to_failure(
    fleet: Fleet,
    demand: DemandProfile,
    tau_tol: float = TAU_TOL,
    max_outer: int = MAX_OUTER,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> TtfResult:
    """Latest achievable first-failure time and a schedule valid up to it."""
    if not tau_tol > 0:
        raise ValueError(f"tau_tol must be positive, got {tau_tol}")
    tau = fleet.horizon
    iterates = [tau]
    traj = None
    for _ in range(max_outer):
        if tau <= 0:
            break
        fp = solve_fixed_point(fleet.restrict(tau), demand.restrict(tau), tol=tol, max_iter=max_iter)
        traj = fp.trajectory
        nxt = time_to_failure(traj)
        if nxt > tau + tau_tol:
            raise NonMonotoneIterates(f"failure time rose from {tau} to {nxt}")
        nxt = min(nxt, tau)
        iterates.append(nxt)
        done = tau - nxt <= tau_tol
        tau = nxt
        if done:
            break
    else:
        log.warning("time-to-failure iteration stopped after %d outer steps", max_outer)

    if tau <= 0 or traj is None:
        return TtfResult(0.0, DispatchSchedule(np.array([0.0, 0.0]), np.zeros((1, fleet.size))), iterates)
    schedule = clip_to_budget(restricted_schedule(traj), fleet.initial_energy)
    if schedule.horizon > tau:
        schedule = schedule.restrict(tau)
    return TtfResult(tau, schedule, iterates)
