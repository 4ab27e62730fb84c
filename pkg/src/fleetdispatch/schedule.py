"""Piecewise-constant per-device dispatch schedules."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DemandProfile, Fleet

SCHEDULE_TOL = 1e-9


@dataclass
class DispatchSchedule:
    """``rates[k, j]`` is device ``j``'s power (kW) on ``[breakpoints[k], breakpoints[k+1])``."""

    breakpoints: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.ndim != 2 or self.rates.shape[0] != self.breakpoints.size - 1:
            raise ValueError(
                f"rates of shape {self.rates.shape} do not match {self.breakpoints.size} breakpoints"
            )

    @classmethod
    def from_slot_energies(cls, energy: np.ndarray, slot_width: float) -> DispatchSchedule:
        """Schedule delivering ``energy[j, k]`` kWh evenly over slot ``k``."""
        energy = np.asarray(energy, dtype=float)
        n_slots = energy.shape[1]
        return cls(np.arange(n_slots + 1) * slot_width, energy.T / slot_width)

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_devices(self) -> int:
        return self.rates.shape[1]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def energy(self) -> np.ndarray:
        """Energy delivered per device (kWh)."""
        return self.rates.T @ self.durations

    def delivered(self) -> np.ndarray:
        """Aggregate power per segment."""
        return self.rates.sum(axis=1)

    def rates_at(self, t: float) -> np.ndarray:
        k = int(np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.rates.shape[0] - 1))
        return self.rates[k]

    def restrict(self, end: float) -> DispatchSchedule:
        keep = self.breakpoints < end
        bp = np.append(self.breakpoints[keep], end)
        return DispatchSchedule(bp, self.rates[: bp.size - 1])

    def _common_grid(self, demand: DemandProfile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grid = np.union1d(self.breakpoints, demand.breakpoint_array)
        grid = grid[grid <= min(self.horizon, demand.horizon)]
        mids = 0.5 * (grid[:-1] + grid[1:])
        idx = np.clip(np.searchsorted(self.breakpoints, mids, side="right") - 1, 0, self.rates.shape[0] - 1)
        return grid, self.rates[idx].sum(axis=1), demand.values_at(mids)

    def deficit(self, demand: DemandProfile) -> tuple[np.ndarray, np.ndarray]:
        """Grid and positive part of ``demand - delivered`` on each grid cell."""
        self._check_horizon(demand)
        grid, served, dem = self._common_grid(demand)
        return grid, np.maximum(dem - served, 0.0)

    def unserved_energy(self, demand: DemandProfile) -> float:
        grid, gap = self.deficit(demand)
        return float(np.sum(gap * np.diff(grid)))

    def failure_time(self, demand: DemandProfile, tol: float = SCHEDULE_TOL) -> float:
        """First time the schedule leaves demand unserved (horizon end if never)."""
        grid, gap = self.deficit(demand)
        bad = np.flatnonzero(gap > tol * np.maximum(1.0, demand.values_at(0.5 * (grid[:-1] + grid[1:]))))
        return float(grid[bad[0]]) if bad.size else float(grid[-1])

    def _check_horizon(self, demand: DemandProfile) -> None:
        if abs(self.horizon - demand.horizon) > 1e-9 * max(1.0, demand.horizon):
            raise ValueError(f"schedule spans [0, {self.horizon}] but demand spans [0, {demand.horizon}]")

    def violations(
        self,
        fleet: Fleet,
        demand: DemandProfile | None = None,
        tol: float = SCHEDULE_TOL,
    ) -> list[str]:
        """Describe every violated admissibility constraint (empty list if none).

        Power bounds, zero power outside availability and the energy budget
        are always checked; the demand match only when ``demand`` is given.
        """
        problems = []
        if self.n_devices != fleet.size:
            return [f"schedule has {self.n_devices} devices, fleet has {fleet.size}"]
        power = fleet.rated_power
        if np.any(self.rates < -tol):
            problems.append(f"negative rate {self.rates.min():.3g}")
        over = self.rates - power > tol * np.maximum(1.0, power)
        if np.any(over):
            k, j = np.argwhere(over)[0]
            problems.append(f"device {j} exceeds rated power on segment {k}")
        mids = 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])
        avail = fleet.available_on(mids)
        outside = (~avail) & (self.rates > tol) & (self.durations[:, None] > 0)
        if np.any(outside):
            k, j = np.argwhere(outside)[0]
            problems.append(f"device {j} delivers outside its availability at t={mids[k]:.6g}")
        budget = fleet.initial_energy
        spent = self.energy()
        overdraw = spent - budget > tol * np.maximum(1.0, budget)
        if np.any(overdraw):
            j = int(np.flatnonzero(overdraw)[0])
            problems.append(f"device {j} delivers {spent[j]:.9g} kWh but stores {budget[j]:.9g}")
        if demand is not None:
            self._check_horizon(demand)
            grid, served, dem = self._common_grid(demand)
            miss = np.abs(served - dem) > tol * np.maximum(1.0, dem)
            if np.any(miss):
                k = int(np.flatnonzero(miss)[0])
                problems.append(f"delivered {served[k]:.9g} kW vs demand {dem[k]:.9g} kW on [{grid[k]:.6g}, {grid[k + 1]:.6g}]")
        return problems

    def to_csv(self, path: str | Path, fleet: Fleet, demand: DemandProfile | None = None) -> None:
        """Trajectory-style export: ``t, x_1..x_N, u_1..u_N, shortfall``.

        ``x`` is the true time-to-discharge left after the schedule's draw;
        ``shortfall`` is the unserved demand on the segment (zero without
        ``demand``).
        """
        n = self.n_devices
        header = ["t"] + [f"x_{j + 1}" for j in range(n)] + [f"u_{j + 1}" for j in range(n)] + ["shortfall"]
        drawn = np.vstack([np.zeros(n), np.cumsum(self.rates * self.durations[:, None], axis=0)])
        x = (fleet.initial_energy - drawn) / fleet.rated_power
        mids = 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])
        short = np.zeros(mids.size)
        if demand is not None:
            short = np.maximum(demand.values_at(mids) - self.delivered(), 0.0)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(self.breakpoints):
                row = [repr(float(t))] + [repr(float(v)) for v in x[k]]
                if k < self.rates.shape[0]:
                    row += [repr(float(v)) for v in self.rates[k]] + [repr(float(short[k]))]
                else:
                    row += [""] * (n + 1)
                writer.writerow(row)


def unserved_energy(schedule: DispatchSchedule, demand: DemandProfile) -> float:
    """Integral of the positive part of ``demand - sum of rates`` (kWh)."""
    return schedule.unserved_energy(demand)
