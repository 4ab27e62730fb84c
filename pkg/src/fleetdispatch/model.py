"""Fleet domain types: devices, availability sets, demand profiles.

Units are fixed throughout the package: time in hours, power in kW and
energy in kWh, so a device's time-to-discharge is measured in hours.
Energies stored on a :class:`Device` are *externally* measured, i.e. the
round-trip efficiency has already been applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

DEFAULT_GROUP_TOL = 1e-9


@dataclass(frozen=True)
class Interval:
    """Closed time interval ``[start, end]`` with positive length."""

    start: float
    end: float

    def __post_init__(self):
        start, end = float(self.start), float(self.end)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValueError(f"interval endpoints must be finite, got [{start}, {end}]")
        if start < 0:
            raise ValueError(f"interval start must be >= 0, got {start}")
        if not start < end:
            raise ValueError(f"interval must have positive length, got [{start}, {end}]")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def length(self) -> float:
        return self.end - self.start

    def overlap(self, other: Interval) -> float:
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))

    def contains(self, t: float) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class AvailabilitySet:
    """Finite union of disjoint closed intervals.

    Overlapping or touching intervals are merged on construction, so the
    stored intervals are sorted and separated by strictly positive gaps.
    """

    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        items = sorted(
            (iv if isinstance(iv, Interval) else Interval(*iv) for iv in self.intervals),
            key=lambda iv: (iv.start, iv.end),
        )
        merged: list[Interval] = []
        for iv in items:
            if merged and iv.start <= merged[-1].end:
                last = merged[-1]
                if iv.end > last.end:
                    merged[-1] = Interval(last.start, iv.end)
            else:
                merged.append(iv)
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> AvailabilitySet:
        return cls(tuple(Interval(float(a), float(b)) for a, b in pairs))

    @classmethod
    def full(cls, horizon: float) -> AvailabilitySet:
        return cls((Interval(0.0, horizon),))

    def to_pairs(self) -> list[list[float]]:
        return [[iv.start, iv.end] for iv in self.intervals]

    @property
    def measure(self) -> float:
        return sum(iv.length for iv in self.intervals)

    @property
    def endpoints(self) -> list[float]:
        return [t for iv in self.intervals for t in (iv.start, iv.end)]

    def contains(self, t: float) -> bool:
        return any(iv.contains(t) for iv in self.intervals)

    def intersection_measure(self, window: Interval) -> float:
        return sum(iv.overlap(window) for iv in self.intervals)

    def complement(self, horizon: float) -> AvailabilitySet:
        """Closure of ``[0, horizon] \\ self``."""
        pieces = []
        cursor = 0.0
        for iv in self.intervals:
            if iv.start > cursor:
                pieces.append(Interval(cursor, min(iv.start, horizon)))
            cursor = max(cursor, iv.end)
            if cursor >= horizon:
                break
        if cursor < horizon:
            pieces.append(Interval(cursor, horizon))
        return AvailabilitySet(tuple(pieces))

    def restrict(self, end: float) -> AvailabilitySet:
        """Intersection with ``[0, end]``; zero-length leftovers are dropped."""
        pieces = []
        for iv in self.intervals:
            if iv.start < end:
                pieces.append(Interval(iv.start, min(iv.end, end)))
        return AvailabilitySet(tuple(pieces))

    def within(self, horizon: float) -> bool:
        return not self.intervals or self.intervals[-1].end <= horizon


def measure_intersection(availability: AvailabilitySet, window: Interval) -> float:
    """Lebesgue measure of ``availability ∩ window`` in hours."""
    return availability.intersection_measure(window)


def external_energy(internal_energy: float, efficiency: float) -> float:
    """Convert internally measured energy to the externally deliverable amount."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {efficiency}")
    if internal_energy < 0:
        raise ValueError(f"internal energy must be >= 0, got {internal_energy}")
    return efficiency * internal_energy


@dataclass(frozen=True)
class Device:
    id: str
    rated_power: float
    initial_energy: float
    efficiency: float = 1.0
    availability: AvailabilitySet = field(default_factory=AvailabilitySet)

    def __post_init__(self):
        if not (math.isfinite(self.rated_power) and self.rated_power > 0):
            raise ValueError(f"device {self.id!r}: rated_power must be > 0, got {self.rated_power}")
        if not (math.isfinite(self.initial_energy) and self.initial_energy >= 0):
            raise ValueError(
                f"device {self.id!r}: initial_energy must be >= 0, got {self.initial_energy}"
            )
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"device {self.id!r}: efficiency must lie in (0, 1], got {self.efficiency}")
        if not isinstance(self.availability, AvailabilitySet):
            object.__setattr__(self, "availability", AvailabilitySet.from_pairs(self.availability))

    @classmethod
    def from_internal_energy(
        cls,
        id: str,
        rated_power: float,
        internal_energy: float,
        efficiency: float,
        availability: AvailabilitySet,
    ) -> Device:
        """Build a device from internally measured energy, applying the efficiency once."""
        return cls(
            id=id,
            rated_power=rated_power,
            initial_energy=external_energy(internal_energy, efficiency),
            efficiency=efficiency,
            availability=availability,
        )


@dataclass(frozen=True)
class Fleet:
    """Devices sharing the horizon ``[0, horizon]``."""

    devices: tuple[Device, ...]
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.devices:
            raise ValueError("a fleet needs at least one device")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        for dev in self.devices:
            if not dev.availability.within(self.horizon + 1e-12):
                raise ValueError(
                    f"device {dev.id!r}: availability {dev.availability.to_pairs()} "
                    f"exceeds horizon {self.horizon}"
                )

    def __len__(self) -> int:
        return len(self.devices)

    @property
    def size(self) -> int:
        return len(self.devices)

    @cached_property
    def rated_power(self) -> np.ndarray:
        return np.array([d.rated_power for d in self.devices], dtype=float)

    @cached_property
    def initial_energy(self) -> np.ndarray:
        return np.array([d.initial_energy for d in self.devices], dtype=float)

    @cached_property
    def x0(self) -> np.ndarray:
        """Initial time-to-discharge in hours."""
        return self.initial_energy / self.rated_power

    @cached_property
    def off_measure(self) -> np.ndarray:
        """Measure of the horizon outside each device's availability set."""
        return np.array(
            [max(0.0, self.horizon - d.availability.measure) for d in self.devices], dtype=float
        )

    @cached_property
    def boundary_times(self) -> np.ndarray:
        pts = {0.0, self.horizon}
        for d in self.devices:
            pts.update(t for t in d.availability.endpoints if 0.0 <= t <= self.horizon)
        return np.array(sorted(pts))

    def available_at(self, t: float) -> np.ndarray:
        return np.array([d.availability.contains(t) for d in self.devices], dtype=bool)

    def available_on(self, midpoints: np.ndarray) -> np.ndarray:
        """Availability mask of shape ``(len(midpoints), N)``."""
        mids = np.asarray(midpoints, dtype=float)
        mask = np.zeros((mids.size, self.size), dtype=bool)
        for j, d in enumerate(self.devices):
            for iv in d.availability.intervals:
                mask[:, j] |= (mids >= iv.start) & (mids <= iv.end)
        return mask

    def restrict(self, end: float) -> Fleet:
        """Same devices over the shortened horizon ``[0, end]``."""
        return Fleet(
            tuple(
                Device(d.id, d.rated_power, d.initial_energy, d.efficiency, d.availability.restrict(end))
                for d in self.devices
            ),
            end,
        )

    def with_initial_energy(self, energy: Sequence[float]) -> Fleet:
        energy = list(energy)
        if len(energy) != self.size:
            raise ValueError(f"expected {self.size} energies, got {len(energy)}")
        return Fleet(
            tuple(
                Device(d.id, d.rated_power, float(e), d.efficiency, d.availability)
                for d, e in zip(self.devices, energy)
            ),
            self.horizon,
        )


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant nonnegative power demand.

    ``values[m]`` holds on ``[breakpoints[m], breakpoints[m+1])``.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) < 2:
            raise ValueError("a demand profile needs at least two breakpoints")
        if len(vals) != len(bp) - 1:
            raise ValueError(f"expected {len(bp) - 1} values for {len(bp)} breakpoints, got {len(vals)}")
        if bp[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {bp[0]}")
        if any(not math.isfinite(b) for b in bp) or any(b >= c for b, c in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be finite and strictly increasing")
        if any(not (math.isfinite(v) and v >= 0) for v in vals):
            raise ValueError("demand values must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, horizon: float) -> DemandProfile:
        return cls((0.0, horizon), (value,))

    @classmethod
    def from_slots(cls, values: Sequence[float], slot_width: float = 1.0) -> DemandProfile:
        n = len(values)
        return cls(tuple(k * slot_width for k in range(n + 1)), tuple(values))

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1]

    @property
    def breakpoint_array(self) -> np.ndarray:
        return np.asarray(self.breakpoints)

    @property
    def value_array(self) -> np.ndarray:
        return np.asarray(self.values)

    def value_at(self, t: float) -> float:
        """Right-continuous evaluation; the last value also holds at the horizon end."""
        if t < 0 or t > self.horizon:
            return 0.0
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[min(idx, len(self.values) - 1)]

    def values_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, ts, side="right") - 1, 0, len(self.values) - 1)
        out = self.value_array[idx]
        return np.where((ts < 0) | (ts > self.horizon), 0.0, out)

    def integral(self, start: float = 0.0, end: float | None = None) -> float:
        end = self.horizon if end is None else end
        bp = self.breakpoint_array
        lo = np.clip(bp[:-1], start, end)
        hi = np.clip(bp[1:], start, end)
        return float(np.sum(self.value_array * (hi - lo)))

    def restrict(self, end: float) -> DemandProfile:
        """Truncate to ``[0, end]``, keeping the breakpoints that fall inside."""
        if not 0 < end <= self.horizon + 1e-12:
            raise ValueError(f"cannot restrict a profile on [0, {self.horizon}] to [0, {end}]")
        bp = [b for b in self.breakpoints if b < end]
        vals = list(self.values[: len(bp)])
        return DemandProfile(tuple(bp) + (end,), tuple(vals))

    def with_horizon(self, horizon: float) -> DemandProfile:
        """Pad with zero demand (or truncate) so the profile spans ``[0, horizon]``."""
        if horizon > self.horizon:
            return DemandProfile(self.breakpoints + (horizon,), self.values + (0.0,))
        return self.restrict(horizon)


def to_time_to_discharge(energy: Sequence[float], fleet: Fleet) -> np.ndarray:
    energy = np.asarray(energy, dtype=float)
    if energy.shape != (fleet.size,):
        raise ValueError(f"expected {fleet.size} energies, got shape {energy.shape}")
    return energy / fleet.rated_power


def from_time_to_discharge(x: Sequence[float], fleet: Fleet) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (fleet.size,):
        raise ValueError(f"expected {fleet.size} states, got shape {x.shape}")
    return x * fleet.rated_power


def group_partition(x: Sequence[float], tol: float = DEFAULT_GROUP_TOL) -> list[tuple[float, tuple[int, ...]]]:
    """Group equal time-to-discharge values, highest first.

    Two devices share a group when their values are within ``tol`` of each
    other, closed transitively along the sorted order. Each group is reported
    with its largest member value.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return []
    order = np.argsort(-x, kind="stable")
    xs = x[order]
    cuts = np.flatnonzero(xs[:-1] - xs[1:] > tol) + 1
    groups = []
    for block in np.split(np.arange(x.size), cuts):
        members = tuple(sorted(int(i) for i in order[block]))
        groups.append((float(xs[block[0]]), members))
    return groups
