"""Scenario files, seeded fleet generation and built-in fixtures.

Times are hours from the start of the horizon. For day-long scenarios the
horizon is ``[0, 24]`` with 12:00 noon mapped to 0, so a clock time ``c``
becomes ``c - 12`` (next-day times wrap to ``c + 12``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .model import AvailabilitySet, DemandProfile, Device, Fleet

DAY_HORIZON = 24.0
NOON_OFFSET = 12.0


@dataclass(frozen=True)
class FleetParams:
    """Distribution parameters; window start is a clock hour (18.0 = 18:00)."""

    energy_mean: float = 8.0
    energy_std: float = 1.5
    window_start_mean: float = 18.0
    window_start_std: float = 1.0
    window_len_mean: float = 10.0
    window_len_std: float = 2.0
    rated_power: float = 1.0
    horizon: float = DAY_HORIZON

    def __post_init__(self):
        for name in ("energy_std", "window_start_std", "window_len_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.rated_power > 0:
            raise ValueError("rated_power must be positive")
        if self.energy_mean + 4 * self.energy_std <= 0:
            raise ValueError("energy distribution lies almost entirely below zero")
        if self.window_len_mean + 4 * self.window_len_std < 1:
            raise ValueError("window lengths would almost all round below one hour")


@dataclass
class ScenarioSpec:
    fleet: Fleet
    demand: DemandProfile
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (
            isinstance(other, ScenarioSpec)
            and self.fleet == other.fleet
            and self.demand == other.demand
            and self.meta == other.meta
        )


def _device_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_fleet(n: int, params: FleetParams | None = None, seed: int = 0) -> Fleet:
    """Random fleet with one contiguous integer-hour window per device.

    Each device draws from its own PCG64 stream spawned from ``seed``, so
    device ``j`` is the same regardless of ``n``. Energies below zero are
    truncated to zero; window lengths are at least one hour and windows are
    clipped to the horizon.
    """
    if n < 1:
        raise ValueError(f"need at least one device, got {n}")
    p = params or FleetParams()
    devices = []
    for j, rng in enumerate(_device_rngs(seed, n)):
        energy, start, length = rng.normal(
            [p.energy_mean, p.window_start_mean, p.window_len_mean],
            [p.energy_std, p.window_start_std, p.window_len_std],
        )
        start = float(np.round(start)) - NOON_OFFSET
        length = max(1.0, float(np.round(length)))
        lo, hi = min(max(start, 0.0), p.horizon), min(max(start + length, 0.0), p.horizon)
        avail = AvailabilitySet.from_pairs([(lo, hi)] if hi > lo else [])
        devices.append(Device(f"ev{j}", p.rated_power, max(float(energy), 0.0), 1.0, avail))
    return Fleet(tuple(devices), p.horizon)


def aggregate_availability(fleet: Fleet, slot_width: float = 1.0) -> np.ndarray:
    """Available rated power on each slot of the horizon (kW)."""
    n_slots = int(round(fleet.horizon / slot_width))
    mids = (np.arange(n_slots) + 0.5) * slot_width
    return fleet.available_on(mids) @ fleet.rated_power


def generate_demand(
    fleet: Fleet,
    fill: float = 0.8,
    active: tuple[float, float] = (4.0, 23.0),
    seed: int = 0,
    jitter: float = 0.2,
) -> DemandProfile:
    """Hourly demand following the available power, zero outside ``active``.

    The total is ``fill`` times the stored energy, capped slot-wise at the
    available power. ``jitter`` perturbs the shape multiplicatively.
    """
    if not fill >= 0:
        raise ValueError("fill must be nonnegative")
    avail = aggregate_availability(fleet)
    mids = np.arange(avail.size) + 0.5
    rng = np.random.Generator(np.random.PCG64(seed))
    shape = avail * ((mids > active[0]) & (mids < active[1])) * rng.uniform(1 - jitter, 1 + jitter, avail.size)
    total = shape.sum()
    values = np.zeros(avail.size) if total == 0 else shape * (fill * fleet.initial_energy.sum() / total)
    values = np.round(np.minimum(values, avail), 6)
    return DemandProfile.from_slots(values.tolist(), 1.0)


def counterexample_fixture() -> tuple[Fleet, DemandProfile, DemandProfile, dict]:
    """Two unit-power devices with ``x(0) = [3, 6]``, ``A_1 = [0, 5]``, ``A_2 = [0, 12]``."""
    fleet = Fleet(
        (
            Device("1", 1.0, 3.0, 1.0, AvailabilitySet.from_pairs([(0, 5)])),
            Device("2", 1.0, 6.0, 1.0, AvailabilitySet.from_pairs([(0, 12)])),
        ),
        12.0,
    )
    d1 = DemandProfile((0.0, 3.0, 5.0, 11.0, 12.0), (1.0, 0.0, 1.0, 0.0))
    d2 = DemandProfile((0.0, 2.0, 5.0, 6.0, 12.0), (1.0, 2.0, 1.0, 0.0))
    expected = {
        "lambda_1": np.array([6 / 7, 0.0]),
        "lambda_2": np.array([0.0, 0.0]),
        "x_tilde0_1": np.array([9.0, 6.0]),
    }
    return fleet, d1, d2, expected


def ttf_fixture() -> tuple[Fleet, DemandProfile, float]:
    """Two devices holding 2 kWh each, one leaving at t = 2; constant 1 kW demand on [0, 10]."""
    fleet = Fleet(
        (
            Device("1", 1.0, 2.0, 1.0, AvailabilitySet.from_pairs([(0, 2)])),
            Device("2", 1.0, 2.0, 1.0, AvailabilitySet.from_pairs([(0, 10)])),
        ),
        10.0,
    )
    return fleet, DemandProfile.constant(1.0, 10.0), 4.0


def gap_fixture() -> tuple[Fleet, DemandProfile, float]:
    """Fixture where the least-unserved schedule fails well before the latest possible failure.

    Device 1 (1 kWh, leaves at t = 2) and device 2 (2 kWh, stays until 4)
    face 1 kW on ``[0, 4]``. Using device 2 first then device 1 lasts until
    t = 3; the least-unserved dispatch drains device 2 in no particular order
    and fails at t = 1 while leaving the same 1 kWh unserved.
    """
    fleet = Fleet(
        (
            Device("1", 1.0, 1.0, 1.0, AvailabilitySet.from_pairs([(0, 2)])),
            Device("2", 1.0, 2.0, 1.0, AvailabilitySet.from_pairs([(0, 4)])),
        ),
        4.0,
    )
    return fleet, DemandProfile.constant(1.0, 4.0), 3.0


def random_aligned_instance(
    rng: np.random.Generator,
    max_n: int = 5,
    max_slots: int = 8,
    n: int | None = None,
    n_slots: int | None = None,
    demand_scale: float = 1.0,
) -> tuple[Fleet, DemandProfile]:
    """Small fleet and demand on a unit slot grid with dyadic values.

    Dyadic values (multiples of 1/4 or 1/8) are exact in floating point, so
    the max-flow oracle works on the same numbers as the solvers.
    """
    n = int(rng.integers(1, max_n + 1)) if n is None else n
    T = int(rng.integers(1, max_slots + 1)) if n_slots is None else n_slots
    devices = []
    for j in range(n):
        power = float(rng.integers(1, 5)) / 2
        n_windows = int(rng.integers(0, 3))
        cuts = np.sort(rng.choice(T + 1, size=min(2 * n_windows, T + 1), replace=False))
        pairs = [(float(a), float(b)) for a, b in zip(cuts[::2], cuts[1::2]) if b > a]
        if not pairs and rng.random() < 0.7:
            a = int(rng.integers(0, T))
            pairs = [(float(a), float(rng.integers(a + 1, T + 1)))]
        energy = float(rng.integers(0, 4 * T + 1)) / 4 * power
        devices.append(Device(f"d{j}", power, energy, 1.0, AvailabilitySet.from_pairs(pairs)))
    fleet = Fleet(tuple(devices), float(T))
    avail = aggregate_availability(fleet)
    levels = rng.integers(0, 9, size=T) / 8
    values = np.round(levels * np.maximum(avail, 0.5) * demand_scale * 8) / 8
    return fleet, DemandProfile.from_slots(values.tolist(), 1.0)


SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["horizon_hours", "devices", "demand"],
    "additionalProperties": False,
    "properties": {
        "horizon_hours": {"type": "number", "exclusiveMinimum": 0},
        "devices": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "rated_power_kw", "initial_energy_kwh", "availability"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "rated_power_kw": {"type": "number", "exclusiveMinimum": 0},
                    "initial_energy_kwh": {"type": "number", "minimum": 0},
                    "efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "availability": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "number"}, {"type": "number"}],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                },
            },
        },
        "demand": {
            "type": "object",
            "required": ["breakpoints", "values_kw"],
            "additionalProperties": False,
            "properties": {
                "breakpoints": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "values_kw": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "meta": {"type": "object"},
    },
}


class ScenarioError(ValueError):
    """Schema or consistency violation; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def scenario_to_json(spec: ScenarioSpec) -> dict:
    return {
        "horizon_hours": spec.fleet.horizon,
        "devices": [
            {
                "id": d.id,
                "rated_power_kw": d.rated_power,
                "initial_energy_kwh": d.initial_energy,
                "efficiency": d.efficiency,
                "availability": d.availability.to_pairs(),
            }
            for d in spec.fleet.devices
        ],
        "demand": {"breakpoints": list(spec.demand.breakpoints), "values_kw": list(spec.demand.values)},
        "meta": dict(spec.meta),
    }


def scenario_from_json(data: dict) -> ScenarioSpec:
    """Validate and build; errors carry a dotted path such as ``devices.1``."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, ".".join(str(p) for p in err.absolute_path))
    horizon = float(data["horizon_hours"])
    devices = []
    for j, d in enumerate(data["devices"]):
        try:
            devices.append(
                Device(
                    d["id"],
                    float(d["rated_power_kw"]),
                    float(d["initial_energy_kwh"]),
                    float(d.get("efficiency", 1.0)),
                    AvailabilitySet.from_pairs(d["availability"]),
                )
            )
        except ValueError as exc:
            raise ScenarioError(str(exc), f"devices.{j}") from None
    try:
        fleet = Fleet(tuple(devices), horizon)
    except ValueError as exc:
        raise ScenarioError(str(exc), "devices") from None
    try:
        demand = DemandProfile(tuple(data["demand"]["breakpoints"]), tuple(data["demand"]["values_kw"]))
    except ValueError as exc:
        raise ScenarioError(str(exc), "demand") from None
    if abs(demand.horizon - horizon) > 1e-9 * max(1.0, horizon):
        raise ScenarioError(f"demand ends at {demand.horizon}, horizon is {horizon}", "demand.breakpoints")
    return ScenarioSpec(fleet, demand, dict(data.get("meta", {})))


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_json(spec), indent=2) + "\n")


def load_scenario(path: str | Path) -> ScenarioSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return scenario_from_json(data)


def generated_scenario(n: int, seed: int, fill: float = 0.8, params: FleetParams | None = None) -> ScenarioSpec:
    fleet = generate_fleet(n, params, seed)
    return ScenarioSpec(fleet, generate_demand(fleet, fill, seed=seed), {"seed": seed, "note": f"generated n={n}"})
