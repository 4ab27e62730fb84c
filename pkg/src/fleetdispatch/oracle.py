"""Brute-force ground truth on slot-aligned instances via maximum flow.

The network is source -> device (capacity: stored energy) -> (device, slot)
(capacity: rated power times slot width, zero outside availability) ->
slot -> sink (capacity: slot demand energy). All capacities are converted to
exact rationals and scaled to integers before solving, so flow values are
exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np

from .model import DemandProfile, Fleet


class MisalignedGridError(ValueError):
    pass


@dataclass
class DiscreteInstance:
    """Slot-sampled fleet and demand; every quantity is energy in kWh."""

    slot_width: float
    supply: np.ndarray
    caps: np.ndarray
    demand: np.ndarray

    def __post_init__(self):
        self.supply = np.asarray(self.supply, dtype=float)
        self.caps = np.asarray(self.caps, dtype=float).reshape(self.supply.size, -1)
        self.demand = np.asarray(self.demand, dtype=float)
        if self.caps.shape[1] != self.demand.size:
            raise ValueError("caps and demand disagree on the slot count")
        if np.any(self.supply < 0) or np.any(self.caps < 0) or np.any(self.demand < 0):
            raise ValueError("instance quantities must be nonnegative")

    @property
    def n_devices(self) -> int:
        return self.supply.size

    @property
    def n_slots(self) -> int:
        return self.demand.size

    @property
    def total_demand(self) -> float:
        return float(self.demand.sum())

    def prefix(self, p: int) -> DiscreteInstance:
        """Same instance with the demand of slots ``p, p+1, ...`` removed."""
        demand = self.demand.copy()
        demand[p:] = 0.0
        return DiscreteInstance(self.slot_width, self.supply, self.caps, demand)

    def to_json(self) -> dict:
        return {
            "slot_width": self.slot_width,
            "supply_kwh": self.supply.tolist(),
            "caps_kwh": self.caps.tolist(),
            "demand_kwh": self.demand.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> DiscreteInstance:
        return cls(
            float(data["slot_width"]),
            np.array(data["supply_kwh"], dtype=float),
            np.array(data["caps_kwh"], dtype=float),
            np.array(data["demand_kwh"], dtype=float),
        )


def dump_instance(inst: DiscreteInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_json(), indent=2))


def load_instance(path: str | Path) -> DiscreteInstance:
    return DiscreteInstance.from_json(json.loads(Path(path).read_text()))


def _slot_index(t: float, width: float) -> int:
    k = round(t / width)
    if abs(t - k * width) > 1e-9 * max(1.0, abs(t)):
        raise MisalignedGridError(f"time {t} is not a multiple of the slot width {width}")
    return k


def discretize(fleet: Fleet, demand: DemandProfile, slot_width: float) -> DiscreteInstance:
    """Lossless slot translation; refuses rather than approximates misaligned data."""
    if not slot_width > 0:
        raise ValueError(f"slot width must be positive, got {slot_width}")
    n_slots = _slot_index(fleet.horizon, slot_width)
    for t in demand.breakpoints:
        _slot_index(t, slot_width)
    for dev in fleet.devices:
        for t in dev.availability.endpoints:
            _slot_index(t, slot_width)
    mids = (np.arange(n_slots) + 0.5) * slot_width
    slot_demand = demand.values_at(mids) * slot_width
    avail = fleet.available_on(mids)
    caps = (avail * (fleet.rated_power * slot_width)).T
    return DiscreteInstance(slot_width, fleet.initial_energy.copy(), caps, slot_demand)


def _scaled(values: list[float]) -> tuple[list[int], int]:
    fracs = [Fraction(v) for v in values]
    scale = 1
    for f in fracs:
        scale = scale * f.denominator // math.gcd(scale, f.denominator)
    return [int(f * scale) for f in fracs], scale


def _network(inst: DiscreteInstance, weights: np.ndarray | None = None) -> tuple[nx.DiGraph, int]:
    n, T = inst.n_devices, inst.n_slots
    raw = list(inst.supply) + list(inst.caps.ravel()) + list(inst.demand)
    ints, scale = _scaled(raw)
    supply = ints[:n]
    caps = ints[n : n + n * T]
    dem = ints[n + n * T :]
    g = nx.DiGraph()
    for j in range(n):
        if supply[j] > 0:
            g.add_edge("s", ("dev", j), capacity=supply[j])
        for k in range(T):
            c = caps[j * T + k]
            if c > 0:
                attrs = {"capacity": c}
                if weights is not None:
                    attrs["weight"] = int(weights[j, k])
                g.add_edge(("dev", j), ("slot", k), **attrs)
    for k in range(T):
        if dem[k] > 0:
            g.add_edge(("slot", k), "t", capacity=dem[k])
    g.add_node("s")
    g.add_node("t")
    return g, scale


def _exact_maxflow(inst: DiscreteInstance) -> Fraction:
    g, scale = _network(inst)
    value = nx.maximum_flow_value(g, "s", "t")
    return Fraction(int(value), scale)


def maxflow_value(inst: DiscreteInstance) -> float:
    return float(_exact_maxflow(inst))


def _exact_total(inst: DiscreteInstance) -> Fraction:
    return sum((Fraction(v) for v in inst.demand), Fraction(0))


def oracle_feasible(inst: DiscreteInstance) -> bool:
    return _exact_maxflow(inst) == _exact_total(inst)


def oracle_min_unserved(inst: DiscreteInstance) -> float:
    return float(_exact_total(inst) - _exact_maxflow(inst))


def oracle_max_ttf(inst: DiscreteInstance, bisect: bool = False) -> int:
    """Largest ``p`` such that the demand of the first ``p`` slots is deliverable."""
    if bisect:
        lo, hi = 0, inst.n_slots
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if oracle_feasible(inst.prefix(mid)):
                lo = mid
            else:
                hi = mid - 1
        return lo
    p = 0
    while p < inst.n_slots and oracle_feasible(inst.prefix(p + 1)):
        p += 1
    return p


def oracle_flow(inst: DiscreteInstance, rng: np.random.Generator | None = None) -> np.ndarray:
    """Energy per (device, slot) of one maximum flow.

    With ``rng`` the flow minimises a random linear cost, which picks a
    different optimal vertex from run to run; useful for sampling
    alternative schedules.
    """
    weights = None if rng is None else rng.integers(0, 100, size=(inst.n_devices, inst.n_slots))
    g, scale = _network(inst, weights)
    if weights is None:
        _, flow = nx.maximum_flow(g, "s", "t")
    else:
        flow = nx.max_flow_min_cost(g, "s", "t")
    out = np.zeros((inst.n_devices, inst.n_slots))
    for j in range(inst.n_devices):
        for node, value in flow.get(("dev", j), {}).items():
            out[j, node[1]] = float(Fraction(int(value), scale))
    return out
