"""Feasibility verdicts for an aggregate demand profile.

Two independent routes are provided. :func:`feasibility_by_dispatch`
constructs a schedule from the fixed point of the auxiliary-energy map and
checks it. :func:`subset_feasibility_check` enumerates every subset ``W`` of
time slots and tests

    sum_{k in W} d_k * width <= sum_j min(|A_j ∩ W| * width, x_j) * P_j

which is necessary and sufficient on slot-aligned data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fixed_point import FixedPointNotConverged, FixedPointResult, solve_fixed_point
from .ggddf import Trajectory
from .model import DemandProfile, Fleet
from .oracle import DiscreteInstance, MisalignedGridError, discretize
from .schedule import DispatchSchedule

log = logging.getLogger(__name__)

STATE_TOL = 1e-9
SUBSET_CAP = 24
_CHUNK_BITS = 16


@dataclass(frozen=True)
class SubsetWitness:
    """Slots (0-based) whose demand exceeds what the fleet can deliver in them."""

    slots: tuple[int, ...]
    demand_energy: float
    bound: float

    def to_json(self) -> dict:
        return {"kind": "subset", "slots": list(self.slots), "demand_kwh": self.demand_energy, "bound_kwh": self.bound}


@dataclass(frozen=True)
class DepletionWitness:
    """First time the augmented dispatch runs a device dry, or demand exceeds available power."""

    device: int | None
    time: float
    kind: str = "negative_state"

    def to_json(self) -> dict:
        return {"kind": self.kind, "device": self.device, "time": self.time}


@dataclass
class FeasibilityVerdict:
    feasible: bool
    schedule: DispatchSchedule | None = None
    witness: SubsetWitness | DepletionWitness | None = None
    method: str = "dispatch"
    fixed_point: FixedPointResult | None = None

    def to_json(self, schedule_ref: str | None = None) -> dict:
        return {
            "feasible": self.feasible,
            "method": self.method,
            "witness": None if self.witness is None else self.witness.to_json(),
            "schedule_ref": schedule_ref,
        }


def restricted_schedule(traj: Trajectory) -> DispatchSchedule:
    """Policy rates with every off-window draw set to zero."""
    return DispatchSchedule(traj.event_times.copy(), np.where(traj.available, traj.rates, 0.0))


def first_failure(traj: Trajectory, tol: float = STATE_TOL) -> DepletionWitness | None:
    """Earliest negative state or positive shortfall along a trajectory."""
    x = traj.states
    candidates = []
    if np.any(x[0] < -tol):
        j = int(np.argmin(x[0]))
        candidates.append(DepletionWitness(j, float(traj.event_times[0])))
    for k in range(traj.n_segments):
        if traj.shortfall[k] > tol:
            candidates.append(DepletionWitness(None, float(traj.event_times[k]), "shortfall"))
            break
    below = np.flatnonzero(np.any(x[1:] < -tol, axis=1))
    if below.size:
        k = below[0]
        start, end = x[k], x[k + 1]
        slope = (start - end) / max(traj.durations[k], 1e-300)
        best = None
        for j in np.flatnonzero(end < -tol):
            t_cross = traj.event_times[k] + (max(start[j], 0.0) / slope[j] if slope[j] > 0 else 0.0)
            if best is None or t_cross < best[1]:
                best = (int(j), float(t_cross))
        candidates.append(DepletionWitness(best[0], best[1]))
    return min(candidates, key=lambda w: w.time) if candidates else None


def infer_slot_width(fleet: Fleet, demand: DemandProfile, max_denominator: int = 10**6) -> float:
    """Largest width dividing every breakpoint and availability endpoint."""
    times = [fleet.horizon, *demand.breakpoints]
    for dev in fleet.devices:
        times.extend(dev.availability.endpoints)
    width = Fraction(0)
    for t in times:
        f = Fraction(t).limit_denominator(max_denominator)
        if width == 0:
            width = f
        elif f != 0:
            num = math.gcd(width.numerator * f.denominator, f.numerator * width.denominator)
            width = Fraction(num, width.denominator * f.denominator)
    return float(width)


def feasibility_by_dispatch(
    fleet: Fleet,
    demand: DemandProfile,
    tol: float = 1e-8,
    max_iter: int = 1000,
    warm_start=None,
    fallback: bool = True,
) -> FeasibilityVerdict:
    """Decide feasibility by dispatching from the fixed-point augmented state.

    When the fixed-point iteration does not converge and the data are
    slot-aligned, the verdict falls back to the subset enumeration.
    """
    try:
        fp = solve_fixed_point(fleet, demand, tol=tol, max_iter=max_iter, warm_start=warm_start)
    except FixedPointNotConverged as exc:
        if not fallback:
            raise
        try:
            width = infer_slot_width(fleet, demand)
            verdict = subset_feasibility_check(fleet, demand, width)
        except (MisalignedGridError, ValueError):
            raise exc from None
        log.warning("fixed point did not converge (%s); used the subset test instead", exc)
        verdict.fixed_point = exc.best
        return verdict

    traj = fp.trajectory
    failure = first_failure(traj)
    if failure is not None:
        return FeasibilityVerdict(False, None, failure, "dispatch", fp)
    schedule = restricted_schedule(traj)
    problems = schedule.violations(fleet, demand)
    if problems:
        raise RuntimeError("dispatch schedule failed its own admissibility check: " + "; ".join(problems))
    return FeasibilityVerdict(True, schedule, None, "dispatch", fp)


def _subset_arrays(inst: DiscreteInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    avail = (inst.caps > 0).T.astype(float)  # (T, N)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_slot = np.where(inst.caps > 0, inst.caps, 0.0).max(axis=1)
    return inst.demand, avail, per_slot, inst.supply


def subset_violation(inst: DiscreteInstance, chunk_bits: int = _CHUNK_BITS) -> SubsetWitness | None:
    """Lowest-index violated subset inequality, enumerating all ``2**T`` slot sets.

    Subsets are visited in increasing bitmask order (bit ``k`` is slot ``k``).
    """
    demand, avail, per_slot, supply = _subset_arrays(inst)
    n_slots = demand.size
    eps = 1e-9 * max(1.0, float(demand.sum()))
    bits_idx = np.arange(n_slots, dtype=np.int64)
    total = 1 << n_slots
    chunk = 1 << min(chunk_bits, n_slots)
    for lo in range(0, total, chunk):
        masks = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        bits = ((masks[:, None] >> bits_idx) & 1).astype(float)
        lhs = bits @ demand
        card = bits @ avail
        bound = np.minimum(card * per_slot, supply).sum(axis=1)
        bad = np.flatnonzero(lhs > bound + eps)
        if bad.size:
            i = bad[0]
            slots = tuple(int(k) for k in np.flatnonzero(bits[i]))
            return SubsetWitness(slots, float(lhs[i]), float(bound[i]))
    return None


def subset_feasibility_check(
    fleet: Fleet,
    demand: DemandProfile,
    slot_width: float,
    max_slots: int = SUBSET_CAP,
) -> FeasibilityVerdict:
    """Exhaustive subset-inequality test on a slot grid.

    No schedule is produced; a feasible verdict carries only the flag.
    """
    inst = discretize(fleet, demand, slot_width)
    if inst.n_slots > max_slots:
        raise ValueError(
            f"{inst.n_slots} slots exceed the enumeration cap of {max_slots}; coarsen the grid or dispatch instead"
        )
    witness = subset_violation(inst)
    return FeasibilityVerdict(witness is None, None, witness, "subset")


def sorted_prefix_check(inst: DiscreteInstance) -> bool:
    """Feasibility for a fully available fleet: sorted-demand prefix sums only."""
    demand = np.sort(inst.demand)[::-1]
    per_slot = inst.caps.max(axis=1)
    k = np.arange(1, demand.size + 1)
    bound = np.minimum(k[:, None] * per_slot[None, :], inst.supply[None, :]).sum(axis=1)
    eps = 1e-9 * max(1.0, float(demand.sum()))
    return bool(np.all(np.cumsum(demand) <= bound + eps))


def flexibility_dominates(x_a, x_b, fleet: Fleet) -> bool:
    """True when state ``x_b`` can serve every profile state ``x_a`` can (full availability).

    Compares ``c(m) = sum_j min(m, x_j) P_j`` for both states at every
    breakpoint; both sides are concave piecewise-linear in ``m``, so the
    breakpoints suffice. Negative entries count as empty devices.
    """
    x_a = np.clip(np.asarray(x_a, dtype=float), 0.0, None)
    x_b = np.clip(np.asarray(x_b, dtype=float), 0.0, None)
    if x_a.shape != (fleet.size,) or x_b.shape != (fleet.size,):
        raise ValueError(f"states must have {fleet.size} entries, got {x_a.shape} and {x_b.shape}")
    power = fleet.rated_power
    ms = np.union1d(x_a, x_b)
    cap_a = np.minimum(ms[:, None], x_a[None, :]) @ power
    cap_b = np.minimum(ms[:, None], x_b[None, :]) @ power
    eps = 1e-9 * max(1.0, float(cap_a.max(initial=0.0)))
    return bool(np.all(cap_b >= cap_a - eps))
