import itertools

import numpy as np
import pytest

from conftest import random_demand, random_fleet
from fleetdispatch import (
    AvailabilitySet,
    DemandProfile,
    Device,
    Fleet,
    counterexample_fixture,
    discretize,
    feasibility_by_dispatch,
    flexibility_dominates,
    oracle_feasible,
    sorted_prefix_check,
    subset_feasibility_check,
)
from fleetdispatch.feasibility import DepletionWitness, SubsetWitness, infer_slot_width, subset_violation
from fleetdispatch.oracle import DiscreteInstance, MisalignedGridError
from fleetdispatch.scenario import random_aligned_instance


def _on_intervals(schedule, j, tol=1e-9):
    """Maximal intervals on which device ``j`` has a positive rate."""
    out = []
    bp = schedule.breakpoints
    for k in np.flatnonzero(schedule.rates[:, j] > tol):
        if out and abs(out[-1][1] - bp[k]) <= tol:
            out[-1][1] = bp[k + 1]
        else:
            out.append([bp[k], bp[k + 1]])
    return [tuple(iv) for iv in out]


def test_counterexample_d1_schedule():
    fleet, d1, _, _ = counterexample_fixture()
    verdict = feasibility_by_dispatch(fleet, d1)
    assert verdict.feasible and verdict.witness is None
    assert _on_intervals(verdict.schedule, 0) == pytest.approx([(0.0, 3.0)], abs=1e-9)
    assert _on_intervals(verdict.schedule, 1) == pytest.approx([(5.0, 11.0)], abs=1e-9)


def test_counterexample_d2_schedule():
    fleet, _, d2, _ = counterexample_fixture()
    verdict = feasibility_by_dispatch(fleet, d2)
    assert verdict.feasible
    assert _on_intervals(verdict.schedule, 0) == pytest.approx([(2.0, 5.0)], abs=1e-9)
    assert _on_intervals(verdict.schedule, 1) == pytest.approx([(0.0, 6.0)], abs=1e-9)


def test_aggregate_energy_bound_gives_infeasible():
    fleet, _, _, _ = counterexample_fixture()
    verdict = feasibility_by_dispatch(fleet, DemandProfile.constant(2.0, 12.0))
    assert not verdict.feasible
    assert verdict.schedule is None
    assert isinstance(verdict.witness, DepletionWitness)
    assert verdict.to_json()["witness"]["kind"] in {"negative_state", "shortfall"}


def _single_device(demand):
    fleet = Fleet((Device("a", 1.0, 1.0, 1.0, AvailabilitySet.from_pairs([(1, 2)])),), 2.0)
    return fleet, DemandProfile.from_slots(demand, 1.0)


def test_subset_demand_before_availability():
    verdict = subset_feasibility_check(*_single_device([1.0, 0.0]), 1.0)
    assert not verdict.feasible
    assert verdict.witness == SubsetWitness((0,), 1.0, 0.0)


def test_subset_demand_inside_availability():
    verdict = subset_feasibility_check(*_single_device([0.0, 1.0]), 1.0)
    assert verdict.feasible and verdict.witness is None and verdict.schedule is None


def test_subset_counterexample_and_extra_unit():
    fleet, d1, _, _ = counterexample_fixture()
    assert subset_feasibility_check(fleet, d1, 1.0).feasible
    values = [d1.value_at(k + 0.5) for k in range(12)]
    values[11] += 1.0
    verdict = subset_feasibility_check(fleet, DemandProfile.from_slots(values, 1.0), 1.0)
    assert not verdict.feasible
    assert 11 in verdict.witness.slots
    assert verdict.witness.demand_energy > verdict.witness.bound


def test_subset_cap_and_alignment_errors():
    fleet, d1, _, _ = counterexample_fixture()
    with pytest.raises(ValueError, match="cap"):
        subset_feasibility_check(fleet, d1, 0.25)
    with pytest.raises(MisalignedGridError):
        subset_feasibility_check(fleet, d1, 0.7)


def test_lowest_mask_witness_is_reported():
    inst = DiscreteInstance(1.0, [1.0], [[0.0, 0.0, 0.0]], [0.0, 1.0, 1.0])
    assert subset_violation(inst).slots == (1,)
    assert subset_violation(inst, chunk_bits=1).slots == (1,)


def test_infer_slot_width():
    fleet, d1, _, _ = counterexample_fixture()
    assert infer_slot_width(fleet, d1) == 1.0
    half = DemandProfile((0.0, 2.5, 12.0), (1.0, 0.0))
    assert infer_slot_width(fleet, half) == 0.5


def test_verdict_json_shape():
    fleet, d1, _, _ = counterexample_fixture()
    out = feasibility_by_dispatch(fleet, d1).to_json("schedule.csv")
    assert out == {"feasible": True, "method": "dispatch", "witness": None, "schedule_ref": "schedule.csv"}


def test_dominance_examples():
    fleet = Fleet(tuple(Device(str(i), 1.0, 1.0, 1.0, AvailabilitySet.full(4.0)) for i in range(2)), 4.0)
    assert flexibility_dominates([1, 1], [1, 1], fleet)
    assert flexibility_dominates([2, 0], [1, 1], fleet)
    assert not flexibility_dominates([1, 1], [2, 0], fleet)
    assert flexibility_dominates([-1, 1], [0, 1], fleet)
    with pytest.raises(ValueError):
        flexibility_dominates([1, 1, 1], [1, 1], fleet)


def _agree(fleet, demand):
    inst = discretize(fleet, demand, 1.0)
    truth = oracle_feasible(inst)
    assert feasibility_by_dispatch(fleet, demand).feasible == truth
    assert subset_feasibility_check(fleet, demand, 1.0).feasible == truth
    return truth


@pytest.mark.parametrize("seed", range(300))
def test_random_aligned_agreement(seed):
    rng = np.random.default_rng(seed)
    _agree(*random_aligned_instance(rng))


def _exhaustive_cases():
    """All demand levels {0, 1, 2} on T = 3 slots for a fixed 2-device fleet."""
    fleet = Fleet(
        (
            Device("a", 1.0, 1.5, 1.0, AvailabilitySet.from_pairs([(0, 2)])),
            Device("b", 2.0, 2.0, 1.0, AvailabilitySet.from_pairs([(1, 3)])),
        ),
        3.0,
    )
    for levels in itertools.product([0.0, 1.0, 2.0], repeat=3):
        yield fleet, DemandProfile.from_slots(list(levels), 1.0)


def test_exhaustive_small_grid():
    verdicts = [_agree(f, d) for f, d in _exhaustive_cases()]
    assert any(verdicts) and not all(verdicts)


@pytest.mark.parametrize("n_slots", [9, 10])
def test_longer_grids_agree(n_slots):
    rng = np.random.default_rng(n_slots)
    for _ in range(10):
        _agree(*random_aligned_instance(rng, max_n=3, n_slots=n_slots))


@pytest.mark.parametrize("seed", range(200))
def test_schedules_are_sound_and_meet_subset_inequalities(seed):
    rng = np.random.default_rng(seed)
    fleet = random_fleet(rng)
    demand = random_demand(rng, fleet)
    verdict = feasibility_by_dispatch(fleet, demand)
    if not verdict.feasible:
        assert verdict.witness is not None
        return
    schedule = verdict.schedule
    assert schedule.violations(fleet, demand) == []
    # Random measurable W built from segments of the schedule grid.
    bp = schedule.breakpoints
    for _ in range(20):
        pick = rng.random(bp.size - 1) < 0.5
        lengths = np.diff(bp)
        mids = 0.5 * (bp[:-1] + bp[1:])
        lhs = np.sum(pick * lengths * demand.values_at(mids))
        avail = fleet.available_on(mids)
        card = (pick[:, None] * lengths[:, None] * avail).sum(axis=0)
        rhs = np.sum(np.minimum(card, fleet.x0) * fleet.rated_power)
        assert lhs <= rhs + 1e-9 * max(1.0, rhs)


@pytest.mark.parametrize("seed", range(100))
def test_full_availability_reduces_to_sorted_prefix(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 9))
    n = int(rng.integers(1, 4))
    caps = np.repeat(rng.integers(1, 4, size=(n, 1)) / 2, T, axis=1)
    supply = rng.integers(0, 4 * T, size=n) / 4 * caps[:, 0]
    demand = np.sort(rng.integers(0, 9, size=T) / 4 * caps[:, 0].sum() / 2)[::-1]
    inst = DiscreteInstance(1.0, supply, caps, demand)
    assert sorted_prefix_check(inst) == (subset_violation(inst) is None) == oracle_feasible(inst)
