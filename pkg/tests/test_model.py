import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetdispatch import AvailabilitySet, DemandProfile, Device, Fleet, Interval, group_partition
from fleetdispatch.model import (
    external_energy,
    from_time_to_discharge,
    measure_intersection,
    to_time_to_discharge,
)


def _fleet(powers, energies, horizon=12.0):
    return Fleet(
        tuple(Device(str(i), p, e, 1.0, AvailabilitySet.full(horizon)) for i, (p, e) in enumerate(zip(powers, energies))),
        horizon,
    )


@pytest.mark.parametrize(
    "energy, power, expected",
    [([9, 6], [1, 1], [9, 6]), ([0, 0], [1, 3], [0, 0]), ([5], [2], [2.5])],
)
def test_time_to_discharge(energy, power, expected):
    fleet = _fleet(power, energy)
    np.testing.assert_allclose(to_time_to_discharge(energy, fleet), expected)
    np.testing.assert_allclose(from_time_to_discharge(expected, fleet), energy)


def test_time_to_discharge_shape_mismatch():
    with pytest.raises(ValueError):
        to_time_to_discharge([1.0], _fleet([1, 1], [1, 1]))


@pytest.mark.parametrize("internal, eta, expected", [(10, 0.9, 9), (0, 0.5, 0), (8, 1.0, 8)])
def test_external_energy(internal, eta, expected):
    assert external_energy(internal, eta) == pytest.approx(expected)


@pytest.mark.parametrize("eta", [0.0, -0.1, 1.2])
def test_external_energy_rejects_bad_efficiency(eta):
    with pytest.raises(ValueError):
        external_energy(1.0, eta)


def test_efficiency_applied_once_at_ingestion():
    dev = Device.from_internal_energy("a", 2.0, 10.0, 0.9, AvailabilitySet.full(5))
    assert dev.initial_energy == pytest.approx(9.0)
    assert dev.efficiency == 0.9


@pytest.mark.parametrize(
    "pairs, window, expected",
    [([(0, 5)], (0, 12), 5.0), ([], (0, 10), 0.0), ([(1, 3), (6, 8)], (2, 7), 2.0)],
)
def test_measure_intersection(pairs, window, expected):
    assert measure_intersection(AvailabilitySet.from_pairs(pairs), Interval(*window)) == pytest.approx(expected)


def test_counterexample_complement_measure():
    avail = AvailabilitySet.from_pairs([(0, 5)])
    assert avail.complement(12.0).measure == pytest.approx(7.0)


@pytest.mark.parametrize(
    "x, tol, expected",
    [
        ([9, 6], 0.0, [(9, (0,)), (6, (1,))]),
        ([3, 3, 3], 1e-9, [(3, (0, 1, 2))]),
        ([4, 4 + 1e-12, 2], 1e-9, [(4, (0, 1)), (2, (2,))]),
    ],
)
def test_group_partition_examples(x, tol, expected):
    groups = group_partition(x, tol)
    assert [m for _, m in groups] == [m for _, m in expected]
    np.testing.assert_allclose([v for v, _ in groups], [v for v, _ in expected])


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(2.0, 2.0)
    with pytest.raises(ValueError):
        Interval(-1.0, 2.0)


def test_availability_merges_touching_intervals():
    avail = AvailabilitySet.from_pairs([(3, 5), (0, 1), (1, 2), (4, 6)])
    assert avail.to_pairs() == [[0, 2], [3, 6]]


def test_fleet_rejects_window_beyond_horizon():
    with pytest.raises(ValueError):
        Fleet((Device("a", 1.0, 1.0, 1.0, AvailabilitySet.from_pairs([(0, 13)])),), 12.0)


@pytest.mark.parametrize("kwargs", [{"rated_power": 0.0}, {"initial_energy": -1.0}, {"efficiency": 1.5}])
def test_device_validation(kwargs):
    base = {"id": "a", "rated_power": 1.0, "initial_energy": 1.0, "efficiency": 1.0}
    base.update(kwargs)
    with pytest.raises(ValueError):
        Device(**base)


def test_demand_profile_queries():
    d = DemandProfile((0.0, 3.0, 5.0, 11.0, 12.0), (1.0, 0.0, 1.0, 0.0))
    assert d.integral() == pytest.approx(9.0)
    assert d.value_at(3.0) == 0.0
    assert d.value_at(2.999) == 1.0
    assert d.restrict(4.0).breakpoints == (0.0, 3.0, 4.0)
    assert d.with_horizon(14.0).integral() == pytest.approx(9.0)


@pytest.mark.parametrize(
    "bp, vals",
    [((0.0,), ()), ((1.0, 2.0), (1.0,)), ((0.0, 2.0, 1.0), (1.0, 1.0)), ((0.0, 1.0), (-1.0,))],
)
def test_demand_profile_validation(bp, vals):
    with pytest.raises(ValueError):
        DemandProfile(bp, vals)


intervals = st.lists(
    st.tuples(st.floats(0, 20), st.floats(0.01, 5)).map(lambda p: (p[0], min(p[0] + p[1], 24.0))),
    max_size=6,
)


@settings(max_examples=200, deadline=None)
@given(intervals)
def test_availability_normal_form(pairs):
    pairs = [p for p in pairs if p[1] > p[0]]
    avail = AvailabilitySet.from_pairs(pairs)
    ivs = avail.intervals
    assert all(a.end < b.start for a, b in zip(ivs, ivs[1:]))
    assert AvailabilitySet(ivs) == avail


@settings(max_examples=200, deadline=None)
@given(intervals, st.floats(0, 23), st.floats(0.01, 10))
def test_measure_plus_complement_is_window(pairs, start, length):
    pairs = [p for p in pairs if p[1] > p[0]]
    avail = AvailabilitySet.from_pairs(pairs)
    window = Interval(start, min(start + length, 24.0))
    total = measure_intersection(avail, window) + measure_intersection(avail.complement(24.0), window)
    assert total == pytest.approx(window.length, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12), st.sampled_from([0.0, 1e-9, 0.1]))
def test_group_partition_is_partition(x, tol):
    groups = group_partition(x, tol)
    members = sorted(i for _, m in groups for i in m)
    assert members == list(range(len(x)))
    values = [v for v, _ in groups]
    assert all(a > b for a, b in zip(values, values[1:]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0, 50)), min_size=1, max_size=8))
def test_time_to_discharge_round_trip(pe):
    fleet = _fleet([p for p, _ in pe], [e for _, e in pe])
    energy = np.array([e for _, e in pe])
    back = from_time_to_discharge(to_time_to_discharge(energy, fleet), fleet)
    np.testing.assert_allclose(back, energy, rtol=1e-12, atol=1e-300)
