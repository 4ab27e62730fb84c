import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetdispatch import (
    FleetParams,
    ScenarioError,
    ScenarioSpec,
    counterexample_fixture,
    generate_demand,
    generate_fleet,
    load_scenario,
    save_scenario,
)
from fleetdispatch.scenario import (
    aggregate_availability,
    generated_scenario,
    random_aligned_instance,
    scenario_from_json,
    scenario_to_json,
)

GOLDEN = Path(__file__).parent / "data" / "counterexample.json"


def _counterexample_spec():
    fleet, d1, _, _ = counterexample_fixture()
    return ScenarioSpec(fleet, d1, {"note": "two-device counterexample, profile d1"})


def test_fixture_demand_properties():
    fleet, d1, d2, expected = counterexample_fixture()
    assert d1.integral() == pytest.approx(9.0) == fleet.initial_energy.sum()
    assert d1.restrict(2.0) == d2.restrict(2.0)
    assert d1.value_at(2.5) != d2.value_at(2.5)
    np.testing.assert_array_equal(expected["x_tilde0_1"], [9.0, 6.0])


def test_golden_file_matches_fixture(tmp_path):
    assert load_scenario(GOLDEN) == _counterexample_spec()
    out = tmp_path / "c.json"
    save_scenario(_counterexample_spec(), out)
    assert out.read_text() == GOLDEN.read_text()


def test_round_trip_generated(tmp_path):
    spec = generated_scenario(30, 4)
    path = tmp_path / "s.json"
    save_scenario(spec, path)
    assert load_scenario(path) == spec


def test_missing_rated_power_names_device():
    data = scenario_to_json(_counterexample_spec())
    del data["devices"][1]["rated_power_kw"]
    with pytest.raises(ScenarioError) as info:
        scenario_from_json(data)
    assert info.value.path == "devices.1"
    assert "rated_power_kw" in str(info.value)


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d["devices"][0].update(initial_energy_kwh=-1.0), "devices.0.initial_energy_kwh"),
        (lambda d: d["demand"]["values_kw"].append(1.0), "demand"),
        (lambda d: d.update(horizon_hours=13.0), "demand.breakpoints"),
        (lambda d: d.update(horizon_hours=10.0), "devices"),
        (lambda d: d["devices"][0].update(availability=[[3.0, 1.0]]), "devices.0"),
        (lambda d: d.update(extra=1), ""),
    ],
)
def test_schema_violations_report_paths(mutate, path):
    data = scenario_to_json(_counterexample_spec())
    mutate(data)
    with pytest.raises(ScenarioError) as info:
        scenario_from_json(data)
    assert info.value.path == path


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_five_hundred_device_fleet():
    fleet = generate_fleet(500, seed=7)
    assert fleet.size == 500
    assert np.all(fleet.rated_power == 1.0)
    energy = fleet.initial_energy
    assert np.all(energy >= 0)
    assert energy.mean() == pytest.approx(8.0, abs=0.25)
    assert energy.std() == pytest.approx(1.5, abs=0.2)


def test_windows_are_integer_hours_within_horizon():
    fleet = generate_fleet(200, seed=3)
    for dev in fleet.devices:
        for lo, hi in dev.availability.to_pairs():
            assert 0 <= lo < hi <= 24
            assert lo == int(lo) and hi == int(hi)


def test_zero_spread_gives_identical_devices():
    params = FleetParams(energy_std=0, window_start_std=0, window_len_std=0)
    fleet = generate_fleet(20, params, seed=1)
    first = fleet.devices[0]
    assert all(
        d.initial_energy == first.initial_energy and d.availability == first.availability for d in fleet.devices
    )
    assert [list(p) for p in first.availability.to_pairs()] == [[6.0, 16.0]]


def test_seed_determinism_and_prefix_stability():
    a = generate_fleet(50, seed=11)
    assert a == generate_fleet(50, seed=11)
    assert a != generate_fleet(50, seed=12)
    assert generate_fleet(20, seed=11).devices == a.devices[:20]


@pytest.mark.parametrize("kwargs", [{"energy_std": -1}, {"rated_power": 0}, {"energy_mean": -100}])
def test_degenerate_params(kwargs):
    with pytest.raises(ValueError):
        FleetParams(**kwargs)


def test_generate_fleet_rejects_empty():
    with pytest.raises(ValueError):
        generate_fleet(0)


def test_demand_generator_shape():
    fleet = generate_fleet(20, seed=2)
    d = generate_demand(fleet, fill=0.8, seed=2)
    avail = aggregate_availability(fleet)
    values = np.array(d.values)
    assert np.all(values <= avail + 1e-9)
    assert d.integral() == pytest.approx(0.8 * fleet.initial_energy.sum(), abs=1e-4)
    assert np.all(values[:4] == 0) and np.all(values[23:] == 0)
    assert d == generate_demand(fleet, fill=0.8, seed=2)


def test_random_aligned_instance_is_dyadic():
    rng = np.random.default_rng(0)
    for _ in range(50):
        fleet, d = random_aligned_instance(rng)
        vals = np.concatenate([d.values, fleet.initial_energy, fleet.rated_power])
        assert np.all(vals * 8 == np.round(vals * 8))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_generated_scenarios_round_trip_in_memory(n, seed):
    spec = generated_scenario(n, seed)
    again = scenario_from_json(json.loads(json.dumps(scenario_to_json(spec))))
    assert again == spec
