"""Shared random-instance builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from fleetdispatch import AvailabilitySet, DemandProfile, Device, Fleet


def random_fleet(rng: np.random.Generator, n: int | None = None, horizon: float = 10.0) -> Fleet:
    """Fleet with real-valued powers, energies and up to two windows per device."""
    n = int(rng.integers(1, 7)) if n is None else n
    devices = []
    for j in range(n):
        cuts = np.sort(rng.uniform(0, horizon, size=2 * int(rng.integers(0, 3))))
        pairs = [(a, b) for a, b in zip(cuts[::2], cuts[1::2]) if b - a > 1e-3]
        power = float(rng.uniform(0.5, 3.0))
        energy = float(rng.uniform(0, 0.6 * horizon) * power)
        devices.append(Device(f"r{j}", power, energy, 1.0, AvailabilitySet.from_pairs(pairs)))
    return Fleet(tuple(devices), horizon)


def random_demand(rng: np.random.Generator, fleet: Fleet, pieces: int | None = None) -> DemandProfile:
    pieces = int(rng.integers(1, 6)) if pieces is None else pieces
    inner = np.sort(rng.uniform(0, fleet.horizon, size=pieces - 1))
    bp = np.unique(np.concatenate(([0.0], inner, [fleet.horizon])))
    scale = fleet.rated_power.sum()
    values = rng.uniform(0, 0.7, size=bp.size - 1) * scale * (rng.random(bp.size - 1) < 0.8)
    return DemandProfile(tuple(bp), tuple(values))


def random_state(rng: np.random.Generator, fleet: Fleet, ties: bool = True) -> np.ndarray:
    x = rng.uniform(0, 0.6 * fleet.horizon, size=fleet.size)
    if ties and fleet.size > 1 and rng.random() < 0.5:
        i, j = rng.choice(fleet.size, size=2, replace=False)
        x[j] = x[i]
    return x


@pytest.fixture
def rng(request) -> np.random.Generator:
    seed = getattr(request, "param", 0)
    return np.random.default_rng(seed)
