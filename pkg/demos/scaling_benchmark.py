"""
How the fixed point scales with fleet size
==========================================

Day-long scenarios with one evening-to-morning window per vehicle. Each
row times one fixed-point solve (median of ``REPEATS``).
Pass sizes on the command line, e.g. ``python demos/scaling_benchmark.py 10 100 500``.
"""

import sys

from fleetdispatch.cli import _bench_one
from fleetdispatch.scenario import generated_scenario

sizes = [int(a) for a in sys.argv[1:]] or [10, 50, 100, 250]
REPEATS = 3

spec = generated_scenario(20, seed=0)
print(f"sample scenario: {spec.fleet.size} vehicles, {spec.fleet.initial_energy.sum():.1f} kWh stored,"
      f" {spec.demand.integral():.1f} kWh demanded over {spec.fleet.horizon:g} h")

print(f"\n{'N':>5} {'seconds':>9} {'evals':>6} {'residual':>10}")
for n in sizes:
    row = _bench_one(n, seed=0, repeats=REPEATS)
    print(f"{n:>5} {row['seconds']:>9.3f} {row['iterations']:>6} {row['residual']:>10.1e}")
