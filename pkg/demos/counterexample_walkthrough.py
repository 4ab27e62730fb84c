"""
Two batteries, two demand profiles, one shared beginning
========================================================

Battery 1 holds 3 kWh and may only deliver on [0, 5] h. Battery 2 holds
6 kWh and is available all day. Both are rated at 1 kW.

Profiles ``d1`` and ``d2`` are identical on [0, 2], yet the only way to
serve ``d1`` idles battery 2 during that time while ``d2`` needs it
running. A policy that only sees the past cannot tell them apart, so the
dispatch below looks at the whole profile through the fixed point.
"""

import numpy as np

from fleetdispatch import counterexample_fixture, feasibility_by_dispatch, solve_fixed_point

fleet, d1, d2, _ = counterexample_fixture()
print("stored energy (kWh):", fleet.initial_energy)
print("d1 and d2 equal on [0, 2]:", d1.restrict(2.0) == d2.restrict(2.0))

# %%
# The fixed point grants battery 1 fictitious energy for the hours it is away.
for name, d in (("d1", d1), ("d2", d2)):
    fp = solve_fixed_point(fleet, d)
    print(f"\n{name}: lambda = {np.round(fp.lambda_bar, 6)}, augmented state = {fp.x_tilde0},"
          f" {fp.iterations} map evaluations")

    # Rates restricted to each availability window form the schedule.
    verdict = feasibility_by_dispatch(fleet, d)
    sched = verdict.schedule
    print("  feasible:", verdict.feasible)
    for k in range(sched.rates.shape[0]):
        lo, hi = sched.breakpoints[k], sched.breakpoints[k + 1]
        print(f"  [{lo:5.2f}, {hi:5.2f}]  battery 1 {sched.rates[k, 0]:.2f} kW  battery 2 {sched.rates[k, 1]:.2f} kW")

# %%
# Same past, different present: battery 2's rate at t = 1.
r1 = feasibility_by_dispatch(fleet, d1).schedule.rates_at(1.0)[1]
r2 = feasibility_by_dispatch(fleet, d2).schedule.rates_at(1.0)[1]
print(f"\nbattery 2 at t=1: {r1} kW under d1, {r2} kW under d2")
