"""
Least unserved energy is not the same as lasting longest
========================================================

When demand cannot be met we can minimise the energy left unserved or
postpone the first failure. On a small fleet the two objectives pick very
different schedules with the same unserved energy.
"""

from fleetdispatch import gap_fixture, max_time_to_failure, min_unserved_energy, ttf_fixture

for label, (fleet, d, _) in (("gap fixture", gap_fixture()), ("two-device fixture", ttf_fixture())):
    print(f"--- {label}: {fleet.initial_energy.sum():g} kWh stored, {d.integral():g} kWh demanded")

    unserved = min_unserved_energy(fleet, d)
    print(f"least unserved energy: {unserved.unserved_energy:.4f} kWh,"
          f" that schedule first fails at {unserved.schedule.failure_time(d):.4f} h")

    ttf = max_time_to_failure(fleet, d)
    trace = ", ".join(f"{t:.4f}" for t in ttf.iterates[:6])
    more = " ..." if len(ttf.iterates) > 6 else ""
    print(f"latest first failure: {ttf.tau_star:.6f} h   (iterates {trace}{more})")

    # Serving the window [0, tau*] leaves this much for later.
    print(f"energy used up to tau*: {ttf.schedule.energy().sum():.4f} kWh\n")

# On the gap fixture the least-unserved dispatch empties battery 1 on [0, 1]
# and then runs battery 2 at half power on [1, 2], so demand goes unserved
# from t = 1. Running battery 2 at full power instead lasts until t = 3.
