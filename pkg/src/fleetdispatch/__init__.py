"""Dispatch of storage fleets with availability windows.

Quantities are in hours, kW and kWh. A device's time-to-discharge is its
stored energy divided by its rated power.
"""

from .feasibility import (
    DepletionWitness,
    FeasibilityVerdict,
    SubsetWitness,
    feasibility_by_dispatch,
    flexibility_dominates,
    sorted_prefix_check,
    subset_feasibility_check,
)
from .fixed_point import (
    FixedPointNotConverged,
    FixedPointResult,
    augmented_demand,
    lambda_map,
    outside_energy,
    solve_fixed_point,
)
from .ggddf import Trajectory, augmented_demand_pointwise, group_fractions, policy_rates, simulate, simulate_fixed_step
from .model import AvailabilitySet, DemandProfile, Device, Fleet, Interval, group_partition
from .optimal import TtfResult, UnservedResult, max_time_to_failure, min_unserved_energy, time_to_failure
from .oracle import (
    DiscreteInstance,
    MisalignedGridError,
    discretize,
    maxflow_value,
    oracle_feasible,
    oracle_flow,
    oracle_max_ttf,
    oracle_min_unserved,
)
from .schedule import DispatchSchedule, unserved_energy
from .scenario import (
    FleetParams,
    ScenarioError,
    ScenarioSpec,
    counterexample_fixture,
    gap_fixture,
    generate_demand,
    generate_fleet,
    load_scenario,
    save_scenario,
    ttf_fixture,
)

__version__ = "0.1.0"
