"""Energy-harvesting NOMA uplinks for duty-cycled LPWA networks.

Typical use::

    from lpwa_noma import ScenarioConfig, build_scenario, allocate, rates

    sc = build_scenario(ScenarioConfig.from_density(1000, eh_source=Solar()))
    alloc = allocate(sc, toa_mode="unfair", eh_mode="optimal", power_mode="cccp")
    report = rates(alloc.tau, alloc.power, sc, alloc.schedule, alloc.assignment.toa_class)
"""

from .airtime import ConfigError, SlotSchedule, ToaSet, build_schedule, build_toa_set
from .allocator import Allocation, ToaAssignment, allocate, assign_toa, cccp_power, optimize_eh_time
from .energy import EnergyLedger, LinearRF, NonlinearRF, Solar, make_source
from .harness import (Configuration, ExperimentSpec, RunReport, recipe, run_experiment, run_trial,
                      validate_allocation)
from .interference import RateReport, collision_time, rates, sinr
from .scenario import (NodeState, Scenario, ScenarioConfig, build_scenario, draw_channels, noise_power,
                       place_nodes)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "ConfigError", "Configuration", "EnergyLedger", "ExperimentSpec", "LinearRF", "NodeState",
    "NonlinearRF", "RateReport", "RunReport", "Scenario", "ScenarioConfig", "SlotSchedule", "Solar",
    "ToaAssignment", "ToaSet", "allocate", "assign_toa", "build_scenario", "build_schedule", "build_toa_set",
    "cccp_power", "collision_time", "draw_channels", "make_source", "noise_power", "optimize_eh_time",
    "place_nodes", "rates", "recipe", "run_experiment", "run_trial", "sinr", "validate_allocation",
]
