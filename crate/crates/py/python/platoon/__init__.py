"""Fuel-optimal truck platooning: look-ahead profiles, merges and fleet plans."""

from ._native import (
    AltitudeProfile,
    InfeasibleError,
    RunReport,
    Scenario,
    VehicleParameters,
    demo_hill,
    drag_coefficient,
    fuel_flow,
    run_hill_demo,
    solve_clac,
    solve_merge,
)

__all__ = [
    "AltitudeProfile",
    "InfeasibleError",
    "RunReport",
    "Scenario",
    "VehicleParameters",
    "demo_hill",
    "drag_coefficient",
    "fuel_flow",
    "run_hill_demo",
    "solve_clac",
    "solve_merge",
]
