"""Transport of positive measures along oriented networks.

Atoms and step densities move along per-arc characteristics, are routed at
junctions by time-dependent distribution matrices and are collected at the
wells. See :func:`measurenet.network_solver.solve` for the entry point.
"""

from .arc_solver import (
    ArcProblem,
    ArcSolution,
    SmoothTestFunction,
    check_balance,
    estimate_continuity,
    estimate_time_regularity,
)
from .flow import ArcClock, Exited, VelocityField, build_clock, flow_from_boundary, flow_from_interior, invert_exit_times
from .geometry import (
    Arc,
    DistributionSchedule,
    Network,
    Role,
    classify_vertexes,
    evaluate_schedule,
    source_distance_partition,
)
from .measure import HybridMeasure, StepWeight, TestFunction, bl_distance, weight_by
from .network_solver import (
    NetworkSolution,
    Scenario,
    global_balance,
    network_continuity,
    polynomial_family,
    solve,
    solve_levelwise,
    solve_timestepped,
)

__all__ = [
    "Arc",
    "ArcClock",
    "ArcProblem",
    "ArcSolution",
    "DistributionSchedule",
    "Exited",
    "HybridMeasure",
    "Network",
    "NetworkSolution",
    "Role",
    "Scenario",
    "SmoothTestFunction",
    "StepWeight",
    "TestFunction",
    "VelocityField",
    "bl_distance",
    "build_clock",
    "check_balance",
    "classify_vertexes",
    "estimate_continuity",
    "estimate_time_regularity",
    "evaluate_schedule",
    "flow_from_boundary",
    "flow_from_interior",
    "global_balance",
    "invert_exit_times",
    "network_continuity",
    "polynomial_family",
    "solve",
    "solve_levelwise",
    "solve_timestepped",
    "source_distance_partition",
    "weight_by",
]
