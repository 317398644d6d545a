"""Stabilised multi-cut Benders decomposition for two-stage stochastic capacity-expansion planning."""
from .detequiv import brute_force_oracle, build_closed, solve_closed
from .driver import RunConfig, RunResult, benchmark, run, sp_tolerance
from .instance import (
    InstanceError,
    ProblemInstance,
    Scenario,
    Technology,
    flat_demand_instance,
    generate_synthetic,
    read_instance,
    validate,
    write_instance,
)
from .scenred import compute_z_matrix, distance, export_similarity_graph, kmedoid

__version__ = "0.1.0"

__all__ = [
    "InstanceError", "ProblemInstance", "RunConfig", "RunResult", "Scenario", "Technology",
    "benchmark", "brute_force_oracle", "build_closed", "compute_z_matrix", "distance",
    "export_similarity_graph", "flat_demand_instance", "generate_synthetic", "kmedoid",
    "read_instance", "run", "solve_closed", "sp_tolerance", "validate", "write_instance",
]
