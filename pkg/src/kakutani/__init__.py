"""Tile statistics of random multiscale substitution systems.

Closed-form predictions from the substitution, volume and entropy matrices,
walk counting on the associated metric graph, and Monte Carlo simulation of
Kakutani partitions, semi-flow patches and generation sequences.
"""

from .formulas import (
    SystemMatrices,
    count_in_range,
    gap_density,
    generation_predictions,
    system_matrices,
    type_predictions,
    volume_in_range,
)
from .graph import MetricGraph, Weighting, build_graph, compute_Q, perron_data, solve_lambda
from .simulate import SimulationConfig, TilePopulation, run_kakutani, semiflow_patch
from .system import SubstitutionSystem, load_system, parse_system, validate

__all__ = [
    "MetricGraph",
    "SimulationConfig",
    "SubstitutionSystem",
    "SystemMatrices",
    "TilePopulation",
    "Weighting",
    "build_graph",
    "compute_Q",
    "count_in_range",
    "gap_density",
    "generation_predictions",
    "load_system",
    "parse_system",
    "perron_data",
    "run_kakutani",
    "semiflow_patch",
    "solve_lambda",
    "system_matrices",
    "type_predictions",
    "validate",
    "volume_in_range",
]
