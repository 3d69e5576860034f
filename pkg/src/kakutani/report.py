"""Simulation-versus-formula comparisons, named stably.

These are the statistics emitted by ``kakutani compare``:

``count_fraction``, ``volume_fraction``
    Per-type fractions of a Kakutani partition against the closed forms.
``tiles_per_unit_volume``
    Tile count of the rescaled partition (largest tile of unit volume) per
    unit of region volume, averaged over runs.
``volume_histogram_sup``
    Relative sup distance between the per-unit-volume histogram of a
    semi-flow patch and the closed-form count density, bin-averaged.
``gap_histogram_sup``
    Largest absolute per-bin difference between the probability histogram
    of rescaled interval lengths and the unit-mass gap density mass.
``gap_density_integral``
    Total mass of the gap density under each normalization; the empirical
    side is the fraction of gaps in ``(0, 1]`` (always 1).
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .formulas import (
    GAP_NORMALIZATIONS,
    count_in_range,
    gap_mass_in_range,
    system_matrices,
    type_predictions,
)
from .simulate import IntervalTiling, SimulationConfig, TilePopulation, make_rngs, run_kakutani, semiflow_patch, simulate
from .stats import (
    ComparisonReport,
    Histogram,
    RunSummary,
    compare,
    empirical_type_stats,
    gap_histogram,
    relative_sup_distance,
    volume_histogram,
)
from .system import SubstitutionSystem


def run_seed(seed: int, r: int) -> int:
    """Seed of run ``r`` in a batch; run 0 uses ``seed`` itself."""
    return (int(seed) + r) % 2**64


def tiles_per_unit_volume(population: TilePopulation) -> float:
    # rescaled so the largest tile has unit volume, the region has volume
    # vol(start) / max volume
    return population.total_count * math.exp(population.max_log_volume - population.log_offset)


def frequency_comparison(system: SubstitutionSystem, config: SimulationConfig, runs: int = 1) -> ComparisonReport:
    """Per-type fractions and tiles per unit volume over ``runs`` Kakutani runs.

    With several runs the rows hold the mean over runs and its standard
    error; ``n`` is the number of tiles pooled over all runs.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    pred = type_predictions(system_matrices(system))
    names = list(system.prototile_names)
    summary = RunSummary()
    tiles = 0
    for r in range(runs):
        pop = run_kakutani(system, replace(config, seed=run_seed(config.seed, r)))
        emp = empirical_type_stats(pop, system.n)
        tiles += pop.total_count
        for k, nm in enumerate(names):
            summary.add(f"count_fraction/{nm}", emp.count_fraction[k])
            summary.add(f"volume_fraction/{nm}", emp.volume_fraction[k])
        summary.add("tiles_per_unit_volume", tiles_per_unit_volume(pop))

    def stat(name):
        se = summary.stderr(name) if runs > 1 else None
        return summary.mean(name), se

    report = ComparisonReport()
    for label, predicted in (("count_fraction", pred.kakutani_count_fraction), ("volume_fraction", pred.volume_fraction)):
        for k, nm in enumerate(names):
            mean, se = stat(f"{label}/{nm}")
            report.extend(compare(mean, predicted[k], label, [nm], stderr=se, n=tiles))
    mean, se = stat("tiles_per_unit_volume")
    report.extend(compare(mean, pred.tiles_per_unit_volume, "tiles_per_unit_volume", stderr=se, n=tiles))
    return report


def predicted_count_mass(system: SubstitutionSystem, edges) -> np.ndarray:
    """Closed-form tiles per unit volume in each bin ``(a, b]``, all types."""
    m = system_matrices(system)
    edges = np.asarray(edges, dtype=float)
    return np.array([
        math.fsum(count_in_range(m, r, edges[k], edges[k + 1]) for r in range(system.n))
        for k in range(len(edges) - 1)
    ])


def volume_histogram_comparison(
    system: SubstitutionSystem, t: float, edges, seed: int = 0, start_type: int = 0
) -> tuple[ComparisonReport, Histogram, TilePopulation]:
    pop = semiflow_patch(system, start_type, t, make_rngs(seed)[0])
    hist = volume_histogram(pop, None, edges, "per_unit_volume")
    pred = predicted_count_mass(system, hist.edges)
    dist = relative_sup_distance(hist.values / hist.widths, pred / hist.widths)
    report = compare(dist, 0.0, "volume_histogram_sup", n=pop.total_count)
    return report, hist, pop


def gap_histogram_comparison(
    system: SubstitutionSystem, config: SimulationConfig, edges
) -> tuple[ComparisonReport, Histogram, IntervalTiling]:
    """Gap statistics of an explicit 1-D run, lengths rescaled by the largest."""
    if system.dimension != 1:
        raise ValueError("gap statistics need a 1-dimensional system")
    tiling = simulate(system, replace(config, mode="explicit_1d")).tiling
    hist = gap_histogram(tiling, edges, rescale=True)
    m = system_matrices(system)
    pred = np.array([gap_mass_in_range(m, hist.edges[k], hist.edges[k + 1]) for k in range(len(hist.counts))])
    report = compare(float(np.abs(hist.values - pred).max()), 0.0, "gap_histogram_sup", n=len(tiling))
    mass = float(gap_histogram(tiling, [0.0, 1.0], rescale=True).values[0])
    for norm in GAP_NORMALIZATIONS:
        report.extend(compare(mass, gap_mass_in_range(m, 0.0, 1.0, norm), "gap_density_integral",
                              [norm], n=len(tiling)))
    return report, hist, tiling
