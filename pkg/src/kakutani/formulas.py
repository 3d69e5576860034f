"""Closed-form tile statistics of a normalized substitution system.

Everything here is a function of the substitution, volume and entropy
matrices ``S``, ``V``, ``H`` and of the positive left Perron-Frobenius
eigenvector ``v`` of ``V``.  Count and volume densities are piecewise
``coef / x**2`` and ``coef / x``, so every integral is done in closed form.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import left_pf_eigenvector, spectral_radius
from .system import SubstitutionSystem

GAP_NORMALIZATIONS = ("unit_mass", "paper")


@dataclass(frozen=True)
class WeightedTile:
    src: int
    dst: int
    weight: float  # rule probability
    volume: float


@dataclass(frozen=True)
class SystemMatrices:
    S: np.ndarray
    V: np.ndarray
    H: np.ndarray
    v: np.ndarray
    u_vol: np.ndarray
    tiles: tuple[WeightedTile, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def entropy_total(self) -> float:
        return float(self.v @ self.H @ np.ones(self.n))

    def with_v(self, v) -> "SystemMatrices":
        """Copy with a different (e.g. rescaled) left eigenvector."""
        return SystemMatrices(self.S, self.V, self.H, np.asarray(v, dtype=float), self.u_vol, self.tiles)


def system_matrices(system: SubstitutionSystem) -> SystemMatrices:
    n = system.n
    S = np.zeros((n, n))
    V = np.zeros((n, n))
    H = np.zeros((n, n))
    tiles = []
    for i, plist in enumerate(system.rules):
        for rule in plist:
            p = rule.probability
            for t in rule.tiles:
                j = t.type_index
                S[i, j] += p
                V[i, j] += p * t.volume
                H[i, j] += -p * t.volume * math.log(t.volume)
                tiles.append(WeightedTile(i, j, p, t.volume))
    v = left_pf_eigenvector(V)
    return SystemMatrices(S, V, H, v, np.ones(n), tuple(tiles))


class DensityEvaluator:
    """Piecewise representation of ``x -> [v^T C(x)]_r`` and ``[v^T D(x)]_r``.

    Between consecutive breakpoints (the distinct tile volumes, then 1) the
    count density of type ``r`` is ``coef[k, r] / x**2`` and the volume
    density is ``coef[k, r] / x``; ``coef[k, r]`` sums ``v_i * p * vol T``
    over tiles of type ``r`` with ``vol T`` at or below the left breakpoint.
    """

    def __init__(self, matrices: SystemMatrices):
        self.matrices = matrices
        vols = sorted({t.volume for t in matrices.tiles})
        self.breakpoints = np.array(vols + [1.0])
        v = matrices.v
        coef = np.zeros((len(vols), matrices.n))
        for t in matrices.tiles:
            k = vols.index(t.volume)
            coef[k:, t.dst] += v[t.src] * t.weight * t.volume
        self.coefficients = coef

    def _interval(self, x: float) -> int:
        # index k with breakpoints[k] < x <= breakpoints[k + 1]; -1 outside
        if x <= self.breakpoints[0] or x > 1.0:
            return -1
        return bisect.bisect_left(self.breakpoints, x) - 1

    def count(self, x: float) -> np.ndarray:
        k = self._interval(x)
        if k < 0:
            return np.zeros(self.matrices.n)
        return self.coefficients[k] / (x * x)

    def volume(self, x: float) -> np.ndarray:
        k = self._interval(x)
        if k < 0:
            return np.zeros(self.matrices.n)
        return self.coefficients[k] / x


def _vC(matrices: SystemMatrices, x: float) -> np.ndarray:
    # direct evaluation of v^T C(x), no piecewise table
    out = np.zeros(matrices.n)
    if x > 1.0:
        return out
    v = matrices.v
    for t in matrices.tiles:
        if t.volume < x:
            out[t.dst] += v[t.src] * t.weight * t.volume / (x * x)
    return out


def _vD(matrices: SystemMatrices, x: float) -> np.ndarray:
    out = np.zeros(matrices.n)
    if x > 1.0:
        return out
    v = matrices.v
    for t in matrices.tiles:
        if t.volume < x:
            out[t.dst] += v[t.src] * t.weight * t.volume / x
    return out


def density_matrix_C(matrices: SystemMatrices, x: float) -> np.ndarray:
    C = np.zeros((matrices.n, matrices.n))
    if x > 1.0:
        return C
    for t in matrices.tiles:
        if t.volume < x:
            C[t.src, t.dst] += t.weight * t.volume / (x * x)
    return C


def density_matrix_D(matrices: SystemMatrices, x: float) -> np.ndarray:
    D = np.zeros((matrices.n, matrices.n))
    if x > 1.0:
        return D
    for t in matrices.tiles:
        if t.volume < x:
            D[t.src, t.dst] += t.weight * t.volume / x
    return D


def count_density(matrices: SystemMatrices, r: int, x: float) -> float:
    return float(_vC(matrices, x)[r] / matrices.entropy_total)


def volume_density(matrices: SystemMatrices, r: int, x: float) -> float:
    return float(_vD(matrices, x)[r] / matrices.entropy_total)


def _check_range(a: float, b: float) -> None:
    if a > b:
        raise ValueError(f"empty range: a={a} > b={b}")
    if b > 1.0:
        raise ValueError(f"b={b} exceeds the unit volume")
    if a < 0.0:
        raise ValueError(f"a={a} is negative")


def integrated_vC(matrices: SystemMatrices, a: float, b: float) -> np.ndarray:
    """``int_a^b v^T C(x) dx`` per type, from the antiderivative of
    ``vol T / x**2`` on ``(vol T, 1]``."""
    _check_range(a, b)
    out = np.zeros(matrices.n)
    v = matrices.v
    for t in matrices.tiles:
        lo, hi = max(a, t.volume), max(b, t.volume)
        out[t.dst] += v[t.src] * t.weight * t.volume * (1.0 / lo - 1.0 / hi)
    return out


def integrated_vD(matrices: SystemMatrices, a: float, b: float) -> np.ndarray:
    _check_range(a, b)
    out = np.zeros(matrices.n)
    v = matrices.v
    for t in matrices.tiles:
        lo, hi = max(a, t.volume), max(b, t.volume)
        out[t.dst] += v[t.src] * t.weight * t.volume * math.log(hi / lo)
    return out


def count_in_range(matrices: SystemMatrices, r: int, a: float, b: float) -> float:
    """Asymptotic number of type-``r`` tiles with volume in ``[a, b]`` per
    unit of patch volume."""
    return float(integrated_vC(matrices, a, b)[r] / matrices.entropy_total)


def volume_in_range(matrices: SystemMatrices, r: int, a: float, b: float) -> float:
    return float(integrated_vD(matrices, a, b)[r] / matrices.entropy_total)


@dataclass(frozen=True)
class FrequencyPrediction:
    count_density_per_volume: np.ndarray
    volume_fraction: np.ndarray
    kakutani_count_fraction: np.ndarray
    entropy_total: float

    @property
    def tiles_per_unit_volume(self) -> float:
        return float(self.count_density_per_volume.sum())


def type_predictions(matrices: SystemMatrices) -> FrequencyPrediction:
    v = matrices.v
    excess = v @ (matrices.S - matrices.V)
    vh = v @ matrices.H
    h = float(vh.sum())
    return FrequencyPrediction(
        count_density_per_volume=excess / h,
        volume_fraction=vh / h,
        kakutani_count_fraction=excess / excess.sum(),
        entropy_total=h,
    )


def gap_constant(matrices: SystemMatrices, normalization: str) -> float:
    if normalization == "paper":
        return matrices.entropy_total
    if normalization == "unit_mass":
        return float((matrices.v @ (matrices.S - matrices.V)).sum())
    raise ValueError(f"unknown normalization {normalization!r}; choose from {GAP_NORMALIZATIONS}")


def gap_density(matrices: SystemMatrices, x: float, normalization: str = "unit_mass", dimension: int = 1) -> float:
    """Density of nearest-neighbour gaps for a 1-D system at gap size ``x``.

    ``"paper"`` divides ``v^T C(x) 1`` by ``v^T H 1``; ``"unit_mass"``
    divides by ``v^T (S - V) 1`` so the density integrates to one.
    """
    if dimension != 1:
        raise ValueError("gap distributions are defined for 1-dimensional systems only")
    return float(_vC(matrices, x).sum() / gap_constant(matrices, normalization))


def gap_mass_in_range(matrices: SystemMatrices, a: float, b: float, normalization: str = "unit_mass") -> float:
    return float(integrated_vC(matrices, a, b).sum() / gap_constant(matrices, normalization))


def mean_gap(matrices: SystemMatrices) -> float:
    """Mean of the unit-mass gap density, ``int x f(x) dx``, in closed form."""
    return float(integrated_vD(matrices, 0.0, 1.0).sum() / gap_constant(matrices, "unit_mass"))


@dataclass(frozen=True)
class GenerationPrediction:
    start: int
    generations: int
    counts: list[list]  # counts[k][r]: exact ints (non-random) or expectations
    volumes: np.ndarray  # volumes[k, r] = (e_i^T V^k)_r
    s: np.ndarray
    v: np.ndarray
    growth_rate: float
    asymptotic_counts: np.ndarray | None = None


def _int_matrix(system: SubstitutionSystem) -> list[list[int]]:
    S = [[0] * system.n for _ in range(system.n)]
    for i, plist in enumerate(system.rules):
        (rule,) = plist
        for t in rule.tiles:
            S[i][t.type_index] += 1
    return S


def generation_predictions(
    system: SubstitutionSystem, i: int, k: int, asymptotic_counts: bool = False
) -> GenerationPrediction:
    """Tile counts and volumes by type in the generation sequence of
    prototile ``i``, for generations ``0..k``.

    Counts are the exact recurrence ``e_i^T S^g`` (Python ints for
    non-random systems, so no overflow), volumes are ``e_i^T V^g``.  With
    ``asymptotic_counts`` the leading-order counts
    ``s_r * rho(S)**g`` are returned as well; that formula needs a
    fixed-scale system.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    m = system_matrices(system)
    n = system.n
    if asymptotic_counts and not system.is_fixed_scale:
        raise ValueError("asymptotic count formula requires a fixed-scale system")

    counts: list[list] = []
    if system.is_random:
        row = np.zeros(n)
        row[i] = 1.0
        for _ in range(k + 1):
            counts.append([float(x) for x in row])
            row = row @ m.S
    else:
        S = _int_matrix(system)
        row_i = [0] * n
        row_i[i] = 1
        for _ in range(k + 1):
            counts.append(list(row_i))
            row_i = [sum(row_i[a] * S[a][b] for a in range(n)) for b in range(n)]

    vols = np.zeros((k + 1, n))
    row = np.zeros(n)
    row[i] = 1.0
    for g in range(k + 1):
        vols[g] = row
        row = row @ m.V

    s = left_pf_eigenvector(m.S)
    rho = spectral_radius(m.S)
    asym = None
    if asymptotic_counts:
        # vol T_i = 1 and u_vol = 1 for a normalized system
        asym = np.array([s / (s @ m.u_vol) * rho**g for g in range(k + 1)])
    return GenerationPrediction(i, k, counts, vols, s, m.v.copy(), rho, asym)
