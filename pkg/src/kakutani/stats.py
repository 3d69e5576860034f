"""Empirical statistics of simulated populations and tilings, and their
comparison with the closed-form predictions.

All histograms use right-closed bins ``(a, b]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .simulate import IntervalTiling, TilePopulation

NORMALIZATIONS = ("raw", "probability", "per_unit_volume", "pair_density")


@dataclass
class Histogram:
    """Counts in right-closed bins plus their normalized values.

    ``values = counts / denominator`` per bin (for ``pair_density`` the
    denominator also carries the bin width).  ``total`` is the number of
    samples offered, including those outside every bin.
    """

    edges: np.ndarray
    counts: np.ndarray
    normalization: str = "raw"
    denominator: np.ndarray | float = 1.0
    total: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.edges.ndim != 1 or len(self.edges) < 2 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.denominator

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density(self) -> np.ndarray:
        """Values per unit of bin width."""
        if self.normalization == "pair_density":
            return self.values
        return self.values / self.widths

    def merge(self, other: "Histogram") -> "Histogram":
        """Pool two histograms of the same kind (exact for integer counts)."""
        if self.normalization != other.normalization or not np.array_equal(self.edges, other.edges):
            raise ValueError("can only merge histograms with identical edges and normalization")
        if self.normalization == "pair_density":
            raise ValueError("pair-density histograms are not mergeable")
        denom = 1.0 if self.normalization == "raw" else self.denominator + other.denominator
        return Histogram(self.edges, self.counts + other.counts, self.normalization, denom, self.total + other.total)

    def coarsen(self, keep: list[int]) -> "Histogram":
        """Drop interior edges, keeping the edge indices in ``keep`` (which
        must include the first and last)."""
        keep = sorted(keep)
        if keep[0] != 0 or keep[-1] != len(self.edges) - 1:
            raise ValueError("must keep the outer edges")
        cum = np.concatenate([[0], np.cumsum(self.counts)])
        counts = np.diff(cum[keep])
        return Histogram(self.edges[keep], counts, self.normalization, self.denominator, self.total)

    def rows(self) -> list[dict]:
        vals = self.values
        return [
            {"bin_lo": float(self.edges[k]), "bin_hi": float(self.edges[k + 1]),
             "count": self.counts[k].item(), "normalized": float(vals[k])}
            for k in range(len(self.counts))
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "normalized"])
        for r in self.rows():
            w.writerow([repr(r["bin_lo"]), repr(r["bin_hi"]), r["count"], repr(r["normalized"])])
        return buf.getvalue()


def bin_counts(samples: np.ndarray, edges: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Sum of ``weights`` (default 1) over samples in each ``(a, b]`` bin.

    Integer weights give integer counts.
    """
    edges = np.asarray(edges, dtype=float)
    samples = np.asarray(samples, dtype=float)
    idx = np.searchsorted(edges, samples, side="left") - 1
    inside = (idx >= 0) & (idx < len(edges) - 1)
    if weights is None:
        weights = np.ones(len(samples), dtype=np.int64)
    weights = np.asarray(weights)
    out = np.zeros(len(edges) - 1, dtype=weights.dtype)
    np.add.at(out, idx[inside], weights[inside])
    return out


@dataclass
class TypeStats:
    count_fraction: np.ndarray
    volume_fraction: np.ndarray
    counts: np.ndarray
    volumes: np.ndarray


def empirical_type_stats(population: TilePopulation, n_types: int | None = None) -> TypeStats:
    if not population.counts:
        raise ValueError("empty population")
    n = n_types if n_types is not None else 1 + max(t for t, _ in population.counts)
    counts = [0] * n
    parts: list[list[float]] = [[] for _ in range(n)]
    for (ty, key), c in population.counts.items():
        counts[ty] += c
        parts[ty].append(c * math.exp(population.log_volume(key)))
    vols = np.array([math.fsum(p) for p in parts])
    total = sum(counts)
    return TypeStats(
        count_fraction=np.array([c / total for c in counts]),
        volume_fraction=vols / math.fsum(vols),
        counts=np.array(counts, dtype=np.int64),
        volumes=vols,
    )


def volume_histogram(
    population: TilePopulation,
    r: int | None,
    edges,
    normalization: str = "raw",
    rescale: bool = False,
) -> Histogram:
    """Histogram of tile volumes of type ``r`` (all types if ``None``).

    ``per_unit_volume`` divides by the volume of the inflated start tile, so
    bin values are comparable with ``count_in_range``.  It needs either a
    semi-flow patch (time known) or ``rescale=True``, which divides every
    volume by the largest one and so turns a Kakutani partition into the
    matching semi-flow patch.
    """
    edges = np.asarray(edges, dtype=float)
    if edges[0] < 0 or edges[-1] > 1.0 + 1e-12:
        raise ValueError("edges must lie within [0, 1]")
    types, vols, counts = population.arrays()
    region = population.region_volume()
    if rescale:
        top = math.exp(population.max_log_volume)
        vols = vols / top
        region = region / top
    elif normalization == "per_unit_volume" and population.time is None:
        raise ValueError("per_unit_volume needs a semi-flow patch (time unknown) or rescale=True")
    if r is not None:
        mask = types == r
        vols, counts = vols[mask], counts[mask]
    binned = bin_counts(vols, edges, counts)
    total = int(counts.sum())
    if normalization == "raw":
        denom = 1.0
    elif normalization == "probability":
        denom = float(total)
    elif normalization == "per_unit_volume":
        denom = region
    else:
        raise ValueError(f"normalization {normalization!r} not supported for volume histograms")
    return Histogram(edges, binned, normalization, denom, total)


def gap_histogram(tiling: IntervalTiling, edges, scale: float = 1.0, rescale: bool = False) -> Histogram:
    """Probability histogram of interval lengths (nearest-neighbour gaps of
    the boundary points), after multiplying every length by ``scale``.

    ``rescale`` divides by the longest interval instead, which maps it to
    exactly 1.
    """
    gaps = np.asarray(tiling.lengths, dtype=float)
    gaps = gaps / gaps.max() if rescale else gaps * scale
    binned = bin_counts(gaps, edges)
    return Histogram(edges, binned, "probability", float(len(gaps)), len(gaps))


def pair_correlation(tiling: IntervalTiling, r_edges) -> Histogram:
    """Histogram of all pairwise distances between boundary points.

    Normalized by ``N * rho * width`` (``N`` points, mean density ``rho``),
    so a Poisson process of the same density gives values near 1 away from
    the region's ends.
    """
    r_edges = np.asarray(r_edges, dtype=float)
    p = np.sort(tiling.points)
    span = p[-1] - p[0]
    if r_edges[-1] > span + 1e-12:
        raise ValueError("distance edges exceed the region length")

    def pairs_within(r: float) -> int:
        # ordered pairs i < j with p[j] - p[i] <= r
        hi = np.searchsorted(p, p + r, side="right")
        return int((hi - np.arange(len(p)) - 1).sum())

    cum = np.array([pairs_within(r) for r in r_edges], dtype=np.int64)
    counts = np.diff(cum)
    n = len(p)
    rho = (n - 1) / span
    denom = n * rho * np.diff(r_edges)
    return Histogram(r_edges, counts, "pair_density", denom, n * (n - 1) // 2)


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------

COMPARISON_FIELDS = ("statistic", "type", "empirical", "predicted", "abs_err", "rel_err", "stderr", "n")


@dataclass
class ComparisonRow:
    statistic: str
    type: str
    empirical: float
    predicted: float
    abs_err: float
    rel_err: float
    stderr: float | None = None
    n: int | None = None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow] = field(default_factory=list)

    def extend(self, other: "ComparisonReport") -> "ComparisonReport":
        self.rows.extend(other.rows)
        return self

    def sup_distance(self, statistic: str | None = None) -> float:
        errs = [r.abs_err for r in self.rows if statistic is None or r.statistic == statistic]
        return max(errs) if errs else 0.0

    def get(self, statistic: str, type: str = "all") -> ComparisonRow:
        for r in self.rows:
            if r.statistic == statistic and r.type == type:
                return r
        raise KeyError((statistic, type))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_FIELDS)
        for r in self.rows:
            w.writerow([
                r.statistic, r.type, repr(r.empirical), repr(r.predicted), repr(r.abs_err),
                repr(r.rel_err), "" if r.stderr is None else repr(r.stderr), "" if r.n is None else r.n,
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ComparisonReport":
        rows = []
        for d in csv.DictReader(io.StringIO(text)):
            rows.append(ComparisonRow(
                d["statistic"], d["type"], float(d["empirical"]), float(d["predicted"]),
                float(d["abs_err"]), float(d["rel_err"]),
                None if d["stderr"] == "" else float(d["stderr"]),
                None if d["n"] == "" else int(d["n"]),
            ))
        return cls(rows)

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        return cls([ComparisonRow(**d) for d in json.loads(text)["rows"]])


def _row(statistic, type_, e, p, stderr, n) -> ComparisonRow:
    e, p = float(e), float(p)
    abs_err = abs(e - p)
    rel_err = abs_err / abs(p) if p != 0 else (0.0 if abs_err == 0 else math.inf)
    return ComparisonRow(statistic, type_, e, p, abs_err, rel_err,
                         None if stderr is None else float(stderr), None if n is None else int(n))


def compare(
    empirical,
    predicted,
    statistic: str,
    types: list[str] | None = None,
    stderr=None,
    n: int | None = None,
) -> ComparisonReport:
    """Error report for a scalar or an array of statistics.

    ``types`` labels array entries (default ``"all"`` for scalars, indices
    otherwise); ``stderr`` may be a scalar or match the shape.
    """
    e = np.asarray(empirical, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if e.shape != p.shape:
        raise ValueError(f"shape mismatch: empirical {e.shape} vs predicted {p.shape}")
    if e.ndim == 0:
        return ComparisonReport([_row(statistic, types[0] if types else "all", e, p, stderr, n)])
    e, p = e.ravel(), p.ravel()
    labels = types if types is not None else [str(k) for k in range(len(e))]
    if len(labels) != len(e):
        raise ValueError("one label per entry required")
    se = np.broadcast_to(np.asarray(stderr, dtype=float), e.shape) if stderr is not None else [None] * len(e)
    return ComparisonReport([_row(statistic, labels[k], e[k], p[k], se[k], n) for k in range(len(e))])


def compare_histogram(hist: Histogram, predicted, statistic: str) -> ComparisonReport:
    """Per-bin comparison of normalized values; bins labelled ``(lo,hi]``."""
    predicted = np.asarray(predicted, dtype=float)
    labels = [f"({float(hist.edges[k])!r},{float(hist.edges[k + 1])!r}]" for k in range(len(hist.counts))]
    return compare(hist.values, predicted, statistic, labels, n=hist.total)


def relative_sup_distance(empirical_density, predicted_density) -> float:
    """``max |e - p|`` over bins, relative to the largest predicted value."""
    e = np.asarray(empirical_density, dtype=float)
    p = np.asarray(predicted_density, dtype=float)
    return float(np.abs(e - p).max() / np.abs(p).max())


def cdf_sup_distance(empirical_mass, predicted_mass) -> float:
    """Kolmogorov-type distance between cumulative bin masses."""
    e = np.cumsum(np.asarray(empirical_mass, dtype=float))
    p = np.cumsum(np.asarray(predicted_mass, dtype=float))
    return float(np.abs(e - p).max())


def mean_and_stderr(values) -> tuple[float, float]:
    """Sample mean and its standard error ``std / sqrt(n)``."""
    vals = sorted(float(x) for x in values)
    n = len(vals)
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2 for x in vals) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class RunSummary:
    """Per-run values of named statistics, pooled across independent runs.

    Merging concatenates; the summaries use exactly rounded sums over
    sorted values, so results do not depend on merge order.
    """

    values: dict[str, list[float]] = field(default_factory=dict)

    def add(self, statistic: str, value: float) -> None:
        self.values.setdefault(statistic, []).append(float(value))

    def merge(self, other: "RunSummary") -> "RunSummary":
        out = {k: list(v) for k, v in self.values.items()}
        for k, v in other.values.items():
            out.setdefault(k, []).extend(v)
        return RunSummary(out)

    def runs(self, statistic: str) -> int:
        return len(self.values[statistic])

    def mean(self, statistic: str) -> float:
        return mean_and_stderr(self.values[statistic])[0]

    def stderr(self, statistic: str) -> float:
        return mean_and_stderr(self.values[statistic])[1]
