"""The weighted metric graph of a substitution system and walk counting on it.

Vertices are prototile types.  Every substitution tile ``T`` of every rule of
prototile ``i`` contributes one edge ``i -> type(T)`` of length
``log(1 / vol T)``.  Two weightings are supported: the rule probability, and
the rule probability times the tile volume.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .system import SubstitutionSystem


class ConvergenceError(RuntimeError):
    pass


class BracketError(RuntimeError):
    pass


class EnumerationBudgetExceeded(RuntimeError):
    pass


class Weighting(str, enum.Enum):
    PROBABILITY = "probability"
    PROBABILITY_TIMES_VOLUME = "probability_times_volume"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    length: float
    weight: float
    # (prototile, rule index, tile position within the rule)
    provenance: tuple[int, int, int]


@dataclass(frozen=True)
class MetricGraph:
    vertex_count: int
    edges: tuple[Edge, ...]

    def out_edges(self, vertex: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if e.src == vertex]

    def with_weights(self, weights: Sequence[float]) -> "MetricGraph":
        edges = tuple(
            Edge(e.src, e.dst, e.length, float(w), e.provenance)
            for e, w in zip(self.edges, weights, strict=True)
        )
        return MetricGraph(self.vertex_count, edges)


@dataclass(frozen=True)
class GraphMatrixSample:
    s: float
    M: np.ndarray
    M_prime: np.ndarray


@dataclass(frozen=True)
class PerronData:
    lambda_: float
    spectral_radius_at_lambda: float
    left_eigenvector: np.ndarray
    right_eigenvector: np.ndarray
    Q: np.ndarray


def build_graph(system: SubstitutionSystem, weighting: Weighting | str = Weighting.PROBABILITY) -> MetricGraph:
    weighting = Weighting(weighting)
    edges = []
    for i, plist in enumerate(system.rules):
        for k, rule in enumerate(plist):
            for q, tile in enumerate(rule.tiles):
                w = rule.probability
                if weighting is Weighting.PROBABILITY_TIMES_VOLUME:
                    w *= tile.volume
                edges.append(Edge(i, tile.type_index, -math.log(tile.volume), w, (i, k, q)))
    return MetricGraph(system.n, tuple(edges))


def matrix_at(graph: MetricGraph, s: float) -> GraphMatrixSample:
    """Evaluate the graph matrix function and its entrywise derivative at ``s``.

    ``M[i, j]`` is the sum over edges ``i -> j`` of ``w * exp(-l * s)``;
    ``M_prime`` carries the extra factor ``-l``.  Edges are summed in
    declaration order.
    """
    n = graph.vertex_count
    M = np.zeros((n, n))
    Mp = np.zeros((n, n))
    for e in graph.edges:
        term = e.weight * math.exp(-e.length * s)
        M[e.src, e.dst] += term
        Mp[e.src, e.dst] -= e.length * term
    return GraphMatrixSample(float(s), M, Mp)


def _perron_iteration(A: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    # Power iteration on A + cI with c = max row sum, an upper bound on the
    # Perron root: the shift makes the dominant eigenvalue strictly dominant
    # for irreducible (possibly periodic) input.  Stops when the
    # Collatz-Wielandt bounds min/max (Ax)_i/x_i agree to ``tol``.
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if np.any(A < 0):
        raise ValueError("expected a nonnegative matrix")
    n = A.shape[0]
    c = max(float(A.sum(axis=1).max()), 1e-300)
    B = A + c * np.eye(n)
    x = np.ones(n) / n
    for _ in range(max_iter):
        y = B @ x
        if np.any(x <= 0) or np.any(y <= 0):
            raise ConvergenceError("iterate left the positive cone; matrix is reducible")
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        x = y / y.sum()
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi) - c, x
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def spectral_radius(matrix, tol: float = 1e-13, max_iter: int = 200_000) -> float:
    """Perron root of a nonnegative irreducible square matrix."""
    rho, _ = _perron_iteration(np.asarray(matrix, dtype=float), tol, max_iter)
    return rho


def left_pf_eigenvector(matrix, tol: float = 1e-14, max_iter: int = 200_000) -> np.ndarray:
    """Positive left Perron-Frobenius eigenvector, normalized to sum 1."""
    _, x = _perron_iteration(np.asarray(matrix, dtype=float).T, tol, max_iter)
    return x / x.sum()


def right_pf_eigenvector(matrix, tol: float = 1e-14, max_iter: int = 200_000) -> np.ndarray:
    _, x = _perron_iteration(np.asarray(matrix, dtype=float), tol, max_iter)
    return x / x.sum()


def solve_lambda(graph: MetricGraph, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Smallest real ``s`` at which the spectral radius of ``M(s)`` equals 1.

    The spectral radius is strictly decreasing in ``s`` (every length is
    positive), so the root is bracketed, starting from ``[-1, 8]`` and
    widening geometrically, then bisected.
    """

    def rho(s: float) -> float:
        return spectral_radius(matrix_at(graph, s).M)

    lo, hi = -1.0, 8.0
    for _ in range(64):
        if rho(lo) >= 1.0:
            break
        lo -= 2.0 * (hi - lo)
    else:
        raise BracketError("spectral radius stays below 1 on the search interval")
    for _ in range(64):
        if rho(hi) <= 1.0:
            break
        hi += 2.0 * (hi - lo)
    else:
        raise BracketError("spectral radius stays above 1 on the search interval")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        r = rho(mid)
        if r == 1.0:
            return mid
        if r > 1.0:
            lo = mid
        else:
            hi = mid
    # end-point with the smaller residual
    best = min((lo, hi), key=lambda s: abs(rho(s) - 1.0))
    if abs(rho(best) - 1.0) > tol:
        raise BracketError(f"bisection ended with |rho - 1| = {abs(rho(best) - 1.0):.3g}")
    return best


def adjugate(A: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix); works for singular ``A``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones((1, 1))
    cof = np.empty((n, n))
    for i in range(n):
        rows = [r for r in range(n) if r != i]
        for j in range(n):
            cols = [c for c in range(n) if c != j]
            cof[i, j] = (-1) ** (i + j) * np.linalg.det(A[np.ix_(rows, cols)])
    return cof.T


def compute_Q(graph: MetricGraph, lambda_: float | None = None) -> np.ndarray:
    r"""Asymptotic walk-count coefficient matrix.

    .. math:: Q = \operatorname{adj}(I - M(\lambda)) / -\operatorname{tr}(\operatorname{adj}(I - M(\lambda)) M'(\lambda))
    """
    if lambda_ is None:
        lambda_ = solve_lambda(graph)
    sample = matrix_at(graph, lambda_)
    n = graph.vertex_count
    adj = adjugate(np.eye(n) - sample.M)
    denom = -np.trace(adj @ sample.M_prime)
    if denom == 0.0 or not math.isfinite(denom):
        raise ZeroDivisionError("degenerate graph: zero denominator in Q")
    return adj / denom


def perron_data(graph: MetricGraph) -> PerronData:
    lam = solve_lambda(graph)
    M = matrix_at(graph, lam).M
    return PerronData(
        lambda_=lam,
        spectral_radius_at_lambda=spectral_radius(M),
        left_eigenvector=left_pf_eigenvector(M),
        right_eigenvector=right_pf_eigenvector(M),
        Q=compute_Q(graph, lam),
    )


def is_strongly_connected(graph: MetricGraph) -> bool:
    n = graph.vertex_count
    fwd: list[set[int]] = [set() for _ in range(n)]
    bwd: list[set[int]] = [set() for _ in range(n)]
    for e in graph.edges:
        fwd[e.src].add(e.dst)
        bwd[e.dst].add(e.src)

    def reach(adj: list[set[int]]) -> set[int]:
        seen, stack = {0}, [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    return len(reach(fwd)) == n and len(reach(bwd)) == n


# --------------------------------------------------------------------------
# brute-force walk counting
# --------------------------------------------------------------------------


def enumerate_paths(
    graph: MetricGraph, start: int, horizon: float, max_paths: int = 10**8
) -> Iterator[tuple[int, float, float]]:
    """Yield ``(end_vertex, length, weight)`` for every path from ``start``
    whose length is strictly below ``horizon``, the empty path included.

    Depth-first, out-edges in declaration order, so the sequence is
    deterministic.
    """
    out = [graph.out_edges(v) for v in range(graph.vertex_count)]
    edges = graph.edges
    count = 0
    if horizon <= 0:
        return
    stack = [(start, 0.0, 1.0)]
    while stack:
        v, length, weight = stack.pop()
        count += 1
        if count > max_paths:
            raise EnumerationBudgetExceeded(f"more than {max_paths} paths below length {horizon}")
        yield v, length, weight
        # reversed push keeps declaration order on pop
        for k in reversed(out[v]):
            e = edges[k]
            nl = length + e.length
            if nl < horizon:
                stack.append((e.dst, nl, weight * e.weight))


def brute_force_walk_sum(
    graph: MetricGraph,
    i: int,
    target_edge: int,
    delta: float,
    eta: float,
    t: float,
    max_paths: int = 10**8,
) -> float:
    """Exact weighted count of walks of length exactly ``t`` from vertex ``i``
    that end inside the piece ``(delta, eta]`` of edge ``target_edge``
    (distances measured from the edge's initial vertex).

    Computes ``sum w(g) w(e) [l(g) + delta < t <= l(g) + eta]`` over all paths
    ``g`` from ``i`` to the initial vertex of the edge, by exhaustive
    enumeration.
    """
    e = graph.edges[target_edge]
    if not 0.0 <= delta <= eta <= e.length:
        raise ValueError("need 0 <= delta <= eta <= edge length")
    total = 0.0
    for v, length, weight in enumerate_paths(graph, i, t - delta, max_paths):
        if v == e.src and length + delta < t <= length + eta:
            total += weight * e.weight
    return total


def tile_interval(length: float, a: float, b: float) -> tuple[float, float]:
    """Piece ``(delta, eta]`` of an edge whose walks end on tiles of volume in
    ``(a, b]``, for the tile volume ``exp(-length)``."""
    la = math.log(1.0 / a) if a > 0 else math.inf
    lb = math.log(1.0 / b)
    return max(0.0, length - la), max(0.0, length - lb)


def brute_force_tile_count(
    graph: MetricGraph,
    i: int,
    t: float,
    a: float = 0.0,
    b: float = 1.0,
    tile_type: int | None = None,
    max_paths: int = 10**8,
) -> float:
    """Weighted count of walks of length ``t`` from ``i`` ending on any edge
    (optionally only edges into ``tile_type``) at a point corresponding to a
    tile volume in ``(a, b]``.

    With the probability weighting this is the expected number of such tiles
    in the semi-flow patch at time ``t / d`` of prototile ``i``.  All target
    edges are handled in a single enumeration; the result equals the sum of
    :func:`brute_force_walk_sum` over those edges, in edge order.
    """
    targets = []
    for k, e in enumerate(graph.edges):
        if tile_type is not None and e.dst != tile_type:
            continue
        d, h = tile_interval(e.length, a, b)
        if h > d:
            targets.append((k, e, d, h))
    by_vertex: dict[int, list] = {}
    for item in targets:
        by_vertex.setdefault(item[1].src, []).append(item)
    per_edge = [0.0] * len(graph.edges)
    horizon = t - min((d for _, _, d, _ in targets), default=0.0)
    for v, length, weight in enumerate_paths(graph, i, horizon, max_paths):
        for k, e, d, h in by_vertex.get(v, ()):
            if length + d < t <= length + h:
                per_edge[k] += weight * e.weight
    total = 0.0
    for k, _, _, _ in targets:
        total += per_edge[k]
    return total


def predicted_walk_sum(graph: MetricGraph, i: int, target_edge: int, delta: float, eta: float, t: float,
                       perron: PerronData | None = None) -> float:
    """Leading asymptotic term ``w(e) Q[i, h] int_delta^eta exp(-lambda x) dx exp(lambda t)``."""
    p = perron or perron_data(graph)
    e = graph.edges[target_edge]
    lam = p.lambda_
    if lam == 0.0:
        integral = eta - delta
    else:
        integral = (math.exp(-lam * delta) - math.exp(-lam * eta)) / lam
    return e.weight * p.Q[i, e.src] * integral * math.exp(lam * t)


# --------------------------------------------------------------------------
# incommensurability
# --------------------------------------------------------------------------


def simple_cycle_lengths(graph: MetricGraph, limit: int = 100_000) -> tuple[list[float], bool]:
    """Lengths of all simple cycles, one per choice of parallel edges.

    Returns ``(lengths, truncated)``.  Cycles are rooted at their smallest
    vertex so each is produced once.
    """
    n = graph.vertex_count
    out = [graph.out_edges(v) for v in range(n)]
    lengths: list[float] = []
    for root in range(n):
        stack = [(root, 0.0, frozenset([root]))]
        while stack:
            v, length, seen = stack.pop()
            for k in out[v]:
                e = graph.edges[k]
                if e.dst == root:
                    lengths.append(length + e.length)
                    if len(lengths) >= limit:
                        return lengths, True
                elif e.dst > root and e.dst not in seen:
                    stack.append((e.dst, length + e.length, seen | {e.dst}))
    return lengths, False


def _is_rational_ratio(x: float, max_denominator: int, tol: float) -> bool:
    approx = Fraction(x).limit_denominator(max_denominator)
    return abs(x - float(approx)) <= tol * max(1.0, abs(x))


def check_incommensurable(
    graph: MetricGraph,
    max_denominator: int = 10**4,
    tol: float = 1e-9,
    cycle_limit: int = 100_000,
) -> str:
    """Classify cycle lengths as ``likely_incommensurable``, ``commensurable``
    or ``unknown``.

    A pair of lengths counts as rationally related when their ratio lies
    within ``tol`` of a fraction with denominator at most
    ``max_denominator``.  Floating point cannot certify irrationality, hence
    "likely".
    """
    lengths, truncated = simple_cycle_lengths(graph, cycle_limit)
    # distinct values only; equal lengths are trivially commensurable
    distinct: list[float] = []
    for x in sorted(lengths):
        if not distinct or x - distinct[-1] > 1e-12 * x:
            distinct.append(x)
    for k, a in enumerate(distinct):
        for b in distinct[k + 1:]:
            if not _is_rational_ratio(b / a, max_denominator, tol):
                return "likely_incommensurable"
    if truncated or not distinct:
        return "unknown"
    return "commensurable"


def graph_summary(graph: MetricGraph) -> dict:
    return {
        "vertex_count": graph.vertex_count,
        "edges": [
            {"src": e.src, "dst": e.dst, "length": e.length, "weight": e.weight, "provenance": list(e.provenance)}
            for e in graph.edges
        ],
    }

