"""Monte Carlo simulation of Kakutani partitions, semi-flow patches and
generation sequences.

Tiles are aggregated by ``(type, key)`` where ``key`` is the vector of
exponents over the distinct substitution-tile volumes of the system: a tile
with key ``n`` has log-volume ``log_offset - sum(n[e] * length[e])``.
Keys are exact, so aggregation and the choice of maximal tiles never suffer
float drift; a step costs time proportional to the number of distinct keys,
not the number of tiles.

Rule choices for ``N`` identical tiles are one multinomial draw, made by
iterated binomials in rule-declaration order.  The random stream comes from
:func:`make_rngs` (Philox, a counter-based generator).
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .formulas import generation_predictions
from .system import SubstitutionSystem

GROUP_TOLERANCE = 1e-9
"""Log-volume tolerance below which two tiles count as equally large."""

Key = tuple[int, ...]


def make_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Main and auxiliary streams for one run.

    The main stream drives every rule choice; the auxiliary stream is used
    only by the explicit 1-D mode to place choices, so both modes consume
    the main stream identically.
    """
    main, aux = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.Philox(main)), np.random.Generator(np.random.Philox(aux))


@dataclass(frozen=True)
class _CompiledRule:
    probability: float
    # (child type, basis index, volume, offset of the child inside the parent)
    children: tuple[tuple[int, int, float, float], ...]


@dataclass(frozen=True)
class CompiledSystem:
    dimension: int
    n: int
    lengths: tuple[float, ...]
    rules: tuple[tuple[_CompiledRule, ...], ...]

    @classmethod
    def from_system(cls, system: SubstitutionSystem) -> "CompiledSystem":
        basis: dict[float, int] = {}
        for vol in system.tile_volumes():
            basis.setdefault(vol, len(basis))
        lengths = tuple(-math.log(v) for v in basis)
        rules = []
        for plist in system.rules:
            compiled = []
            for rule in plist:
                offset = 0.0
                children = []
                for t in rule.tiles:
                    children.append((t.type_index, basis[t.volume], t.volume, offset))
                    offset += t.volume
                compiled.append(_CompiledRule(rule.probability, tuple(children)))
            rules.append(tuple(compiled))
        return cls(system.dimension, system.n, lengths, tuple(rules))


def _compiled(system: SubstitutionSystem | CompiledSystem) -> CompiledSystem:
    if isinstance(system, CompiledSystem):
        return system
    return CompiledSystem.from_system(system)


@dataclass
class TilePopulation:
    """Multiset of tiles keyed by ``(type, exponent vector)``."""

    lengths: tuple[float, ...]
    dimension: int
    log_offset: float = 0.0
    counts: dict[tuple[int, Key], int] = field(default_factory=dict)
    step_index: int = 0
    event_times: list[float] = field(default_factory=list)
    time: float | None = None  # semi-flow time when built by semiflow_patch
    _log_volumes: dict[Key, float] = field(default_factory=dict, repr=False)
    _heap: list = field(default_factory=list, repr=False)

    @classmethod
    def single(cls, system: SubstitutionSystem | CompiledSystem, tile_type: int, log_volume: float = 0.0):
        comp = _compiled(system)
        pop = cls(comp.lengths, comp.dimension, log_volume)
        pop.add(tile_type, (0,) * len(comp.lengths), 1)
        return pop

    def log_volume(self, key: Key) -> float:
        lv = self._log_volumes.get(key)
        if lv is None:
            acc = 0.0
            for n_e, l_e in zip(key, self.lengths):
                acc += n_e * l_e
            lv = self.log_offset - acc
            self._log_volumes[key] = lv
        return lv

    def add(self, tile_type: int, key: Key, count: int) -> None:
        k = (tile_type, key)
        if k in self.counts:
            self.counts[k] += count
        else:
            self.counts[k] = count
            heapq.heappush(self._heap, (-self.log_volume(key), tile_type, key))

    @property
    def total_count(self) -> int:
        return sum(self.counts.values())

    @property
    def max_log_volume(self) -> float:
        return -self._heap[0][0]

    def total_volume(self) -> float:
        return math.fsum(c * math.exp(self.log_volume(k)) for (_, k), c in self.counts.items())

    def region_volume(self) -> float:
        """Volume of the inflated start tile, ``exp(d t) vol S`` for a patch."""
        return math.exp(self.log_offset)

    def entries(self) -> list[tuple[int, Key, float, int]]:
        """``(type, key, log_volume, count)`` sorted by type, then by
        decreasing volume, then by key."""
        rows = [(t, k, self.log_volume(k), c) for (t, k), c in self.counts.items()]
        rows.sort(key=lambda r: (r[0], -r[2], r[1]))
        return rows

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(types, volumes, counts)`` arrays in :meth:`entries` order."""
        rows = self.entries()
        types = np.array([r[0] for r in rows], dtype=np.int64)
        vols = np.array([math.exp(r[2]) for r in rows])
        counts = np.array([r[3] for r in rows], dtype=np.int64)
        return types, vols, counts

    def rescaled_log_volumes(self) -> np.ndarray:
        """Log-volumes shifted so the largest tile has volume 1."""
        top = self.max_log_volume
        return np.array([r[2] - top for r in self.entries()])

    def copy(self) -> "TilePopulation":
        return TilePopulation(
            self.lengths, self.dimension, self.log_offset, dict(self.counts), self.step_index,
            list(self.event_times), self.time, dict(self._log_volumes), list(self._heap),
        )


def _multinomial(rng: np.random.Generator | None, n: int, probs: tuple[float, ...]) -> list[int]:
    if len(probs) == 1:
        return [n]
    if rng is None:
        raise ValueError("a random system needs a random generator")
    out = []
    remaining = n
    rest = 1.0
    for p in probs[:-1]:
        if remaining == 0:
            out.append(0)
            continue
        q = 1.0 if rest <= p else p / rest
        x = int(rng.binomial(remaining, q))
        out.append(x)
        remaining -= x
        rest -= p
    out.append(remaining)
    return out


SplitHook = Callable[[int, Key, float, list[int]], None]


def kakutani_step(
    population: TilePopulation,
    system: SubstitutionSystem | CompiledSystem,
    rng: np.random.Generator | None,
    *,
    floor: float = -math.inf,
    hook: SplitHook | None = None,
) -> TilePopulation:
    """Substitute every tile of maximal volume (within
    :data:`GROUP_TOLERANCE` in log-volume), in place.

    Tiles at or below ``floor`` in log-volume are never substituted.  The
    group is processed in ``(type, key)`` order.  Appends the new event
    time ``-max_log_volume / d`` and returns ``population``.
    """
    comp = _compiled(system)
    heap = population._heap
    top = heap[0][0]
    group = []
    while heap and heap[0][0] <= top + GROUP_TOLERANCE and -heap[0][0] > floor:
        _, ty, key = heapq.heappop(heap)
        group.append((ty, key))
    group.sort()
    for ty, key in group:
        count = population.counts.pop((ty, key))
        rules = comp.rules[ty]
        split = _multinomial(rng, count, tuple(r.probability for r in rules))
        if hook is not None:
            hook(ty, key, population.log_volume(key), split)
        for rule, nk in zip(rules, split):
            if nk == 0:
                continue
            for dst, e, _, _ in rule.children:
                child = key[:e] + (key[e] + 1,) + key[e + 1:]
                population.add(dst, child, nk)
    population.step_index += 1
    population.event_times.append(-population.max_log_volume / comp.dimension)
    return population


@dataclass(frozen=True)
class SimulationConfig:
    seed: int = 0
    mode: str = "aggregate"
    steps: int | None = None
    tile_count: int | None = None
    time: float | None = None
    start_type: int = 0
    start_volume: float = 1.0

    def __post_init__(self):
        if self.mode not in ("aggregate", "explicit_1d"):
            raise ValueError(f"unknown mode {self.mode!r}")
        given = [x is not None for x in (self.steps, self.tile_count, self.time)]
        if sum(given) != 1:
            raise ValueError("give exactly one stop condition: steps, tile_count or time")
        if not 0.0 < self.start_volume <= 1.0:
            raise ValueError("start volume must lie in (0, 1]")


def _should_continue(pop: TilePopulation, config: SimulationConfig) -> bool:
    if config.steps is not None:
        return pop.step_index < config.steps
    if config.tile_count is not None:
        return pop.total_count < config.tile_count
    # time stop: first partition whose event time reaches the target
    return pop.event_times[-1] < config.time


def _start(comp: CompiledSystem, config: SimulationConfig) -> TilePopulation:
    if not 0 <= config.start_type < comp.n:
        raise ValueError(f"start type {config.start_type} out of range")
    pop = TilePopulation.single(comp, config.start_type, math.log(config.start_volume))
    pop.event_times.append(-pop.max_log_volume / comp.dimension)
    return pop


def run_kakutani(system: SubstitutionSystem, config: SimulationConfig) -> TilePopulation:
    """Random Kakutani sequence of partitions, stopped per ``config``.

    A ``tile_count`` stop returns the first partition with at least that
    many tiles; a ``time`` stop the first whose event time reaches it.
    """
    comp = _compiled(system)
    rng, _ = make_rngs(config.seed)
    pop = _start(comp, config)
    while _should_continue(pop, config):
        kakutani_step(pop, comp, rng)
    return pop


def semiflow_patch(
    system: SubstitutionSystem,
    start_type: int,
    t: float,
    rng: np.random.Generator | None,
    start_volume: float = 1.0,
) -> TilePopulation:
    """Realization of the substitution semi-flow at time ``t``.

    The start tile is inflated to log-volume ``d t + log(start_volume)``
    and every tile above unit volume is substituted, largest first, until
    none remain.  Tiles within :data:`GROUP_TOLERANCE` of unit volume count
    as unit volume.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not 0.0 < start_volume <= 1.0:
        raise ValueError("start volume must lie in (0, 1]")
    comp = _compiled(system)
    pop = TilePopulation.single(comp, start_type, comp.dimension * t + math.log(start_volume))
    pop.time = float(t)
    while pop.max_log_volume > GROUP_TOLERANCE:
        kakutani_step(pop, comp, rng, floor=GROUP_TOLERANCE)
    return pop


# --------------------------------------------------------------------------
# explicit 1-D tilings
# --------------------------------------------------------------------------


@dataclass
class IntervalTiling:
    """Intervals laid left to right from the origin."""

    types: np.ndarray
    lengths: np.ndarray
    region_length: float

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    def __len__(self) -> int:
        return len(self.lengths)

    def intervals(self) -> list[tuple[float, float]]:
        p = self.points
        return list(zip(p[:-1].tolist(), p[1:].tolist()))


class _PositionTracker:
    def __init__(self, comp: CompiledSystem, pop: TilePopulation, aux: np.random.Generator):
        self.comp = comp
        self.pop = pop
        self.aux = aux
        self.positions: dict[tuple[int, Key], list[np.ndarray]] = {
            k: [np.zeros(1)] for k in pop.counts
        }

    def __call__(self, ty: int, key: Key, log_volume: float, split: list[int]) -> None:
        chunks = self.positions.pop((ty, key))
        pos = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
        parent_len = math.exp(log_volume)
        rules = self.comp.rules[ty]
        if len(rules) > 1:
            pos = pos[self.aux.permutation(len(pos))]
        start = 0
        for rule, nk in zip(rules, split):
            if nk == 0:
                continue
            chosen = pos[start:start + nk]
            start += nk
            for dst, e, _, offset in rule.children:
                child = key[:e] + (key[e] + 1,) + key[e + 1:]
                self.positions.setdefault((dst, child), []).append(chosen + offset * parent_len)

    def tiling(self) -> IntervalTiling:
        types, lengths, starts = [], [], []
        for (ty, key), chunks in self.positions.items():
            pos = np.concatenate(chunks)
            starts.append(pos)
            types.append(np.full(len(pos), ty, dtype=np.int64))
            lengths.append(np.full(len(pos), math.exp(self.pop.log_volume(key))))
        starts_a = np.concatenate(starts)
        order = np.argsort(starts_a, kind="stable")
        return IntervalTiling(
            np.concatenate(types)[order],
            np.concatenate(lengths)[order],
            math.exp(self.pop.log_offset),
        )


@dataclass
class SimulationResult:
    population: TilePopulation
    tiling: IntervalTiling | None = None


def simulate(system: SubstitutionSystem, config: SimulationConfig) -> SimulationResult:
    if config.mode == "aggregate":
        return SimulationResult(run_kakutani(system, config))
    if system.dimension != 1:
        raise ValueError("explicit_1d mode requires a 1-dimensional system")
    comp = _compiled(system)
    rng, aux = make_rngs(config.seed)
    pop = _start(comp, config)
    tracker = _PositionTracker(comp, pop, aux)
    while _should_continue(pop, config):
        kakutani_step(pop, comp, rng, hook=tracker)
    return SimulationResult(pop, tracker.tiling())


def run_explicit_1d(system: SubstitutionSystem, config: SimulationConfig) -> IntervalTiling:
    """Kakutani partition of an interval with positions.

    Children are laid left to right in rule-declaration order.  The split
    schedule and the rule counts are those of :func:`run_kakutani` with the
    same seed; which tiles of a group received which rule is drawn from the
    auxiliary stream.
    """
    if config.mode != "explicit_1d":
        config = dataclasses.replace(config, mode="explicit_1d")
    return simulate(system, config).tiling


# --------------------------------------------------------------------------
# generation sequences
# --------------------------------------------------------------------------


@dataclass
class GenerationRun:
    start: int
    generations: int
    trials: int
    counts: list[list]  # per generation, per type; ints for a single trial
    volumes: np.ndarray
    count_stderr: np.ndarray | None
    expected_counts: list[list]
    expected_volumes: np.ndarray


def _generation_trial(comp: CompiledSystem, i: int, k: int, rng) -> tuple[list[list[int]], np.ndarray]:
    pop = TilePopulation.single(comp, i)
    counts = []
    vols = np.zeros((k + 1, comp.n))
    for g in range(k + 1):
        per_type = [0] * comp.n
        parts: list[list[float]] = [[] for _ in range(comp.n)]
        for (ty, key), c in pop.counts.items():
            per_type[ty] += c
            parts[ty].append(c * math.exp(pop.log_volume(key)))
        counts.append(per_type)
        vols[g] = [math.fsum(p) for p in parts]
        if g == k:
            break
        nxt = TilePopulation(pop.lengths, pop.dimension, pop.log_offset)
        nxt._log_volumes = pop._log_volumes
        for ty, key in sorted(pop.counts):
            c = pop.counts[(ty, key)]
            rules = comp.rules[ty]
            split = _multinomial(rng, c, tuple(r.probability for r in rules))
            for rule, nk in zip(rules, split):
                if nk:
                    for dst, e, _, _ in rule.children:
                        nxt.add(dst, key[:e] + (key[e] + 1,) + key[e + 1:], nk)
        pop = nxt
    return counts, vols


def run_generation(
    system: SubstitutionSystem, i: int, k: int, rng: np.random.Generator | None = None, trials: int = 64
) -> GenerationRun:
    """Generation sequence of prototile ``i``: all tiles substituted at once.

    A non-random system is run once and yields exact integer counts.  A
    random system is run ``trials`` times on ``rng``; counts are the mean
    with its standard error.  The exact expectations ``e_i^T S^g`` and
    ``e_i^T V^g`` are attached either way.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    comp = _compiled(system)
    pred = generation_predictions(system, i, k)
    if not system.is_random:
        counts, vols = _generation_trial(comp, i, k, None)
        return GenerationRun(i, k, 1, counts, vols, None, pred.counts, pred.volumes)
    if rng is None:
        raise ValueError("a random system needs a random generator")
    all_counts = []
    all_vols = []
    for _ in range(trials):
        c, v = _generation_trial(comp, i, k, rng)
        all_counts.append(c)
        all_vols.append(v)
    arr = np.array(all_counts, dtype=float)
    mean = arr.mean(axis=0)
    stderr = arr.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else None
    return GenerationRun(
        i, k, trials, mean.tolist(), np.mean(all_vols, axis=0), stderr, pred.counts, pred.volumes
    )
