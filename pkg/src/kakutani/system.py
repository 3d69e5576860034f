"""Random multiscale substitution systems: data model, parsing and validation.

A system is a list of prototiles, each carrying one or more substitution
rules.  A rule partitions a unit-volume prototile into rescaled copies of
prototiles; it is chosen with the probability attached to it.  Volumes are the
canonical representation.  Scales are accepted in configs and converted to
volumes (``scale ** dimension``) at parse time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

DEFAULT_TOLERANCE = 1e-12


class SystemConfigError(ValueError):
    """Raised for malformed or invalid system configurations.

    ``locus`` names the offending place in the document, e.g.
    ``rules.red[0].tiles[1].volume`` or ``line 3, column 5``.
    """

    def __init__(self, message: str, locus: str | None = None):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


@dataclass(frozen=True)
class SubstitutionTile:
    type_index: int
    volume: float
    scale: float | None = None


@dataclass(frozen=True)
class Rule:
    probability: float
    tiles: tuple[SubstitutionTile, ...]

    @property
    def total_volume(self) -> float:
        return math.fsum(t.volume for t in self.tiles)


@dataclass(frozen=True)
class SubstitutionSystem:
    """An immutable random substitution system.

    ``rules[i]`` holds the rules of prototile ``i``; prototile names map to
    indices in declaration order.
    """

    name: str
    dimension: int
    prototile_names: tuple[str, ...]
    rules: tuple[tuple[Rule, ...], ...]

    @property
    def n(self) -> int:
        return len(self.prototile_names)

    @property
    def is_random(self) -> bool:
        return any(len(r) > 1 for r in self.rules)

    def index_of(self, name_or_index: str | int) -> int:
        if isinstance(name_or_index, int):
            if not 0 <= name_or_index < self.n:
                raise IndexError(f"prototile index {name_or_index} out of range")
            return name_or_index
        try:
            return self.prototile_names.index(name_or_index)
        except ValueError:
            if name_or_index.isdigit():
                return self.index_of(int(name_or_index))
            raise KeyError(f"unknown prototile {name_or_index!r}") from None

    def tile_volumes(self) -> list[float]:
        return [t.volume for rules in self.rules for rule in rules for t in rule.tiles]

    @property
    def is_fixed_scale(self) -> bool:
        vols = self.tile_volumes()
        return max(vols) - min(vols) <= DEFAULT_TOLERANCE

    def to_dict(self) -> dict[str, Any]:
        names = self.prototile_names
        rules: dict[str, list] = {}
        for i, plist in enumerate(self.rules):
            out = []
            for rule in plist:
                tiles = []
                for t in rule.tiles:
                    entry: dict[str, Any] = {"type": names[t.type_index]}
                    if t.scale is not None:
                        entry["scale"] = t.scale
                    else:
                        entry["volume"] = t.volume
                    tiles.append(entry)
                out.append({"probability": rule.probability, "tiles": tiles})
            rules[names[i]] = out
        return {
            "name": self.name,
            "dimension": self.dimension,
            "prototiles": list(names),
            "rules": rules,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class ValidationReport:
    normalized: bool
    irreducible: bool
    incommensurability: str
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.normalized and self.irreducible

    def to_dict(self) -> dict[str, Any]:
        return {
            "normalized": self.normalized,
            "irreducible": self.irreducible,
            "incommensurability": self.incommensurability,
            "messages": list(self.messages),
        }


def _require(obj: dict, key: str, kind: type | tuple, locus: str):
    if key not in obj:
        raise SystemConfigError(f"missing field {key!r}", locus or "<root>")
    value = obj[key]
    # bool is an int subclass; never accept it as a number
    if isinstance(value, bool) or not isinstance(value, kind):
        raise SystemConfigError(
            f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
            f"{locus}.{key}" if locus else key,
        )
    return value


def _number(value: Any, locus: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SystemConfigError(f"expected a number, got {value!r}", locus)
    value = float(value)
    if not math.isfinite(value):
        raise SystemConfigError(f"expected a finite number, got {value!r}", locus)
    return value


def system_from_dict(doc: Any, tolerance: float = DEFAULT_TOLERANCE) -> SubstitutionSystem:
    if not isinstance(doc, dict):
        raise SystemConfigError("top level must be an object", "<root>")
    unknown = set(doc) - {"name", "dimension", "prototiles", "rules"}
    if unknown:
        raise SystemConfigError(f"unknown fields {sorted(unknown)}", "<root>")
    name = _require(doc, "name", str, "")
    dimension = _require(doc, "dimension", int, "")
    if dimension < 1:
        raise SystemConfigError("dimension must be a positive integer", "dimension")
    names = _require(doc, "prototiles", list, "")
    if not names:
        raise SystemConfigError("at least one prototile is required", "prototiles")
    for k, nm in enumerate(names):
        if not isinstance(nm, str):
            raise SystemConfigError("prototile names must be strings", f"prototiles[{k}]")
    if len(set(names)) != len(names):
        raise SystemConfigError("duplicate prototile names", "prototiles")
    index = {nm: k for k, nm in enumerate(names)}
    rule_doc = _require(doc, "rules", dict, "")
    extra = set(rule_doc) - set(names)
    if extra:
        raise SystemConfigError(f"rules given for unknown prototiles {sorted(extra)}", "rules")

    all_rules = []
    for nm in names:
        loc = f"rules.{nm}"
        if nm not in rule_doc:
            raise SystemConfigError("prototile has no substitution rule", loc)
        plist = rule_doc[nm]
        if not isinstance(plist, list) or not plist:
            raise SystemConfigError("expected a nonempty list of rules", loc)
        rules = []
        for k, rd in enumerate(plist):
            rloc = f"{loc}[{k}]"
            if not isinstance(rd, dict):
                raise SystemConfigError("rule must be an object", rloc)
            if "probability" in rd:
                p = _number(rd["probability"], f"{rloc}.probability")
            elif len(plist) == 1:
                p = 1.0
            else:
                raise SystemConfigError("probability required when a prototile has several rules", rloc)
            if not 0.0 < p <= 1.0:
                raise SystemConfigError(f"probability {p} not in (0, 1]", f"{rloc}.probability")
            tdocs = _require(rd, "tiles", list, rloc)
            if not tdocs:
                raise SystemConfigError("rule has no tiles", f"{rloc}.tiles")
            tiles = []
            for q, td in enumerate(tdocs):
                tloc = f"{rloc}.tiles[{q}]"
                if not isinstance(td, dict):
                    raise SystemConfigError("tile must be an object", tloc)
                ttype = _require(td, "type", str, tloc)
                if ttype not in index:
                    raise SystemConfigError(f"unknown prototile {ttype!r}", f"{tloc}.type")
                if ("volume" in td) == ("scale" in td):
                    raise SystemConfigError("give exactly one of 'volume' or 'scale'", tloc)
                scale = None
                if "scale" in td:
                    scale = _number(td["scale"], f"{tloc}.scale")
                    if not 0.0 < scale < 1.0:
                        raise SystemConfigError(f"scale {scale} not in (0, 1)", f"{tloc}.scale")
                    volume = scale**dimension
                else:
                    volume = _number(td["volume"], f"{tloc}.volume")
                if not 0.0 < volume < 1.0:
                    raise SystemConfigError(f"volume {volume} not in (0, 1)", f"{tloc}.volume")
                tiles.append(SubstitutionTile(index[ttype], volume, scale))
            rule = Rule(p, tuple(tiles))
            total = rule.total_volume
            if abs(total - 1.0) > tolerance:
                raise SystemConfigError(f"volumes sum to {total:.12g} ≠ 1", f"{rloc}.tiles")
            rules.append(rule)
        psum = math.fsum(r.probability for r in rules)
        if abs(psum - 1.0) > tolerance:
            raise SystemConfigError(f"probabilities sum to {psum:.12g} ≠ 1", loc)
        all_rules.append(tuple(rules))

    return SubstitutionSystem(name, dimension, tuple(names), tuple(all_rules))


def parse_system(config_text: str, tolerance: float = DEFAULT_TOLERANCE) -> SubstitutionSystem:
    """Parse a JSON system document into a :class:`SubstitutionSystem`.

    Raises :class:`SystemConfigError` for syntax errors (with line/column),
    schema violations and probability or volume sums off by more than
    ``tolerance``.
    """
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise SystemConfigError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    return system_from_dict(doc, tolerance)


def bundled_systems() -> list[str]:
    root = resources.files("kakutani") / "systems"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_system(path_or_name: str | Path, tolerance: float = DEFAULT_TOLERANCE) -> SubstitutionSystem:
    """Load a system from a file, or from the bundled set by name.

    A path that does not exist is looked up by its stem among the bundled
    systems, so ``examples/sys-a`` and ``sys-a`` both resolve to the bundled
    ``sys-a.json``.
    """
    path = Path(path_or_name)
    if path.is_file():
        return parse_system(path.read_text(), tolerance)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    bundled = resources.files("kakutani") / "systems" / f"{stem}.json"
    if bundled.is_file():
        return parse_system(bundled.read_text(), tolerance)
    raise FileNotFoundError(f"no such system file or bundled system: {path_or_name}")


def validate(system: SubstitutionSystem, tolerance: float = DEFAULT_TOLERANCE) -> ValidationReport:
    from .graph import Weighting, build_graph, check_incommensurable, is_strongly_connected

    messages: list[str] = []
    normalized = True
    for i, plist in enumerate(system.rules):
        name = system.prototile_names[i]
        psum = math.fsum(r.probability for r in plist)
        if abs(psum - 1.0) > tolerance:
            normalized = False
            messages.append(f"{name}: probabilities sum to {psum!r}")
        for k, rule in enumerate(plist):
            total = rule.total_volume
            if abs(total - 1.0) > tolerance:
                normalized = False
                messages.append(f"{name} rule {k}: volumes sum to {total!r}")

    graph = build_graph(system, Weighting.PROBABILITY)
    irreducible = is_strongly_connected(graph)
    if not irreducible:
        messages.append("associated graph is not strongly connected")
        incommensurability = "unknown"
    else:
        incommensurability = check_incommensurable(graph)
        if incommensurability == "commensurable":
            messages.append("all cycle lengths are rationally related")
    return ValidationReport(normalized, irreducible, incommensurability, messages)

