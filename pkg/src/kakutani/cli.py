"""Command-line interface.

Exit codes: 0 on success, 1 when a system fails validation (or its config
is invalid), 2 on usage errors such as a missing config or an invalid flag
combination.  All output is deterministic given the flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import formulas, graph, report
from .simulate import SimulationConfig, TilePopulation, run_generation, make_rngs, semiflow_patch, simulate
from .stats import ComparisonReport, Histogram, gap_histogram
from .system import DEFAULT_TOLERANCE, SubstitutionSystem, SystemConfigError, load_system, validate


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


def _u64(text: str) -> int:
    try:
        value = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _nonnegative_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError("must be a finite nonnegative number")
    return value


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _shared() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("system", nargs="?", help="system config file, or the name of a bundled system")
    p.add_argument("--config", metavar="PATH", help="system config file (alternative to the positional argument)")
    p.add_argument("--out", metavar="PATH", help="write output to PATH instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default depends on the command)")
    p.add_argument("--seed", type=_u64, metavar="U64", help="random seed; required for random systems")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, metavar="REAL",
                   help="tolerance on probability and volume sums (default %(default)g)")
    return p


def _stop_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--steps", type=int, metavar="N", help="stop after N Kakutani steps")
    g.add_argument("--tiles", type=_positive_int, metavar="N", help="stop at the first partition with at least N tiles")
    g.add_argument("--time", type=_nonnegative_float, metavar="T",
                   help="stop at the first partition whose event time reaches T")


def _start_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--start-type", default="0", metavar="TYPE", help="start prototile, by name or index (default 0)")
    p.add_argument("--start-volume", type=float, default=1.0, metavar="V", help="volume of the start tile (default 1)")


def build_parser() -> argparse.ArgumentParser:
    shared = _shared()
    parser = argparse.ArgumentParser(
        prog="kakutani",
        description="Tile statistics of random multiscale substitution systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("validate", parents=[shared], help="check normalization, irreducibility and incommensurability")

    p = sub.add_parser("analyze", parents=[shared], help="matrices, lambda, Perron data and Q as JSON")
    p.add_argument("--predictions", action="store_true", help="add closed-form tile statistics")

    p = sub.add_parser("simulate", parents=[shared], help="Kakutani partition; population CSV")
    p.add_argument("--mode", choices=("aggregate", "explicit_1d"), default="aggregate",
                   help="aggregated counts, or explicit intervals for 1-D systems (default aggregate)")
    _stop_flags(p)
    _start_flags(p)

    p = sub.add_parser("semiflow", parents=[shared], help="semi-flow patch at time T; population CSV")
    p.add_argument("--time", type=_nonnegative_float, required=True, metavar="T", help="semi-flow time")
    _start_flags(p)

    p = sub.add_parser("gaps", parents=[shared], help="gap histogram of an explicit 1-D Kakutani run")
    _stop_flags(p)
    _start_flags(p)
    p.add_argument("--bins", type=_positive_int, default=40, metavar="K", help="number of bins (default 40)")
    p.add_argument("--lo", type=float, default=0.0, metavar="A", help="lower edge of the binned range (default 0)")
    p.add_argument("--hi", type=float, default=1.0, metavar="B", help="upper edge of the binned range (default 1)")

    p = sub.add_parser("generation", parents=[shared], help="generation sequence counts and volumes")
    p.add_argument("--generations", type=int, required=True, metavar="K", help="last generation")
    p.add_argument("--start-type", default="0", metavar="TYPE", help="start prototile, by name or index (default 0)")
    p.add_argument("--trials", type=_positive_int, default=64, metavar="N",
                   help="Monte Carlo trials for random systems (default 64)")

    p = sub.add_parser("oracle", parents=[shared], help="brute-force walk count against the asymptotic prediction")
    p.add_argument("--time", type=_nonnegative_float, required=True, metavar="T", help="semi-flow time; walks have length dimension * T")
    p.add_argument("--start-type", default="0", metavar="TYPE", help="start vertex, by name or index (default 0)")
    p.add_argument("--weighting", choices=[w.value for w in graph.Weighting], default=graph.Weighting.PROBABILITY.value,
                   help="edge weights (default probability)")
    p.add_argument("--lo", type=float, default=0.0, metavar="A", help="count tiles with volume in (A, B] (default 0)")
    p.add_argument("--hi", type=float, default=1.0, metavar="B", help="upper volume bound (default 1)")
    p.add_argument("--tile-type", default=None, metavar="TYPE", help="count only tiles of this type")
    p.add_argument("--max-paths", type=_positive_int, default=10**8, metavar="N", help="enumeration budget")

    p = sub.add_parser("compare", parents=[shared], help="simulation-vs-prediction report")
    _stop_flags(p)
    _start_flags(p)
    p.add_argument("--runs", type=_positive_int, default=1, metavar="R",
                   help="independent Kakutani runs with seeds SEED, SEED+1, ... (default 1)")
    p.add_argument("--semiflow-time", type=_nonnegative_float, metavar="T",
                   help="add volume_histogram_sup for the semi-flow patch at time T")
    p.add_argument("--volume-bins", type=_positive_int, default=50, metavar="K", help="bins for the volume histogram")
    p.add_argument("--volume-lo", type=float, default=0.3, metavar="A", help="volume histogram range (A, 1]")
    p.add_argument("--gap-bins", type=_positive_int, metavar="K",
                   help="add gap statistics of an explicit 1-D run with K bins")
    p.add_argument("--gap-lo", type=float, default=0.3, metavar="A", help="gap histogram range (A, 1]")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load(args) -> SubstitutionSystem:
    if args.system and args.config and args.system != args.config:
        raise UsageError("give the system either positionally or with --config, not both")
    source = args.config or args.system
    if not source:
        raise UsageError("missing config: pass a system file or bundled system name")
    try:
        system = load_system(source, args.tolerance)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except SystemConfigError as exc:
        raise ValidationFailure(f"invalid config: {exc}") from None
    return system


def _checked(system: SubstitutionSystem, args) -> SubstitutionSystem:
    rep = validate(system, args.tolerance)
    if not rep.ok:
        raise ValidationFailure("; ".join(rep.messages) or "system failed validation")
    return system


def _seed(system: SubstitutionSystem, args) -> int:
    if args.seed is None:
        if system.is_random:
            raise UsageError(f"--seed is required for the random system {system.name!r}")
        return 0
    return args.seed


def _type(system: SubstitutionSystem, name) -> int:
    try:
        return system.index_of(name)
    except (KeyError, IndexError) as exc:
        raise UsageError(str(exc.args[0])) from None


def _config(system, args, seed, mode="aggregate") -> SimulationConfig:
    if args.steps is not None and args.steps < 0:
        raise UsageError("--steps must be nonnegative")
    try:
        return SimulationConfig(seed, mode, args.steps, args.tiles, args.time,
                                _type(system, args.start_type), args.start_volume)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, args) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def population_rows(system: SubstitutionSystem, pop: TilePopulation) -> list[dict]:
    return [
        {"type": system.prototile_names[t], "volume": math.exp(lv), "log_volume": lv, "count": c}
        for t, _, lv, c in pop.entries()
    ]


def population_csv(system: SubstitutionSystem, pop: TilePopulation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("type", "volume", "log_volume", "count"))
    for row in population_rows(system, pop):
        w.writerow((row["type"], repr(row["volume"]), repr(row["log_volume"]), row["count"]))
    return buf.getvalue()


def _population_out(system, pop, args, meta: dict) -> str:
    if args.format == "json":
        return _json({**meta, "tiles": pop.total_count, "rows": population_rows(system, pop)})
    return population_csv(system, pop)


def _histogram_out(hist: Histogram, args) -> str:
    if args.format == "json":
        return _json({
            "normalization": hist.normalization,
            "total": hist.total,
            "rows": [{k: (float(v) if k != "count" else int(v)) for k, v in r.items()} for r in hist.rows()],
        })
    return hist.to_csv()


def _report_out(rep: ComparisonReport, args) -> str:
    return rep.to_json() + "\n" if args.format == "json" else rep.to_csv()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    system = _load(args)
    rep = validate(system, args.tolerance)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("check", "value"))
        w.writerow(("normalized", rep.normalized))
        w.writerow(("irreducible", rep.irreducible))
        w.writerow(("incommensurability", rep.incommensurability))
        for m in rep.messages:
            w.writerow(("message", m))
        _emit(buf.getvalue(), args)
    else:
        _emit(_json({"system": system.name, **rep.to_dict(), "ok": rep.ok}), args)
    return 0 if rep.ok else 1


def analysis(system: SubstitutionSystem, predictions: bool = False) -> dict:
    m = formulas.system_matrices(system)
    lambdas = {}
    for w in graph.Weighting:
        lambdas[w.value] = graph.solve_lambda(graph.build_graph(system, w))
    g = graph.build_graph(system, graph.Weighting.PROBABILITY)
    per = graph.perron_data(g)
    out = {
        "system": system.name,
        "dimension": system.dimension,
        "prototiles": list(system.prototile_names),
        "S": _floats(m.S),
        "V": _floats(m.V),
        "H": _floats(m.H),
        "lambda": lambdas,
        "v": _floats(m.v),
        "Q": _floats(per.Q),
        "entropy_total": m.entropy_total,
        "incommensurability": graph.check_incommensurable(g),
    }
    if predictions:
        pred = formulas.type_predictions(m)
        dens = formulas.DensityEvaluator(m)
        gaps = {}
        if system.dimension == 1:
            for norm in formulas.GAP_NORMALIZATIONS:
                const = formulas.gap_constant(m, norm)
                gaps[norm] = {
                    "coefficients": _floats(dens.coefficients.sum(axis=1) / const),
                    "integral": formulas.gap_mass_in_range(m, 0.0, 1.0, norm),
                }
        out["predictions"] = {
            "count_density_per_volume": _floats(pred.count_density_per_volume),
            "volume_fraction": _floats(pred.volume_fraction),
            "kakutani_count_fraction": _floats(pred.kakutani_count_fraction),
            "tiles_per_unit_volume": pred.tiles_per_unit_volume,
            "density": {
                "breakpoints": _floats(dens.breakpoints),
                "coefficients": _floats(dens.coefficients / m.entropy_total),
                "form": "count density coef/x**2 and volume density coef/x on (breakpoints[k], breakpoints[k+1]]",
            },
            "gap_density": gaps,
        }
    return out


def cmd_analyze(args) -> int:
    if args.format == "csv":
        raise UsageError("analyze emits JSON only")
    system = _checked(_load(args), args)
    _emit(_json(analysis(system, args.predictions)), args)
    return 0


def cmd_simulate(args) -> int:
    system = _checked(_load(args), args)
    if args.mode == "explicit_1d" and system.dimension != 1:
        raise UsageError("--mode explicit_1d needs a 1-dimensional system")
    seed = _seed(system, args)
    result = simulate(system, _config(system, args, seed, args.mode))
    pop = result.population
    meta = {"system": system.name, "seed": seed, "mode": args.mode, "steps": pop.step_index,
            "event_time": pop.event_times[-1]}
    _emit(_population_out(system, pop, args, meta), args)
    return 0


def cmd_semiflow(args) -> int:
    system = _checked(_load(args), args)
    seed = _seed(system, args)
    start = _type(system, args.start_type)
    if not 0.0 < args.start_volume <= 1.0:
        raise UsageError("--start-volume must lie in (0, 1]")
    pop = semiflow_patch(system, start, args.time, make_rngs(seed)[0], args.start_volume)
    meta = {"system": system.name, "seed": seed, "time": args.time}
    _emit(_population_out(system, pop, args, meta), args)
    return 0


def cmd_gaps(args) -> int:
    system = _checked(_load(args), args)
    if system.dimension != 1:
        raise UsageError("gaps needs a 1-dimensional system")
    if not 0.0 <= args.lo < args.hi <= 1.0:
        raise UsageError("need 0 <= --lo < --hi <= 1")
    seed = _seed(system, args)
    tiling = simulate(system, _config(system, args, seed, "explicit_1d")).tiling
    edges = np.linspace(args.lo, args.hi, args.bins + 1)
    _emit(_histogram_out(gap_histogram(tiling, edges, rescale=True), args), args)
    return 0


def cmd_generation(args) -> int:
    system = _checked(_load(args), args)
    if args.generations < 0:
        raise UsageError("--generations must be nonnegative")
    start = _type(system, args.start_type)
    seed = _seed(system, args)
    run = run_generation(system, start, args.generations, make_rngs(seed)[0], args.trials)
    rows = []
    for g in range(args.generations + 1):
        for r, nm in enumerate(system.prototile_names):
            rows.append({
                "generation": g,
                "type": nm,
                "count": run.counts[g][r],
                "volume": float(run.volumes[g, r]),
                "expected_count": run.expected_counts[g][r],
                "expected_volume": float(run.expected_volumes[g, r]),
                "count_stderr": None if run.count_stderr is None else float(run.count_stderr[g, r]),
            })
    if args.format == "json":
        _emit(_json({"system": system.name, "start": system.prototile_names[start], "trials": run.trials,
                     "rows": rows}), args)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fields = list(rows[0])
        w.writerow(fields)
        for row in rows:
            w.writerow(["" if row[f] is None else (repr(row[f]) if isinstance(row[f], float) else row[f])
                        for f in fields])
        _emit(buf.getvalue(), args)
    return 0


def cmd_oracle(args) -> int:
    system = _checked(_load(args), args)
    if not 0.0 <= args.lo < args.hi <= 1.0:
        raise UsageError("need 0 <= --lo < --hi <= 1")
    g = graph.build_graph(system, args.weighting)
    start = _type(system, args.start_type)
    tile_type = None if args.tile_type is None else _type(system, args.tile_type)
    t = args.time * system.dimension
    try:
        count = graph.brute_force_tile_count(g, start, t, args.lo, args.hi, tile_type, args.max_paths)
    except graph.EnumerationBudgetExceeded as exc:
        raise UsageError(f"path budget exceeded: {exc}") from None
    per = graph.perron_data(g)
    predicted = 0.0
    for k, e in enumerate(g.edges):
        if tile_type is not None and e.dst != tile_type:
            continue
        d, h = graph.tile_interval(e.length, args.lo, args.hi)
        if h > d:
            predicted += graph.predicted_walk_sum(g, start, k, d, h, t, per)
    out = {
        "system": system.name,
        "weighting": args.weighting,
        "start": system.prototile_names[start],
        "time": args.time,
        "walk_length": t,
        "count": count,
        "predicted": predicted,
        "ratio": count / predicted if predicted else None,
        "lambda": per.lambda_,
    }
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(out))
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in out.values()])
        _emit(buf.getvalue(), args)
    else:
        _emit(_json(out), args)
    return 0


def cmd_compare(args) -> int:
    system = _checked(_load(args), args)
    seed = args.seed if args.seed is not None else 0
    config = _config(system, args, seed)
    rep = report.frequency_comparison(system, config, args.runs)
    if args.semiflow_time is not None:
        if not 0.0 < args.volume_lo < 1.0:
            raise UsageError("--volume-lo must lie in (0, 1)")
        edges = np.linspace(args.volume_lo, 1.0, args.volume_bins + 1)
        vrep, _, _ = report.volume_histogram_comparison(system, args.semiflow_time, edges, seed, config.start_type)
        rep.extend(vrep)
    if args.gap_bins is not None:
        if system.dimension != 1:
            raise UsageError("gap statistics need a 1-dimensional system")
        if not 0.0 <= args.gap_lo < 1.0:
            raise UsageError("--gap-lo must lie in [0, 1)")
        edges = np.linspace(args.gap_lo, 1.0, args.gap_bins + 1)
        grep, _, _ = report.gap_histogram_comparison(system, config, edges)
        rep.extend(grep)
    _emit(_report_out(rep, args), args)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "semiflow": cmd_semiflow,
    "gaps": cmd_gaps,
    "generation": cmd_generation,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kakutani {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailure as exc:
        print(f"kakutani {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
