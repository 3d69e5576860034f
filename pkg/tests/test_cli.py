import json
import math

import pytest

from kakutani.cli import build_parser, main
from kakutani.report import frequency_comparison, run_seed, tiles_per_unit_volume
from kakutani.simulate import SimulationConfig, run_kakutani, semiflow_patch
from kakutani.stats import ComparisonReport


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", "examples/sys-a")
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] and rep["incommensurability"] == "likely_incommensurable"


def test_validate_failure_and_csv(capsys):
    code, out, _ = run(capsys, "validate", "sys-reducible", "--format", "csv")
    assert code == 1
    assert "irreducible,False" in out


def test_invalid_config_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "dimension": 1, "prototiles": ["I"], "rules": {"I": [{"tiles": '
                   '[{"type": "I", "volume": 0.3}, {"type": "I", "volume": 0.6}]}]}}')
    code, _, err = run(capsys, "validate", "--config", str(bad))
    assert code == 1
    assert "volumes sum to 0.9 ≠ 1" in err
    bad.write_text("{not json")
    code, _, err = run(capsys, "analyze", str(bad))
    assert code == 1 and "line 1, column 2" in err


def test_tolerance_flag(capsys, tmp_path):
    f = tmp_path / "near.json"
    f.write_text('{"name": "x", "dimension": 1, "prototiles": ["I"], "rules": {"I": [{"tiles": '
                 '[{"type": "I", "volume": 0.3}, {"type": "I", "volume": 0.70001}]}]}}')
    assert run(capsys, "validate", str(f))[0] == 1
    assert run(capsys, "validate", str(f), "--tolerance", "1e-3")[0] == 0


@pytest.mark.parametrize("argv", [
    ["validate"],
    ["validate", "no-such-system"],
    ["validate", "sys-a", "--config", "sys-b"],
    ["simulate", "sys-a", "--steps", "3", "--bogus"],
    ["simulate", "sys-a"],
    ["simulate", "sys-a", "--steps", "3", "--tiles", "5"],
    ["simulate", "sys-c", "--steps", "3"],
    ["semiflow", "sys-c", "--time", "2"],
    ["gaps", "sys-c", "--tiles", "10"],
    ["generation", "sys-c", "--generations", "3"],
    ["gaps", "squares-2d", "--tiles", "10", "--seed", "1"],
    ["simulate", "squares-2d", "--steps", "2", "--mode", "explicit_1d", "--seed", "1"],
    ["compare", "squares-2d", "--tiles", "10", "--gap-bins", "4", "--seed", "1"],
    ["analyze", "sys-a", "--format", "csv"],
    ["simulate", "sys-a", "--steps", "1", "--seed", "-3"],
    ["simulate", "sys-a", "--steps", "1", "--start-type", "nope"],
    ["frobnicate", "sys-a"],
])
def test_usage_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_analyze_sys_b(capsys):
    code, out, _ = run(capsys, "analyze", "examples/sys-b", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["v"] == pytest.approx([0.416667, 0.583333], abs=1e-6)
    assert doc["lambda"]["probability"] == pytest.approx(1.0, abs=1e-12)
    assert doc["lambda"]["probability_times_volume"] == pytest.approx(0.0, abs=1e-12)
    for row in doc["Q"]:
        assert row == pytest.approx([0.632403, 0.885364], abs=1e-6)
    assert doc["S"] == [[1.0, 1.0], [1.0, 1.0]]
    assert doc["incommensurability"] == "likely_incommensurable"
    assert "predictions" not in doc


def test_analyze_predictions(capsys):
    code, out, _ = run(capsys, "analyze", "sys-a", "--predictions")
    assert code == 0
    pred = json.loads(out)["predictions"]
    assert pred["tiles_per_unit_volume"] == pytest.approx(1.637025, abs=1e-6)
    assert pred["density"]["breakpoints"] == [0.3, 0.7, 1.0]
    h = 0.6108643020548935
    coef = [c for row in pred["density"]["coefficients"] for c in row]
    assert coef == pytest.approx([0.3 / h, 1.0 / h], abs=1e-12)
    assert pred["gap_density"]["unit_mass"]["coefficients"] == pytest.approx([0.3, 1.0], abs=1e-12)
    assert pred["gap_density"]["paper"]["integral"] == pytest.approx(1 / h, abs=1e-12)


def test_simulate_population_csv(capsys):
    code, out, _ = run(capsys, "simulate", "sys-a", "--steps", "2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "type,volume,log_volume,count"
    vols = sorted(float(l.split(",")[1]) for l in lines[1:])
    assert vols == pytest.approx([0.21, 0.3, 0.49], abs=1e-15)


def test_simulate_json_and_start_flags(capsys):
    code, out, _ = run(capsys, "simulate", "sys-b", "--time", "2", "--start-type", "blue",
                       "--start-volume", "0.5", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["event_time"] >= 2
    assert math.fsum(r["volume"] * r["count"] for r in doc["rows"]) == pytest.approx(0.5)


@pytest.mark.parametrize("argv", [
    ["simulate", "sys-c", "--tiles", "2000", "--seed", "42"],
    ["simulate", "sys-c", "--tiles", "2000", "--seed", "42", "--mode", "explicit_1d"],
    ["semiflow", "sys-c", "--time", "6", "--seed", "42"],
    ["gaps", "sys-c", "--tiles", "2000", "--seed", "42", "--bins", "10", "--lo", "0.3"],
    ["generation", "sys-c", "--generations", "6", "--seed", "42", "--trials", "8"],
    ["oracle", "sys-c", "--time", "4"],
    ["compare", "sys-c", "--tiles", "2000", "--seed", "42", "--runs", "3", "--semiflow-time", "5",
     "--gap-bins", "8"],
])
def test_outputs_are_byte_identical(tmp_path, capsys, argv):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.stat().st_size > 0


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "sys-c", "--tiles", "2000", "--seed", "1", "--out", str(a)])
    main(["simulate", "sys-c", "--tiles", "2000", "--seed", "2", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_semiflow_command(capsys):
    code, out, _ = run(capsys, "semiflow", "sys-a", "--time", "1")
    assert code == 0
    assert len(out.splitlines()) == 5


def test_gaps_command(capsys):
    code, out, _ = run(capsys, "gaps", "sys-a", "--tiles", "5000", "--bins", "7", "--lo", "0.3")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "bin_lo,bin_hi,count,normalized"
    assert len(lines) == 8
    assert math.fsum(float(l.split(",")[3]) for l in lines[1:]) == pytest.approx(1.0)


def test_generation_command(capsys):
    code, out, _ = run(capsys, "generation", "sys-fixed", "--generations", "40", "--format", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["count"] for r in rows] == [2**k for k in range(41)]
    assert all(r["count"] == r["expected_count"] for r in rows)


def test_oracle_command(capsys):
    code, out, _ = run(capsys, "oracle", "sys-a", "--time", "4")
    assert code == 0
    doc = json.loads(out)
    assert doc["count"] == 89
    assert doc["ratio"] == pytest.approx(1.0, abs=0.05)
    code, out, _ = run(capsys, "oracle", "sys-b", "--time", "3", "--tile-type", "red", "--lo", "0.5",
                       "--format", "csv")
    assert code == 0 and out.startswith("system,weighting")


def test_compare_sys_b_example(capsys):
    code, out, _ = run(capsys, "compare", "examples/sys-b", "--tiles", "1000000", "--seed", "7")
    assert code == 0
    rep = ComparisonReport.from_csv(out)
    assert rep.get("count_fraction", "red").abs_err <= 0.005
    assert {r.statistic for r in rep.rows} == {"count_fraction", "volume_fraction", "tiles_per_unit_volume"}


def test_compare_statistic_names(capsys):
    code, out, _ = run(capsys, "compare", "sys-a", "--tiles", "1000", "--semiflow-time", "6", "--gap-bins", "10",
                       "--format", "json")
    assert code == 0
    rep = ComparisonReport.from_json(out)
    names = [(r.statistic, r.type) for r in rep.rows]
    assert names == [
        ("count_fraction", "I"),
        ("volume_fraction", "I"),
        ("tiles_per_unit_volume", "all"),
        ("volume_histogram_sup", "all"),
        ("gap_histogram_sup", "all"),
        ("gap_density_integral", "unit_mass"),
        ("gap_density_integral", "paper"),
    ]


def test_help_documents_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            if action.option_strings and action.help is None:
                raise AssertionError(f"{name}: {action.option_strings} has no help")


def test_run_seeds():
    assert run_seed(7, 0) == 7
    assert run_seed(2**64 - 1, 1) == 0


def test_tiles_per_unit_volume_matches_semiflow(sys_a):
    # the rescaled Kakutani partition is a semi-flow patch
    pop = run_kakutani(sys_a, SimulationConfig(steps=30))
    patch = semiflow_patch(sys_a, 0, pop.event_times[-1], None)
    assert tiles_per_unit_volume(pop) == pytest.approx(patch.total_count / patch.region_volume(), rel=1e-9)


def test_frequency_comparison_runs(sys_c):
    rep = frequency_comparison(sys_c, SimulationConfig(seed=3, tile_count=2000), runs=5)
    row = rep.get("tiles_per_unit_volume")
    assert row.stderr is not None and row.stderr > 0
    assert row.n >= 5 * 2000
    with pytest.raises(ValueError):
        frequency_comparison(sys_c, SimulationConfig(seed=3, tile_count=10), runs=0)
