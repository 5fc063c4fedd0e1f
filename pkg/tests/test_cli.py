import csv
import json

import pytest

from conftest import SMALL_TOML
from dynims.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


def read_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


FAILING = SMALL_TOML.replace("peak_gb = 10", "peak_gb = 16").replace("ramp_ms = 1000", "ramp_ms = 10")


def test_run_writes_all_outputs(small_toml, tmp_out, capsys):
    assert run_cli("run", small_toml, "--out-dir", tmp_out) == 0
    names = set(read_bytes(tmp_out))
    assert {"timeline.csv", "storage.csv", "iterations.csv", "events.jsonl", "report.json",
            "samples.jsonl"} <= names
    rep = json.loads((tmp_out / "report.json").read_text())
    assert rep["scenario"] == "small" and rep["node_failures"] == []
    with open(tmp_out / "iterations.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4
    assert "completion" in capsys.readouterr().out


def test_run_is_byte_identical(small_toml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", small_toml, "--out-dir", a) == 0
    assert run_cli("run", small_toml, "--out-dir", b) == 0
    assert read_bytes(a) == read_bytes(b)


def test_seed_changes_output(small_toml, tmp_path):
    run_cli("run", small_toml, "--out-dir", tmp_path / "a", "--seed", "1")
    run_cli("run", small_toml, "--out-dir", tmp_path / "b", "--seed", "2")
    assert (tmp_path / "a" / "timeline.csv").read_bytes() != (tmp_path / "b" / "timeline.csv").read_bytes()


def test_jsonl_format(small_toml, tmp_out):
    assert run_cli("run", small_toml, "--out-dir", tmp_out, "--format", "jsonl") == 0
    lines = (tmp_out / "timeline.jsonl").read_text().splitlines()
    first = json.loads(lines[0])
    assert first["node_id"] == "cn0" and "storage_capacity" in first
    assert not (tmp_out / "timeline.csv").exists()


def test_tick_override(small_toml, tmp_out):
    assert run_cli("run", small_toml, "--out-dir", tmp_out, "--tick-ms", "20") == 0
    with open(tmp_out / "timeline.csv") as fh:
        assert next(csv.DictReader(fh))["timestamp_ms"] == "20"


def test_strict_turns_node_failure_into_exit_2(tmp_path):
    p = write(tmp_path, "fail.toml", FAILING)
    assert run_cli("run", p, "--out-dir", tmp_path / "lax") == 0
    assert run_cli("run", p, "--out-dir", tmp_path / "strict", "--strict") == 2
    assert (tmp_path / "strict" / "report.json").exists()


@pytest.mark.parametrize("argv", [
    ("run",),
    ("run", "no-such-preset"),
    ("frobnicate",),
    ("run", "config3-dynims", "--format", "xml"),
    ("sweep", "config3-dynims", "--axis", "gamma", "--values", "1"),
])
def test_usage_errors_exit_1(argv, tmp_out):
    with pytest.raises(SystemExit) as ei:
        code = run_cli(*argv, "--out-dir", tmp_out)
        raise SystemExit(code)
    assert ei.value.code == 1


def test_bad_scenario_field_exit_1(tmp_path, capsys):
    p = write(tmp_path, "bad.toml", SMALL_TOML.replace("lambda = 0.5", "lambda = 0.5\nlamda = 1"))
    assert run_cli("run", p, "--out-dir", tmp_path / "o") == 1
    assert "controller.lamda" in capsys.readouterr().err


def test_compare(small_toml, tmp_path, capsys):
    other = write(tmp_path, "static.toml",
                  SMALL_TOML.replace('name = "small"', 'name = "static"')
                  .replace('mode = "dynamic"', 'mode = "static"\nstatic_capacity_gb = 2'))
    out = tmp_path / "cmp"
    assert run_cli("compare", small_toml, other, "--out-dir", out) == 0
    with open(out / "compare.csv") as fh:
        rows = {r["scenario"]: r for r in csv.DictReader(fh)}
    assert float(rows["static"]["speedup"]) == 1.0
    assert float(rows["small"]["speedup"]) > 1.0
    assert (out / "small" / "report.json").exists()


def test_compare_identical_and_single(small_toml, tmp_path, capsys):
    assert run_cli("compare", small_toml, small_toml, "--out-dir", tmp_path / "o") == 0
    with open(tmp_path / "o" / "compare.csv") as fh:
        assert [float(r["speedup"]) for r in csv.DictReader(fh)] == [1.0, 1.0]
    assert run_cli("compare", small_toml, "--out-dir", tmp_path / "p") == 1


def test_compare_warns_on_different_workloads(small_toml, tmp_path, capsys):
    other = write(tmp_path, "o.toml", SMALL_TOML.replace("dataset_gb = 24", "dataset_gb = 12"))
    with pytest.warns(UserWarning):
        assert run_cli("compare", small_toml, other, "--out-dir", tmp_path / "o") == 0
    assert "warning" in capsys.readouterr().err


def test_sweep_single_value_matches_run(small_toml, tmp_path):
    assert run_cli("sweep", small_toml, "--axis", "lambda", "--values", "0.5", "--out-dir", tmp_path / "s") == 0
    assert run_cli("run", small_toml, "--out-dir", tmp_path / "r") == 0
    doc = json.loads((tmp_path / "s" / "sweep_lambda.json").read_text())
    run_rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert doc["reports"][0] == run_rep


def test_sweep_order_independent_and_skips(small_toml, tmp_path, capsys):
    assert run_cli("sweep", small_toml, "--axis", "lambda", "--values", "1.0,0.25,abc,0.5,3",
                   "--out-dir", tmp_path / "a") == 0
    err = capsys.readouterr().err
    assert "skipped lambda=abc" in err and "skipped lambda=3" in err
    assert run_cli("sweep", small_toml, "--axis", "lambda", "--values", "0.5,1.0,0.25",
                   "--out-dir", tmp_path / "b") == 0
    a = (tmp_path / "a" / "sweep_lambda.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep_lambda.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert "fixed_point" in header and "settling_intervals" in header


def test_sweep_dataset_axis_and_all_invalid(small_toml, tmp_path):
    assert run_cli("sweep", small_toml, "--axis", "dataset_bytes", "--values", "8,16",
                   "--out-dir", tmp_path / "d") == 0
    doc = json.loads((tmp_path / "d" / "sweep_dataset_bytes.json").read_text())
    assert doc["values"] == [8 * 2**30, 16 * 2**30]
    assert run_cli("sweep", small_toml, "--axis", "lambda", "--values", "x,-1",
                   "--out-dir", tmp_path / "e") == 1


def test_sweep_parallel_matches_serial(small_toml, tmp_path):
    run_cli("sweep", small_toml, "--axis", "lambda", "--values", "0.5,1.0", "--out-dir", tmp_path / "a")
    run_cli("sweep", small_toml, "--axis", "lambda", "--values", "0.5,1.0", "--workers", "2",
            "--out-dir", tmp_path / "b")
    assert (tmp_path / "a" / "sweep_lambda.csv").read_bytes() == (tmp_path / "b" / "sweep_lambda.csv").read_bytes()


def test_chart_deterministic(small_toml, tmp_path, capsys):
    run_cli("run", small_toml, "--out-dir", tmp_path / "r")
    tl = tmp_path / "r" / "timeline.csv"
    assert run_cli("chart", tl, "-o", tmp_path / "a.svg") == 0
    assert run_cli("chart", tl, "-o", tmp_path / "b.svg") == 0
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    assert a.startswith(b"<?xml") and b"cn0" in a


def test_chart_empty_timeline(small_toml, tmp_path):
    run_cli("run", small_toml, "--out-dir", tmp_path / "r")
    header = (tmp_path / "r" / "timeline.csv").read_text().splitlines()[0]
    empty = write(tmp_path, "empty.csv", header + "\n")
    assert run_cli("chart", empty, "-o", tmp_path / "e.svg") == 0
    assert (tmp_path / "e.svg").read_bytes().startswith(b"<?xml")


def test_chart_malformed_line_reported(small_toml, tmp_path, capsys):
    run_cli("run", small_toml, "--out-dir", tmp_path / "r")
    lines = (tmp_path / "r" / "timeline.csv").read_text().splitlines()
    lines[3] = lines[3].rsplit(",", 1)[0]
    bad = write(tmp_path, "bad.csv", "\n".join(lines) + "\n")
    assert run_cli("chart", bad, "-o", tmp_path / "x.svg") == 1
    assert "line 4" in capsys.readouterr().err
    assert not (tmp_path / "x.svg").exists()
    assert run_cli("chart", tmp_path / "missing.csv") == 1


def test_replay_reproduces_simulator_commands(small_toml, tmp_path):
    run_cli("run", small_toml, "--out-dir", tmp_path / "r")
    assert run_cli("replay", tmp_path / "r" / "samples.jsonl", "--scenario", small_toml,
                   "--out-dir", tmp_path / "p") == 0
    replayed = [json.loads(x) for x in (tmp_path / "p" / "commands.jsonl").read_text().splitlines()]
    events = [json.loads(x) for x in (tmp_path / "r" / "events.jsonl").read_text().splitlines()]
    issued = [e for e in events if e["kind"] == "capacity"]
    assert len(replayed) == len(issued) > 0
    assert [(c["issued_at_ms"], c["host"], c["target_capacity"]) for c in replayed] == \
        [(e["t"], e["node"], e["target"]) for e in issued]


def test_replay_bad_line_names_location(tmp_path, capsys):
    p = write(tmp_path, "s.jsonl", '{"host": "a"}\n')
    assert run_cli("replay", p, "--out-dir", tmp_path / "o") == 1
    assert "s.jsonl:1" in capsys.readouterr().err


def test_outputs_left_whole_when_rerun(small_toml, tmp_out):
    run_cli("run", small_toml, "--out-dir", tmp_out)
    run_cli("run", small_toml, "--out-dir", tmp_out)
    assert not [p for p in tmp_out.iterdir() if p.name.startswith(".")]
