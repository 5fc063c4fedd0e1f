"""Running scenarios and writing their outputs; compare and sweep helpers."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .control import ControlParams, StabilitySummary, stability_sweep
from .scenario import Scenario
from .sim import STORAGE_COLUMNS, TIMELINE_COLUMNS, RunReport, RunResult, Simulation
from .telemetry import encode_sample
from .units import GB

log = logging.getLogger(__name__)

AXES = ("lambda", "dataset_bytes")


def atomic_write(path: str | os.PathLike, data: str | bytes) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def rows_to_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def rows_to_jsonl(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = []
    for row in rows:
        out.append(json.dumps({c: (round(v, 9) if isinstance(v, float) else v) for c, v in zip(columns, row)},
                              separators=(",", ":")))
    return "".join(line + "\n" for line in out)


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run_scenario(scenario: Scenario, seed: int | None = None, tick_ms: int | None = None,
                 record_timeline: bool = True) -> RunResult:
    sc = scenario
    if seed is not None:
        sc = replace(sc, seed=seed)
    if tick_ms is not None:
        sc = replace(sc, tick_ms=tick_ms)
    return Simulation(sc, record_timeline=record_timeline).run()


def write_outputs(result: RunResult, out_dir: str | os.PathLike, fmt: str = "csv") -> dict[str, Path]:
    """timeline, storage, iterations, events and report files for one run."""
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    sim = result.sim
    enc = rows_to_csv if fmt == "csv" else rows_to_jsonl
    it_cols = ("index", "start_ms", "duration_ms", "local", "remote_cache", "remote_disk", "aborted")
    it_rows = [(r.index, r.start_ms, r.duration_ms, r.per_tier_access_counts["local"],
                r.per_tier_access_counts["remote_cache"], r.per_tier_access_counts["remote_disk"],
                int(r.aborted)) for r in result.iterations]
    paths = {
        "timeline": atomic_write(out / f"timeline.{fmt}", enc(TIMELINE_COLUMNS, sim.timeline)),
        "storage": atomic_write(out / f"storage.{fmt}", enc(STORAGE_COLUMNS, sim.storage_rows)),
        "iterations": atomic_write(out / f"iterations.{fmt}", enc(it_cols, it_rows)),
        "events": atomic_write(out / "events.jsonl",
                               "".join(json.dumps(e, sort_keys=True) + "\n" for e in sim.events)),
        "report": atomic_write(out / "report.json", dump_json(result.report.to_dict())),
    }
    if sim.samples:
        paths["samples"] = atomic_write(out / "samples.jsonl",
                                        "".join(encode_sample(x) + "\n" for x in sim.samples))
    return paths


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    job_completion_ms: float | None
    speedup: float | None
    hit_ratio: float | None


def compare(reports: Sequence[RunReport], workloads: Sequence[tuple] | None = None
            ) -> tuple[list[ComparisonRow], list[str]]:
    """Speedups relative to the slowest completed run, plus warning notes."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two run reports")
    notes = []
    if workloads is not None and len(set(workloads)) > 1:
        notes.append("workloads differ between scenarios; speedups are not like-for-like")
        warnings.warn(notes[-1], stacklevel=2)
    done = [r.job_completion_ms for r in reports if r.job_completion_ms]
    slowest = max(done) if done else None
    rows = []
    for r in reports:
        if r.job_completion_ms is None:
            notes.append(f"{r.scenario}: job did not complete")
        sp = slowest / r.job_completion_ms if (slowest and r.job_completion_ms) else None
        rows.append(ComparisonRow(r.scenario, r.job_completion_ms, sp, r.hit_ratio))
    return rows, notes


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    return rows_to_csv(("scenario", "job_completion_ms", "speedup", "hit_ratio"),
                       [(r.scenario, r.job_completion_ms, r.speedup, r.hit_ratio) for r in rows])


def parse_axis_value(axis: str, text: str) -> float | int:
    """Parse one sweep value; dataset sizes are given in GB."""
    if axis == "lambda":
        v = float(text)
        if not 0 < v <= 2:
            raise ValueError(f"lambda {v} outside (0, 2]")
        return v
    if axis == "dataset_bytes":
        v = float(text)
        if v <= 0:
            raise ValueError(f"dataset size {v} GB must be > 0")
        return int(v * GB)
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def _apply(scenario: Scenario, axis: str, value) -> Scenario:
    return scenario.with_lambda(value) if axis == "lambda" else scenario.with_dataset(value)


def _sweep_one(args) -> dict:
    scenario, axis, value, seed, tick = args
    rep = run_scenario(_apply(scenario, axis, value), seed, tick, record_timeline=False).report
    return rep.to_dict()


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list[dict]
    skipped: list[tuple[str, str]]
    stability: list[StabilitySummary]


def sweep(scenario: Scenario, axis: str, raw_values: Sequence[str], seed: int | None = None,
          tick_ms: int | None = None, workers: int = 1) -> SweepResult:
    """One run per axis value with a shared seed; bad values are skipped and recorded."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    if not raw_values:
        raise ValueError("sweep needs at least one value")
    values, skipped = [], []
    for text in raw_values:
        try:
            v = parse_axis_value(axis, str(text))
            _apply(scenario, axis, v).validate()
        except ValueError as e:
            skipped.append((str(text), str(e)))
            log.warning("skipping %s=%s: %s", axis, text, e)
            continue
        if v not in values:
            values.append(v)
    values.sort()
    jobs = [(scenario, axis, v, seed, tick_ms) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(_sweep_one, jobs))
    else:
        reports = [_sweep_one(j) for j in jobs]
    stab: list[StabilitySummary] = []
    p = scenario.controller.params
    if axis == "lambda" and values and p is not None:
        stab = stability_sweep(p, values, _steady_exec(scenario, p))
    return SweepResult(axis, values, reports, skipped, stab)


def _steady_exec(scenario: Scenario, p: ControlParams) -> int:
    """Non-storage demand of the first node at burst peak, for the analytic summary."""
    exec_d = scenario.analytics.exec_memory if scenario.analytics is not None else 0
    if scenario.hpc_profile is not None:
        exec_d += scenario.hpc_profile.peak
    node = scenario.compute_nodes[0]
    return exec_d + node.reserved


def sweep_csv(res: SweepResult) -> str:
    stab = {s.lam: s for s in res.stability}
    cols = ["axis_value", "job_completion_ms", "hit_ratio", "command_count", "aborted"]
    if res.axis == "lambda":
        cols += ["fixed_point", "settling_intervals", "max_overshoot", "monotone"]
    rows = []
    for v, rep in zip(res.values, res.reports):
        row = [v, rep["job_completion_ms"], rep["hit_ratio"], rep["command_count"], int(rep["aborted"])]
        if res.axis == "lambda":
            s = stab[v]
            row += [s.fixed_point, "" if s.settling_intervals is None else s.settling_intervals,
                    s.max_overshoot, int(s.monotone)]
        rows.append(row)
    return rows_to_csv(cols, rows)
