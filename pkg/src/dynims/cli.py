"""Command-line entry point: ``dynims run|compare|sweep|chart|replay``.

Exit codes: 0 success, 1 usage or configuration error, 2 run-time failure
(a node failure when ``--strict`` is given, or an unexpected crash).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .control import ConfigError, ControlParams
from .runner import (AXES, compare, comparison_csv, dump_json, run_scenario, sweep, sweep_csv,
                     write_outputs, atomic_write)
from .scenario import PRESETS, ScenarioError, load_scenario
from .telemetry import DecodeError, decode_sample, encode_command, replay

log = logging.getLogger("dynims")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out-dir", default="out", help="directory for output files (default: out)")
    p.add_argument("--tick-ms", type=int, default=None, help="override the simulation tick")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="table output format")
    p.add_argument("--strict", action="store_true", help="exit 2 if any node fails")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynims", description="Feedback-controlled in-memory storage on a simulated HPC cluster.")
    p.add_argument("--version", action="version", version=f"dynims {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario file or preset")
    r.add_argument("scenario", help=f"TOML file or preset name ({', '.join(PRESETS)})")
    _common(r)

    c = sub.add_parser("compare", help="run several scenarios and tabulate speedups")
    c.add_argument("scenarios", nargs="+")
    _common(c)

    s = sub.add_parser("sweep", help="run a scenario across values of one parameter")
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", required=True,
                   help="comma-separated values; dataset sizes in GB")
    s.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")
    s.add_argument("scenario")
    _common(s)

    ch = sub.add_parser("chart", help="render a timeline CSV as a stacked-area SVG")
    ch.add_argument("csv")
    ch.add_argument("-o", "--output", default=None, help="SVG path (default: next to the CSV)")

    rp = sub.add_parser("replay", help="drive the controller from recorded samples")
    rp.add_argument("samples", help="JSON-lines file of memory samples")
    rp.add_argument("--scenario", default=None, help="take controller parameters from this scenario")
    _common(rp)
    return p


def _failures(report) -> bool:
    return bool(report.node_failures)


def cmd_run(a) -> int:
    sc = load_scenario(a.scenario)
    res = run_scenario(sc, a.seed, a.tick_ms)
    out = Path(a.out_dir)
    write_outputs(res, out, a.format)
    rep = res.report
    done = "n/a" if rep.job_completion_ms is None else f"{rep.job_completion_ms / 1000:.2f} s"
    hit = "n/a" if rep.hit_ratio is None else f"{rep.hit_ratio:.3f}"
    print(f"{rep.scenario}: completion {done}, hit ratio {hit}, commands {rep.command_count}, "
          f"failures {len(rep.node_failures)} -> {out}")
    if _failures(rep) and a.strict:
        print(f"node failure on {', '.join(rep.node_failures)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(a) -> int:
    if len(a.scenarios) < 2:
        raise UsageError("compare needs at least two scenarios")
    scs = [load_scenario(s) for s in a.scenarios]
    reports = []
    for sc in scs:
        res = run_scenario(sc, a.seed, a.tick_ms, record_timeline=False)
        reports.append(res.report)
        atomic_write(Path(a.out_dir) / sc.name / "report.json", dump_json(res.report.to_dict()))
    rows, notes = compare(reports, [sc.workload_key() for sc in scs])
    atomic_write(Path(a.out_dir) / "compare.csv", comparison_csv(rows))
    print(f"{'scenario':<24} {'completion_s':>12} {'speedup':>8} {'hit':>6}")
    for r in rows:
        t = "n/a" if r.job_completion_ms is None else f"{r.job_completion_ms / 1000:.2f}"
        sp = "n/a" if r.speedup is None else f"{r.speedup:.2f}"
        hit = "n/a" if r.hit_ratio is None else f"{r.hit_ratio:.3f}"
        print(f"{r.scenario:<24} {t:>12} {sp:>8} {hit:>6}")
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    if a.strict and any(_failures(r) for r in reports):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(a) -> int:
    sc = load_scenario(a.scenario)
    values = [v.strip() for v in a.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is empty")
    res = sweep(sc, a.axis, values, a.seed, a.tick_ms, workers=max(1, a.workers))
    for text, why in res.skipped:
        print(f"skipped {a.axis}={text}: {why}", file=sys.stderr)
    if not res.values:
        raise UsageError("no valid sweep values")
    out = Path(a.out_dir)
    atomic_write(out / f"sweep_{a.axis}.csv", sweep_csv(res))
    atomic_write(out / f"sweep_{a.axis}.json", dump_json({
        "axis": res.axis, "values": res.values, "reports": res.reports,
        "skipped": [{"value": t, "reason": w} for t, w in res.skipped],
    }))
    print(sweep_csv(res), end="")
    if a.strict and any(r["node_failures"] for r in res.reports):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_chart(a) -> int:
    from .chart import ChartError, render_timeline_chart

    try:
        out = render_timeline_chart(a.csv, a.output)
    except FileNotFoundError:
        raise UsageError(f"no such file: {a.csv}") from None
    except ChartError as e:
        raise UsageError(f"{a.csv}: {e}") from None
    print(out)
    return EXIT_OK


def cmd_replay(a) -> int:
    params = ControlParams()
    dead_band, ema = 256 * 1024 * 1024, None
    if a.scenario is not None:
        sc = load_scenario(a.scenario)
        if sc.controller.params is None:
            raise UsageError(f"{a.scenario} has no dynamic controller")
        params, dead_band, ema = sc.controller.params, sc.controller.dead_band, sc.controller.ema_alpha
    samples = []
    try:
        fh = open(a.samples, encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"no such file: {a.samples}") from None
    with fh:
        for i, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                samples.append(decode_sample(line))
            except DecodeError as e:
                raise UsageError(f"{a.samples}:{i}: {e}") from None
    cmds = replay(samples, params, dead_band, ema)
    text = "".join(encode_command(c) + "\n" for c in cmds)
    atomic_write(Path(a.out_dir) / "commands.jsonl", text)
    print(f"{len(samples)} samples, {len(cmds)} commands -> {Path(a.out_dir) / 'commands.jsonl'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "chart": cmd_chart,
            "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(a, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (UsageError, ScenarioError, ConfigError) as e:
        print(f"dynims: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"dynims: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"dynims: run-time failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
