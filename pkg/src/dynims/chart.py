"""Stacked-area SVG of a timeline CSV: execution, storage and free memory per node."""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import TIMELINE_COLUMNS  # noqa: E402
from .units import GB  # noqa: E402

SERIES = ("exec_used", "storage_used", "free")


class ChartError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


def read_timeline(path: str | os.PathLike) -> dict[str, dict[str, list[float]]]:
    """Parse a timeline CSV into per-node column lists."""
    nodes: dict[str, dict[str, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ChartError(1, "empty file, header row required")
        missing = [c for c in ("timestamp_ms", "node_id", *SERIES) if c not in header]
        if missing:
            raise ChartError(1, f"header lacks column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in header}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ChartError(line, f"expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[idx["timestamp_ms"]])
                vals = [float(row[idx[c]]) for c in SERIES]
            except ValueError as e:
                raise ChartError(line, f"non-numeric value ({e})") from None
            d = nodes.setdefault(row[idx["node_id"]], {"t": [], **{c: [] for c in SERIES}})
            d["t"].append(t / 1000.0)
            for c, v in zip(SERIES, vals):
                d[c].append(v / GB)
    return nodes


def render_timeline_chart(csv_path: str | os.PathLike, out_path: str | os.PathLike | None = None) -> Path:
    """Write ``<csv>.svg`` (or ``out_path``); identical input gives identical bytes."""
    from .runner import atomic_write

    nodes = read_timeline(csv_path)
    out = Path(out_path) if out_path is not None else Path(csv_path).with_suffix(".svg")
    names = sorted(nodes)
    with plt.rc_context({"svg.hashsalt": "dynims", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(max(len(names), 1), 1, figsize=(9, 2.2 * max(len(names), 1)),
                                 sharex=True, squeeze=False)
        for ax, n in zip(axes[:, 0], names):
            d = nodes[n]
            ax.stackplot(d["t"], *(d[c] for c in SERIES), labels=SERIES)
            ax.set_ylabel(f"{n} (GB)")
        if not names:
            axes[0, 0].set_ylabel("memory (GB)")
        axes[-1, 0].set_xlabel("time (s)")
        if names:
            axes[0, 0].legend(loc="upper right", fontsize="small")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return atomic_write(out, buf.getvalue())


__all__ = ["ChartError", "read_timeline", "render_timeline_chart", "TIMELINE_COLUMNS"]
