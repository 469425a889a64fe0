"""Summaries of sweep CSVs: per-grid-value means and spreads of every metric."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sweeps import format_cell

FIXED_COLUMNS = ("axis_value", "repetition", "status", "error")


@dataclass
class Summary:
    name: str
    metrics: list[str]
    rows: list[dict] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        cols = ["axis_value", "n_ok", "n_failed"]
        for m in self.metrics:
            cols += [f"{m}_mean", f"{m}_std"]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([format_cell(row.get(h)) for h in self.header])
        return buf.getvalue()

    def to_text(self, precision: int = 4) -> str:
        """Fixed-width table with one line per grid value."""

        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, float):
                return f"{v:.{precision}g}"
            return str(v)

        header = self.header
        cells = [[fmt(r.get(h)) for h in header] for r in self.rows]
        widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(header)]
        lines = [self.name, "  ".join(h.rjust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
        return "\n".join(lines) + "\n"


def _number(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return None


def summarize_csv(text: str, name: str = "sweep") -> Summary:
    """Group rows by grid value (first-appearance order) and average each metric over successful rows.

    Non-numeric or empty cells are skipped; a metric with no numeric values
    at a grid value is reported empty.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not set(FIXED_COLUMNS) <= set(reader.fieldnames):
        raise ValueError(f"{name}: not a sweep CSV (need columns {', '.join(FIXED_COLUMNS)})")
    metrics = [c for c in reader.fieldnames if c not in FIXED_COLUMNS]
    groups: dict[str, list[dict]] = {}
    for row in reader:
        groups.setdefault(row["axis_value"], []).append(row)
    summary = Summary(name, metrics)
    for value, rows in groups.items():
        ok = [r for r in rows if r["status"] == "ok"]
        out = {"axis_value": value, "n_ok": len(ok), "n_failed": len(rows) - len(ok)}
        for m in metrics:
            xs = [x for x in (_number(r[m]) for r in ok) if x is not None and math.isfinite(x)]
            out[f"{m}_mean"] = float(np.mean(xs)) if xs else None
            out[f"{m}_std"] = float(np.std(xs)) if xs else None
        summary.rows.append(out)
    return summary


def summarize_file(path) -> Summary:
    p = Path(path)
    return summarize_csv(p.read_text(encoding="utf-8"), p.stem)


def write_summary(summary: Summary, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{summary.name}_summary.csv"
    path.write_bytes(summary.to_csv().encode("utf-8"))
    return path


__all__ = ["Summary", "summarize_csv", "summarize_file", "write_summary"]
