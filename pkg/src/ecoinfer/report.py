"""estimates.csv and static SVG charts for any estimator or analysis result."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analyses import AgeCurves
from .errors import IoFailure, ValidationError
from .estimators import PosteriorSummary
from .model import CellProbabilityMatrix

CSV_HEADER = ("row_label", "col_label", "mean", "sd", "ci_lo", "ci_hi")
FORMATS = ("csv", "svg")


@dataclass(frozen=True)
class EstimateTable:
    """Flattened result: mean is always set, sd and interval only for posterior summaries."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray | None = None
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    x: np.ndarray | None = None   # chart abscissa per row (bracket midpoints for age curves)


def as_table(result) -> EstimateTable | None:
    if result is None:
        return None
    if isinstance(result, AgeCurves):
        table = as_table(result.result)
        return EstimateTable(table.row_labels, table.col_labels, table.mean, table.sd,
                             table.ci_lo, table.ci_hi, x=np.asarray(result.midpoints, float))
    if isinstance(result, PosteriorSummary):
        m = result.mean
        return EstimateTable(m.row_labels, m.col_labels, np.asarray(m.beta), result.sd,
                             result.ci_lo, result.ci_hi)
    if isinstance(result, CellProbabilityMatrix):
        return EstimateTable(result.row_labels, result.col_labels, np.asarray(result.beta))
    raise ValidationError(f"cannot report a {type(result).__name__}")


def _num(v) -> str:
    return repr(float(v))


def estimates_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    table = as_table(result)
    if table is not None:
        for g, row in enumerate(table.row_labels):
            for p, col in enumerate(table.col_labels):
                extra = ["", "", ""]
                if table.sd is not None:
                    extra = [_num(table.sd[g, p]), _num(table.ci_lo[g, p]), _num(table.ci_hi[g, p])]
                w.writerow([row, col, _num(table.mean[g, p]), *extra])
    return buf.getvalue()


def read_estimates_csv(path) -> EstimateTable | None:
    """Parse an estimates.csv back into arrays; inverse of the writer."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    row_labels = tuple(dict.fromkeys(r["row_label"] for r in rows))
    col_labels = tuple(dict.fromkeys(r["col_label"] for r in rows))
    shape = (len(row_labels), len(col_labels))
    out = {k: np.full(shape, np.nan) for k in ("mean", "sd", "ci_lo", "ci_hi")}
    for r in rows:
        g, p = row_labels.index(r["row_label"]), col_labels.index(r["col_label"])
        for k in out:
            if r[k] != "":
                out[k][g, p] = float(r[k])
    has_sd = any(r["sd"] != "" for r in rows)
    return EstimateTable(row_labels, col_labels, out["mean"],
                         out["sd"] if has_sd else None,
                         out["ci_lo"] if has_sd else None,
                         out["ci_hi"] if has_sd else None)


def _slug(label: str) -> str:
    s = re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_")
    return s or "option"


_W, _H, _PAD = 480, 320, 48


def option_svg(table: EstimateTable, p: int) -> str:
    """Line chart of one column across rows, with a shaded +-1 sd band when available."""
    R = len(table.row_labels)
    xs = table.x if table.x is not None else np.arange(R, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    span = (x1 - x0) or 1.0

    def px(x):
        return _PAD + (float(x) - x0) / span * (_W - 2 * _PAD) if R > 1 else _W / 2

    def py(y):
        return _H - _PAD - float(np.clip(y, 0.0, 1.0)) * (_H - 2 * _PAD)

    mean = table.mean[:, p]
    title = f"P({table.col_labels[p]} | row)"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<title>{_escape(title)}</title>',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(f'<text x="{_PAD - 6}" y="{py(tick) + 4:.2f}" font-size="10" '
                   f'text-anchor="end">{tick:.2f}</text>')
    for g, label in enumerate(table.row_labels):
        out.append(f'<text x="{px(xs[g]):.2f}" y="{_H - _PAD + 14}" font-size="9" '
                   f'text-anchor="middle">{_escape(label)}</text>')
    if table.sd is not None:
        upper = [(px(xs[g]), py(mean[g] + table.sd[g, p])) for g in range(R)]
        lower = [(px(xs[g]), py(mean[g] - table.sd[g, p])) for g in reversed(range(R))]
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower)
        out.append(f'<polygon points="{pts}" fill="steelblue" fill-opacity="0.25" stroke="none"/>')
    pts = " ".join(f"{px(xs[g]):.2f},{py(mean[g]):.2f}" for g in range(R))
    out.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for g in range(R):
        out.append(f'<circle cx="{px(xs[g]):.2f}" cy="{py(mean[g]):.2f}" r="2.5" fill="steelblue"/>')
    out.append(f'<text x="{_W / 2}" y="{_PAD / 2}" font-size="13" '
               f'text-anchor="middle">{_escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def report_emit(results, out_dir, formats: Sequence[str] = FORMATS) -> list[Path]:
    """Write estimates.csv and, for ``svg``, one chart per option under ``plots/``.

    ``results`` may be None or an empty sequence (header-only CSV, no charts).
    Output bytes depend only on the inputs.
    """
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValidationError(f"unknown report format(s): {sorted(unknown)}")
    if isinstance(results, (list, tuple)):
        if len(results) > 1:
            raise ValidationError("report_emit takes a single result")
        results = results[0] if results else None
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / "estimates.csv"
            path.write_bytes(estimates_csv(results).encode("utf-8"))
            written.append(path)
        table = as_table(results)
        if "svg" in formats and table is not None:
            plots = out / "plots"
            plots.mkdir(exist_ok=True)
            used = set()
            for p, label in enumerate(table.col_labels):
                name = _slug(label)
                while name in used:
                    name += "_"
                used.add(name)
                path = plots / f"{name}.svg"
                path.write_bytes(option_svg(table, p).encode("utf-8"))
                written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return written
