"""Render WASR experiment CSVs to PNG figures.

Input files follow the batch-CLI schema

    experiment,scheme,seed,var,value,iteration,wasr,wall_ms

with converged summary rows at iteration = -1 and seed-averaged sweep rows at
seed = -1.  Four figure kinds are supported: a per-iteration convergence trace
and three converged-WASR sweeps (transmit power, users, sub-arrays).  Each
figure carries one line per scheme.  Rendering is pure with respect to the CSV
bytes: identical input gives identical plotted series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

EXPECTED_HEADER = ["experiment", "scheme", "seed", "var", "value", "iteration", "wasr", "wall_ms"]

FIGURE_KINDS = {
    "convergence": ("iteration", "WASR (bits/s/Hz)"),
    "power-sweep": ("maximum transmit power (dB)", "converged WASR (bits/s/Hz)"),
    "user-sweep": ("number of users", "converged WASR (bits/s/Hz)"),
    "subarray-sweep": ("number of RIS sub-arrays", "converged WASR (bits/s/Hz)"),
}


class CsvFormatError(ValueError):
    """Input CSV does not follow the experiment schema; names the bad row."""


class EmptyInputError(ValueError):
    """Input CSV has no usable data rows."""


@dataclass
class FigureSpec:
    csv_path: str
    kind: str
    out_path: str
    xlabel: str | None = None
    ylabel: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise CsvFormatError(f"unknown figure kind {self.kind!r}; choose from {sorted(FIGURE_KINDS)}")

    def labels(self):
        default_x, default_y = FIGURE_KINDS[self.kind]
        return self.xlabel or default_x, self.ylabel or default_y


def _read_rows(csv_path):
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{csv_path}: file is empty") from None
        if header != EXPECTED_HEADER:
            raise CsvFormatError(f"{csv_path}: row 1: expected header {EXPECTED_HEADER}, got {header}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(EXPECTED_HEADER):
                raise CsvFormatError(f"{csv_path}: row {lineno}: expected {len(EXPECTED_HEADER)} fields, got {len(raw)}")
            try:
                rows.append(
                    dict(
                        scheme=raw[1],
                        seed=int(raw[2]),
                        value=float(raw[4]),
                        iteration=int(raw[5]),
                        wasr=float(raw[6]),
                    )
                )
            except ValueError as exc:
                raise CsvFormatError(f"{csv_path}: row {lineno}: {exc}") from None
    if not rows:
        raise EmptyInputError(f"{csv_path}: no data rows")
    return rows


def load_series(csv_path, kind):
    """Plot-ready series per scheme: {scheme: (x, y)} with x ascending.

    Convergence figures average the per-iteration WASR across seeds; sweep
    figures use the seed-averaged rows when present and otherwise average the
    converged rows per (scheme, value).
    """
    rows = _read_rows(csv_path)
    series = {}
    if kind == "convergence":
        per_point = {}
        for row in rows:
            if row["iteration"] < 0:
                continue
            per_point.setdefault(row["scheme"], {}).setdefault(row["iteration"], []).append(row["wasr"])
        for scheme, traces in per_point.items():
            xs = sorted(traces)
            series[scheme] = (xs, [sum(traces[x]) / len(traces[x]) for x in xs])
    else:
        averaged = [r for r in rows if r["seed"] == -1]
        pool = averaged if averaged else [r for r in rows if r["iteration"] == -1]
        per_point = {}
        for row in pool:
            per_point.setdefault(row["scheme"], {}).setdefault(row["value"], []).append(row["wasr"])
        for scheme, points in per_point.items():
            xs = sorted(points)
            series[scheme] = (xs, [sum(points[x]) / len(points[x]) for x in xs])
    if not series:
        raise EmptyInputError(f"{csv_path}: no rows usable for a {kind} figure")
    return series


_MARKERS = ["o", "s", "^", "d", "v", "*"]


def render(spec: FigureSpec) -> str:
    """Render one figure to spec.out_path; returns the output path.

    All validation happens before the output file is opened, so a bad input
    never leaves a partial image behind.
    """
    series = load_series(spec.csv_path, spec.kind)
    xlabel, ylabel = spec.labels()
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for idx, scheme in enumerate(sorted(series)):
        xs, ys = series[scheme]
        ax.plot(xs, ys, marker=_MARKERS[idx % len(_MARKERS)], markersize=4, label=scheme)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return spec.out_path
