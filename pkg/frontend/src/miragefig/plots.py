"""CSV-to-figure rendering.

Three figure kinds, keyed to the producer's CSV contracts:

``spectra``   columns ``series,grid,power``; one panel per file, one line
              per series, a hollow marker on each series' argmax row.
``curves``    columns ``sweep,axis_value,method,metric,value,n_valid,
              n_trials``; one panel per metric, one line per method,
              logarithmic y by default.
``heatmap``   columns ``x_m,y_m,rate_bps``; cell map over the scanned
              sector with base-station and optional UE markers.

Rendering is read-only over the inputs and deterministic for fixed
package versions: fixed figure geometry, fixed DPI, no timestamps or
environment-dependent text. Nothing numerical is computed here beyond
locating argmax rows and relabeling axes; every plotted value comes
verbatim from a CSV cell. Schema violations raise ``SchemaError``
naming the file and the offending column.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

SPECTRUM_COLUMNS = ("series", "grid", "power")
SUMMARY_COLUMNS = ("sweep", "axis_value", "method", "metric", "value", "n_valid", "n_trials")
HEATMAP_COLUMNS = ("x_m", "y_m", "rate_bps")
KINDS = ("spectra", "curves", "heatmap")

# Sweep-name to axis-label table; unknown sweeps fall back to the raw name.
AXIS_LABELS = {
    "p_t_dbm": "transmit power [dBm]",
    "sigma_ue_m": "UE location uncertainty [m]",
}


class SchemaError(ValueError):
    """A CSV file does not match its documented contract."""


def read_table(path, columns) -> list:
    """Load a CSV as dict rows, insisting on the given header columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected columns {', '.join(columns)}")
        for col in columns:
            if col not in reader.fieldnames:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def column_floats(rows, path, col) -> np.ndarray:
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        try:
            out[i] = float(row[col])
        except (TypeError, ValueError):
            raise SchemaError(
                f"{path}: column {col!r} has non-numeric value {row[col]!r} in data row {i + 1}"
            ) from None
    return out


@dataclass(frozen=True)
class PlotSpec:
    """Everything ``render`` needs: inputs, kind, presentation switches.

    ``log_y=None`` means the kind's default (curves logarithmic, the
    rest linear). ``metrics`` restricts a curves figure to a subset of
    the metric column; empty draws every metric in the file. ``ue_xy``
    adds a UE marker to heatmaps; the producer's cell grid has no UE
    column, so the position must be supplied by the caller.
    """

    kind: str
    csv_paths: tuple
    out_path: str
    title: str | None = None
    x_label: str | None = None
    y_label: str | None = None
    log_y: bool | None = None
    reference_lines: tuple = ()
    metrics: tuple = ()
    bs_xy: tuple = (0.0, 0.0)
    ue_xy: tuple | None = None
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        paths = tuple(str(p) for p in (
            (self.csv_paths,) if isinstance(self.csv_paths, (str, os.PathLike)) else self.csv_paths
        ))
        if not paths:
            raise SchemaError("at least one CSV path is required")
        for p in paths:
            if not os.path.isfile(p):
                raise SchemaError(f"{p}: no such file")
        if self.kind in ("curves", "heatmap") and len(paths) != 1:
            raise SchemaError(f"{self.kind} takes exactly one CSV, got {len(paths)}")
        if self.dpi <= 0:
            raise SchemaError("dpi must be positive")
        object.__setattr__(self, "csv_paths", paths)
        object.__setattr__(self, "reference_lines", tuple(float(v) for v in self.reference_lines))
        object.__setattr__(self, "metrics", tuple(str(m) for m in self.metrics))
        object.__setattr__(self, "bs_xy", (float(self.bs_xy[0]), float(self.bs_xy[1])))
        if self.ue_xy is not None:
            object.__setattr__(self, "ue_xy", (float(self.ue_xy[0]), float(self.ue_xy[1])))


def _first_appearance(rows, col) -> list:
    seen = []
    for row in rows:
        if row[col] not in seen:
            seen.append(row[col])
    return seen


def series_peaks(rows, path) -> dict:
    """Argmax (grid, power) row per series, keyed in order of appearance.

    The marker the spectra panels draw is exactly this row; tests and
    consumers can recompute it from the CSV alone.
    """
    grid = column_floats(rows, path, "grid")
    power = column_floats(rows, path, "power")
    peaks = {}
    for name in _first_appearance(rows, "series"):
        idx = np.array([i for i, r in enumerate(rows) if r["series"] == name])
        j = idx[int(np.argmax(power[idx]))]
        peaks[name] = (float(grid[j]), float(power[j]))
    return peaks


def _spectra_figure(spec: PlotSpec) -> Figure:
    n = len(spec.csv_paths)
    fig = Figure(figsize=(6.4, 2.8 * n))
    axes = fig.subplots(n, 1, squeeze=False)[:, 0]
    for ax, path in zip(axes, spec.csv_paths):
        rows = read_table(path, SPECTRUM_COLUMNS)
        grid = column_floats(rows, path, "grid")
        power = column_floats(rows, path, "power")
        peaks = series_peaks(rows, path)
        for name in peaks:
            idx = np.array([i for i, r in enumerate(rows) if r["series"] == name])
            (line,) = ax.plot(grid[idx], power[idx], label=name, linewidth=1.2)
            ax.plot(
                [peaks[name][0]], [peaks[name][1]],
                marker="v", linestyle="none", markersize=8,
                markerfacecolor="none", color=line.get_color(),
            )
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_title(Path(path).stem, fontsize=10)
        ax.set_xlabel(spec.x_label or "grid")
        ax.set_ylabel(spec.y_label or "power")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    if spec.title:
        fig.suptitle(spec.title)
    fig.subplots_adjust(hspace=0.55)
    return fig


def _curves_figure(spec: PlotSpec) -> Figure:
    path = spec.csv_paths[0]
    rows = read_table(path, SUMMARY_COLUMNS)
    available = _first_appearance(rows, "metric")
    chosen = list(spec.metrics) if spec.metrics else available
    for m in chosen:
        if m not in available:
            raise SchemaError(
                f"{path}: metric {m!r} not in file (has: {', '.join(available)})"
            )
    sweep_name = rows[0]["sweep"]

    fig = Figure(figsize=(6.4, 3.2 * len(chosen)))
    axes = fig.subplots(len(chosen), 1, squeeze=False)[:, 0]
    for ax, metric in zip(axes, chosen):
        sub = [r for r in rows if r["metric"] == metric]
        for method in _first_appearance(sub, "method"):
            own = [r for r in sub if r["method"] == method]
            ax.plot(
                column_floats(own, path, "axis_value"),
                column_floats(own, path, "value"),
                marker="o", markersize=4, linewidth=1.2, label=method,
            )
        for ref in spec.reference_lines:
            ax.axhline(ref, linestyle="--", linewidth=1.0, color="0.4", label=f"{ref:g}")
        if spec.log_y is None or spec.log_y:
            ax.set_yscale("log")
        ax.set_ylabel(spec.y_label or metric)
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
    axes[-1].set_xlabel(spec.x_label or AXIS_LABELS.get(sweep_name, sweep_name))
    if spec.title:
        fig.suptitle(spec.title)
    fig.subplots_adjust(hspace=0.4)
    return fig


def _heatmap_figure(spec: PlotSpec) -> Figure:
    path = spec.csv_paths[0]
    rows = read_table(path, HEATMAP_COLUMNS)
    xs = column_floats(rows, path, "x_m")
    ys = column_floats(rows, path, "y_m")
    rate = column_floats(rows, path, "rate_bps")
    ux, uy = np.unique(xs), np.unique(ys)
    cells = np.full((uy.size, ux.size), np.nan)
    cells[np.searchsorted(uy, ys), np.searchsorted(ux, xs)] = rate

    fig = Figure(figsize=(6.8, 5.6))
    ax = fig.subplots()
    mesh = ax.pcolormesh(ux, uy, np.ma.masked_invalid(cells), shading="nearest")
    fig.colorbar(mesh, ax=ax, label=spec.y_label or "rate [bit/s]")
    ax.plot(*spec.bs_xy, marker="^", color="black", markersize=10, linestyle="none", label="BS")
    if spec.ue_xy is not None:
        ax.plot(*spec.ue_xy, marker="*", color="red", markersize=12, linestyle="none", label="UE")
    ax.set_aspect("equal")
    ax.set_xlabel(spec.x_label or "x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper left", fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    return fig


_BUILDERS = {
    "spectra": _spectra_figure,
    "curves": _curves_figure,
    "heatmap": _heatmap_figure,
}


def build_figure(spec: PlotSpec) -> Figure:
    """Assemble the figure object without touching the filesystem output."""
    return _BUILDERS[spec.kind](spec)


def render(spec: PlotSpec) -> Path:
    """Build and save the PNG; returns the output path."""
    fig = build_figure(spec)
    out = Path(spec.out_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi, format="png")
    return out
