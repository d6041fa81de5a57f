"""Renderers for the estimation harness CSV outputs.

Two figures: the (sigma, N) phase-transition heatmap with reference overlay
lines, and a log-log curve of one CSV column against another. Both renderers
are deterministic: fixed style, fixed hash salt, no timestamps, so a given
input produces byte-identical image files.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GRID_COLUMNS = ("sigma", "n", "mean_rel_error")

# Style pinned for byte-determinism of the output files.
_RC = {
    "svg.hashsalt": "cloudplots",
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.family": "DejaVu Sans",
}

_FORMATS = (".png", ".svg")


class DataError(ValueError):
    """The input table violates the renderer's contract."""


def _save(fig, out_path: str) -> None:
    """Write the figure without any run-dependent bytes."""
    ext = os.path.splitext(out_path)[1].lower()
    if ext == ".png":
        fig.savefig(out_path, metadata={"Software": "cloudplots"})
    elif ext == ".svg":
        fig.savefig(out_path, metadata={"Date": None})
    else:
        raise DataError(
            f"unsupported output format {ext!r} (supported: png, svg)")


# --------------------------------------------------------------------------- #
# Grid CSV
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GridTable:
    """A complete rectangular (sigma, n) grid of mean relative errors.

    ``values[i, j]`` is the cell at ``sigmas[i]``, ``ns[j]``; both axes are
    ascending.
    """

    sigmas: np.ndarray
    ns: np.ndarray
    values: np.ndarray


def _read_rows(path, required) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [name for name in required if name not in header]
        if missing:
            raise DataError(
                f"{path}: missing column(s) {', '.join(missing)} "
                f"(header has: {', '.join(header)})")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def read_grid_csv(path) -> GridTable:
    """Parse a sweep grid CSV and validate completeness.

    Every (sigma, n) pair from the cross product of the observed axis values
    must appear exactly once, and every cell value must lie in [0, 1]; the
    error for an incomplete grid lists the missing cells.
    """
    cells: dict[tuple[float, int], float] = {}
    for row in _read_rows(path, GRID_COLUMNS):
        try:
            key = (float(row["sigma"]), int(row["n"]))
            value = float(row["mean_rel_error"])
        except ValueError as exc:
            raise DataError(f"{path}: unparseable row {row}") from exc
        if key in cells:
            raise DataError(f"{path}: duplicate cell sigma={key[0]}, n={key[1]}")
        cells[key] = value

    sigmas = np.array(sorted({s for s, _ in cells}))
    ns = np.array(sorted({n for _, n in cells}))
    missing = [(s, n) for s in sigmas for n in ns if (float(s), int(n)) not in cells]
    if missing:
        listed = ", ".join(f"(sigma={s:g}, n={n})" for s, n in missing[:20])
        suffix = "" if len(missing) <= 20 else f", and {len(missing) - 20} more"
        raise DataError(
            f"{path}: incomplete grid, {len(missing)} of "
            f"{len(sigmas) * len(ns)} cells missing: {listed}{suffix}")

    values = np.array([[cells[(float(s), int(n))] for n in ns] for s in sigmas])
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite cell values")
    if values.min() < 0.0 or values.max() > 1.0:
        raise DataError(
            f"{path}: cell values must lie in [0, 1], got range "
            f"[{values.min():g}, {values.max():g}]")
    return GridTable(sigmas=sigmas, ns=ns, values=values)


def _log_edges(centers: np.ndarray) -> np.ndarray:
    """Cell edges for log-spaced centers: geometric midpoints, with the outer
    edges extrapolated by the neighboring ratio."""
    c = np.asarray(centers, dtype=float)
    if len(c) == 1:
        return np.array([c[0] / math.sqrt(2.0), c[0] * math.sqrt(2.0)])
    inner = np.sqrt(c[:-1] * c[1:])
    first = c[0] * c[0] / inner[0]
    last = c[-1] * c[-1] / inner[-1]
    return np.concatenate([[first], inner, [last]])


# --------------------------------------------------------------------------- #
# Heatmap
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class HeatmapSpec:
    """What to draw: the grid CSV, the output image, and the overlays.

    The red overlay is the curve sigma(N) on which an oracle that knows all
    rotations would reach the target relative MSE: sigma^2 d k / N = target,
    a line of slope 1/2 in log-log. The optional blue overlay is
    sigma = blue_intercept * N^{1/4}, the high-noise sample-complexity slope;
    its intercept is always caller-chosen.
    """

    csv_path: str
    out_path: str
    d: int
    k: int
    oracle_target_mse: float = 0.95
    blue_intercept: float | None = None
    colormap: str = "gray_r"

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise DataError(f"d and k must be positive, got d={self.d}, k={self.k}")
        if not self.oracle_target_mse > 0.0:
            raise DataError(
                f"oracle_target_mse must be positive, got {self.oracle_target_mse}")
        if self.blue_intercept is not None and not self.blue_intercept > 0.0:
            raise DataError(
                f"blue_intercept must be positive, got {self.blue_intercept}")


@dataclass(frozen=True)
class HeatmapRender:
    """The written file plus the arrays backing it, for verification."""

    figure: object
    table: GridTable
    red_ns: np.ndarray
    red_sigmas: np.ndarray
    blue_sigmas: np.ndarray | None
    out_path: str

    def close(self) -> None:
        plt.close(self.figure)


def render_heatmap(spec: HeatmapSpec) -> HeatmapRender:
    """Draw the phase-transition heatmap and write it to spec.out_path.

    Monochrome brightness, dark = high error, with both axes logarithmic;
    the color scale is fixed to [0, 1] so images of different sweeps are
    comparable.
    """
    table = read_grid_csv(spec.csv_path)
    red_ns = np.geomspace(table.ns[0], table.ns[-1], 256)
    red_sigmas = np.sqrt(spec.oracle_target_mse * red_ns / (spec.d * spec.k))
    blue_sigmas = (None if spec.blue_intercept is None
                   else spec.blue_intercept * red_ns ** 0.25)

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 5.0))
        mesh = ax.pcolormesh(_log_edges(table.ns), _log_edges(table.sigmas),
                             table.values, cmap=spec.colormap,
                             vmin=0.0, vmax=1.0)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.plot(red_ns, red_sigmas, color="red", linewidth=1.5,
                label="oracle MSE level")
        if blue_sigmas is not None:
            ax.plot(red_ns, blue_sigmas, color="blue", linewidth=1.5,
                    label="slope 1/4 reference")
        ax.set_xlim(_log_edges(table.ns)[[0, -1]])
        ax.set_ylim(_log_edges(table.sigmas)[[0, -1]])
        ax.set_xlabel("number of observations N")
        ax.set_ylabel("noise level sigma")
        ax.legend(loc="upper left", fontsize="small")
        fig.colorbar(mesh, ax=ax, label="mean relative error")
        _save(fig, spec.out_path)

    return HeatmapRender(figure=fig, table=table, red_ns=red_ns,
                         red_sigmas=red_sigmas, blue_sigmas=blue_sigmas,
                         out_path=spec.out_path)


# --------------------------------------------------------------------------- #
# Log-log curve
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class LoglogRender:
    figure: object
    xs: np.ndarray
    ys: np.ndarray
    slope: float
    out_path: str

    def close(self) -> None:
        plt.close(self.figure)


def render_loglog(csv_path, x_column: str, y_column: str,
                  out_path) -> LoglogRender:
    """Plot one CSV column against another on log-log axes.

    Both columns must be strictly positive. The fitted log-log slope is
    annotated on the figure; with exactly two points it is the exact ratio
    of log differences.
    """
    rows = _read_rows(csv_path, (x_column, y_column))
    try:
        xs = np.array([float(row[x_column]) for row in rows])
        ys = np.array([float(row[y_column]) for row in rows])
    except ValueError as exc:
        raise DataError(f"{csv_path}: unparseable numeric data") from exc
    if xs.min() <= 0.0 or ys.min() <= 0.0:
        raise DataError(
            f"{csv_path}: log-log plot needs positive values in "
            f"{x_column} and {y_column}")
    if len(xs) < 2:
        raise DataError(f"{csv_path}: need at least two rows")
    slope = float(np.polyfit(np.log(xs), np.log(ys), 1)[0])

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        ax.loglog(xs, ys, marker="o", color="black", linewidth=1.0)
        ax.set_xlabel(x_column)
        ax.set_ylabel(y_column)
        ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
        ax.annotate(f"slope = {slope:.2f}", xy=(0.05, 0.08),
                    xycoords="axes fraction")
        _save(fig, out_path)

    return LoglogRender(figure=fig, xs=xs, ys=ys, slope=slope,
                        out_path=str(out_path))
