"""Plot-ready data files (no rendering)."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..afm_core import AuxiliarySurface, gamma_slices
from ..errors import ArgumentError
from ..results import LocationResult, SourceEstimate, write_trajectory

__all__ = ["FIGURE_KINDS", "emit_figure_data", "write_matrix", "read_matrix",
           "distance_histogram"]

FIGURE_KINDS = ("gamma_slices", "trajectory", "histogram")

_AXIS_NAMES = {"xz": ("zeta_z", "zeta_x"), "nux": ("nu", "zeta_x"), "nuz": ("nu", "zeta_z")}


def write_matrix(path, values, rows, cols, row_name, col_name, fixed=None):
    """Matrix file: a comment line, a line of column coordinates after a
    leading ``nan``, then one line per row starting with its coordinate."""
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        note = f"# rows={row_name} cols={col_name}"
        if fixed is not None:
            note += f" {fixed[0]}={fixed[1]!r}"
        fh.write(note + "\n")
        fh.write(",".join(["nan"] + [f"{c:.17g}" for c in cols]) + "\n")
        for r, line in zip(rows, values):
            fh.write(",".join([f"{r:.17g}"] + [f"{v:.17g}" for v in line]) + "\n")


def read_matrix(path):
    """Inverse of :func:`write_matrix`: ``(values, rows, cols)``."""
    table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return table[1:, 1:], table[1:, 0], table[0, 1:]


def distance_histogram(distances, upper, bins=20):
    """Counts of ``distances`` on ``bins`` equal bins over ``[0, upper]``."""
    d = np.asarray(distances, dtype=float)
    if upper <= 0:
        raise ArgumentError("histogram upper bound must be positive")
    counts, edges = np.histogram(d, bins=bins, range=(0.0, upper))
    return counts, edges


def emit_figure_data(obj, kind, out_dir, **kw) -> list[Path]:
    """Write the data behind one figure kind; returns the files written.

    ``gamma_slices``
        ``obj`` is an :class:`AuxiliarySurface`.  Keywords ``xi``, ``tau``
        pick the slice point (default: the argmin); ``zoom`` (nodes, default
        10) sets the half width of the zoomed copies.
    ``trajectory``
        ``obj`` is a :class:`LocationResult`; keyword ``truth`` adds the
        ``error_km`` column.
    ``histogram``
        ``obj`` is a sequence of distances ``|xi_T - xi|``; keyword ``upper``
        (default: the largest distance) and ``bins``.
    """
    if kind not in FIGURE_KINDS:
        raise ArgumentError(f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if kind == "gamma_slices":
        if not isinstance(obj, AuxiliarySurface):
            raise ArgumentError("gamma_slices needs an AuxiliarySurface")
        zoom = kw.get("zoom", 10)
        for suffix, hw in (("", None), ("_zoom", zoom)):
            slices = gamma_slices(obj, kw.get("xi"), kw.get("tau"), half_width=hw)
            for name, s in slices.items():
                p = out / f"gamma_{name}{suffix}.txt"
                rn, cn = _AXIS_NAMES[name]
                write_matrix(p, s["values"], s["rows"], s["cols"], rn, cn, s["fixed"])
                written.append(p)
    elif kind == "trajectory":
        if not isinstance(obj, LocationResult):
            raise ArgumentError("trajectory needs a LocationResult")
        truth = kw.get("truth")
        if truth is not None and not isinstance(truth, SourceEstimate):
            raise ArgumentError("truth must be a SourceEstimate")
        p = out / "trajectory.csv"
        write_trajectory(p, obj, truth)
        written.append(p)
    else:
        d = np.asarray(list(obj), dtype=float)
        if d.size == 0:
            raise ArgumentError("histogram needs at least one distance")
        upper = kw.get("upper") or (float(d.max()) if d.max() > 0 else 1.0)
        counts, edges = distance_histogram(d, upper, kw.get("bins", 20))
        p = out / "histogram.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([f"{lo:.17g}", f"{hi:.17g}", int(c)])
        written.append(p)
    return written


def search_diagonal(grid) -> float:
    return math.hypot(grid.x_max - grid.x_min, grid.z_max - grid.z_min)
