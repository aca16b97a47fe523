"""Readers for the harness's delimited outputs and field dumps.

The simulation harness writes, per sweep directory:

* ``convergence_dx.csv``  - columns nx, dx, dt, formulation, field, l2_error
* ``convergence_dt_<placement>.csv`` - columns placement, dt, field, l2_error
* ``coupling_table.csv``  - same columns, several placements
* ``summary.json``        - sweep metadata (placements, dts, n_rows, slopes)

and, per run directory, ``diagnostics.csv`` (time, field, l2_error, min,
max, mass_total, moisture_total) plus ``fields/<name>_t<time>.dat`` dumps:
one header line ``nx ny dx dy time name`` followed by nx*ny floats in
row-major order.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

__all__ = [
    "FigureInputError",
    "read_table",
    "read_summary",
    "read_field_dump",
    "find_field_dumps",
]


class FigureInputError(RuntimeError):
    """Missing or malformed harness output."""


def read_table(path, numeric=("dt", "dx", "l2_error", "nx", "time", "min", "max",
                              "mass_total", "moisture_total")):
    """CSV table as a list of dicts with numeric columns converted."""
    if not os.path.exists(path):
        raise FigureInputError(f"no such table: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                if key is None or val is None:
                    raise FigureInputError(f"malformed row in {path}: {raw}")
                if key in numeric:
                    try:
                        row[key] = float(val)
                    except ValueError as exc:
                        raise FigureInputError(
                            f"non-numeric {key}={val!r} in {path}"
                        ) from exc
                else:
                    row[key] = val
            rows.append(row)
    if not rows:
        raise FigureInputError(f"empty table: {path}")
    return rows


def read_summary(path):
    if not os.path.exists(path):
        raise FigureInputError(f"no such summary: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FigureInputError(f"malformed summary {path}: {exc}") from exc


def read_field_dump(path):
    """One plain-text field dump; returns (array, meta)."""
    try:
        with open(path) as fh:
            header = fh.readline().split()
            nx, ny = int(header[0]), int(header[1])
            meta = {
                "nx": nx,
                "ny": ny,
                "dx": float(header[2]),
                "dy": float(header[3]),
                "time": float(header[4]),
                "name": header[5],
            }
            values = np.array(fh.read().split(), dtype=float)
    except (OSError, IndexError, ValueError) as exc:
        raise FigureInputError(f"malformed field dump {path}: {exc}") from exc
    if values.size != nx * ny:
        raise FigureInputError(
            f"field dump {path}: expected {nx * ny} values, found {values.size}"
        )
    return values.reshape(nx, ny), meta


def find_field_dumps(rundir, field=None):
    """Field dumps under <rundir>/fields, optionally for one field, by time."""
    fdir = os.path.join(rundir, "fields")
    if not os.path.isdir(fdir):
        raise FigureInputError(f"no fields directory under {rundir}")
    hits = []
    for name in sorted(os.listdir(fdir)):
        if not name.endswith(".dat"):
            continue
        stem = name[:-4]
        fname, _, tpart = stem.rpartition("_t")
        if not fname:
            continue
        if field is not None and fname != field:
            continue
        try:
            t = float(tpart)
        except ValueError:
            continue
        hits.append((t, fname, os.path.join(fdir, name)))
    if not hits:
        raise FigureInputError(
            f"no field dumps{' for ' + field if field else ''} under {fdir}"
        )
    hits.sort()
    return hits
