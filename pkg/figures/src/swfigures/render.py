"""Figure builders: log-log convergence curves, coupling panels, heatmaps."""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import FigureInputError, find_field_dumps, read_field_dump, read_summary, read_table

__all__ = ["KINDS", "PlotSpec", "render"]

KINDS = ("convergence-dx", "convergence-dt", "coupling-panel", "field-map")

FIELD_ORDER = ("u", "v", "D", "b", "q_v", "q_c")


@dataclass(frozen=True)
class PlotSpec:
    indir: str
    kind: str
    outpath: str
    field: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FigureInputError(f"unknown figure kind {self.kind!r}; options {KINDS}")


def _guide_line(ax, xs, y0, order, label):
    """Reference slope anchored at the coarsest (largest-x) data point."""
    xs = np.asarray(sorted(xs, reverse=True), dtype=float)
    ys = y0 * (xs / xs[0]) ** order
    ax.plot(xs, ys, "k--", linewidth=0.8, alpha=0.6, label=label)


def _field_series(rows, x_key, group_key):
    """{group: {field: sorted [(x, err), ...]}}"""
    series = {}
    for r in rows:
        series.setdefault(r[group_key], {}).setdefault(r["field"], []).append(
            (r[x_key], r["l2_error"])
        )
    for groups in series.values():
        for pts in groups.values():
            pts.sort()
    return series


def render_convergence_dx(spec):
    rows = read_table(os.path.join(spec.indir, "convergence_dx.csv"))
    if spec.field:
        rows = [r for r in rows if r["field"] == spec.field]
        if not rows:
            raise FigureInputError(f"no rows for field {spec.field!r}")
    series = _field_series(rows, "dx", "formulation")
    formulations = sorted(series)
    fig, axes = plt.subplots(
        1, len(formulations), figsize=(5.5 * len(formulations), 4.4), squeeze=False
    )
    for ax, formulation in zip(axes[0], formulations):
        points = series[formulation]
        for field in sorted(points, key=lambda f: FIELD_ORDER.index(f) if f in FIELD_ORDER else 99):
            xs, ys = zip(*points[field])
            ax.loglog(xs, ys, "o-", markersize=4, label=field)
        anchor = max(max(p[1] for p in pts) for pts in points.values())
        xs_all = sorted({p[0] for pts in points.values() for p in pts})
        _guide_line(ax, xs_all, anchor, 2.0, "2nd order")
        ax.set_xlabel("dx (m)")
        ax.set_ylabel("normalised L2 error")
        ax.set_title(formulation)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.outpath, dpi=150)
    plt.close(fig)
    return {"panels": len(formulations), "points": len(rows)}


def _dt_tables(indir):
    paths = sorted(glob.glob(os.path.join(indir, "convergence_dt_*.csv")))
    if not paths:
        raise FigureInputError(f"no convergence_dt_*.csv under {indir}")
    rows = []
    for p in paths:
        rows.extend(read_table(p))
    return rows


def render_convergence_dt(spec):
    rows = _dt_tables(spec.indir)
    if spec.field:
        rows = [r for r in rows if r["field"] == spec.field]
        if not rows:
            raise FigureInputError(f"no rows for field {spec.field!r}")
    series = _field_series(rows, "dt", "placement")
    placements = sorted(series)
    fig, axes = plt.subplots(
        1, len(placements), figsize=(5.0 * len(placements), 4.2), squeeze=False
    )
    for ax, placement in zip(axes[0], placements):
        points = series[placement]
        for field in sorted(points, key=lambda f: FIELD_ORDER.index(f) if f in FIELD_ORDER else 99):
            xs, ys = zip(*points[field])
            ax.loglog(xs, ys, "o-", markersize=4, label=field)
        anchor = max(max(p[1] for p in pts) for pts in points.values())
        xs_all = sorted({p[0] for pts in points.values() for p in pts})
        if len(xs_all) >= 2:
            _guide_line(ax, xs_all, anchor, 1.0, "1st order")
            _guide_line(ax, xs_all, 0.5 * anchor, 2.0, "2nd order")
        ax.set_xlabel("dt (s)")
        ax.set_ylabel("normalised L2 error vs reference")
        ax.set_title(placement)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.outpath, dpi=150)
    plt.close(fig)
    return {"panels": len(placements), "points": len(rows)}


def render_coupling_panel(spec):
    rows = read_table(os.path.join(spec.indir, "coupling_table.csv"))
    if spec.field:
        rows = [r for r in rows if r["field"] == spec.field]
        if not rows:
            raise FigureInputError(f"no rows for field {spec.field!r}")
    summary_path = os.path.join(spec.indir, "summary.json")
    summary = read_summary(summary_path) if os.path.exists(summary_path) else {}
    placements = summary.get("placements") or sorted({r["placement"] for r in rows})
    missing = {r["placement"] for r in rows} - set(placements)
    if missing:
        raise FigureInputError(f"table has placements missing from summary: {missing}")
    series = _field_series(rows, "dt", "placement")
    fig, axes = plt.subplots(
        1, len(placements), figsize=(3.8 * len(placements), 3.8), sharey=True, squeeze=False
    )
    for ax, placement in zip(axes[0], placements):
        points = series.get(placement, {})
        for field in sorted(points, key=lambda f: FIELD_ORDER.index(f) if f in FIELD_ORDER else 99):
            xs, ys = zip(*points[field])
            ax.loglog(xs, ys, "o-", markersize=4, label=field)
        ax.set_title(placement, fontsize=9)
        ax.set_xlabel("dt (s)")
        ax.grid(True, which="both", alpha=0.3)
    axes[0][0].set_ylabel("normalised L2 error")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.outpath, dpi=150)
    plt.close(fig)
    return {"panels": len(placements), "points": len(rows)}


def render_field_map(spec):
    hits = find_field_dumps(spec.indir, spec.field)
    if spec.field is None:
        # one panel per field at the latest dumped time
        latest = {}
        for t, name, path in hits:
            if name not in latest or t > latest[name][0]:
                latest[name] = (t, path)
        items = [(name, latest[name][0], latest[name][1]) for name in sorted(latest)]
    else:
        items = [(name, t, path) for t, name, path in hits]
    n = len(items)
    ncols = min(n, 3)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.5 * ncols, 3.8 * nrows), squeeze=False)
    for k, (name, t, path) in enumerate(items):
        arr, meta = read_field_dump(path)
        ax = axes[k // ncols][k % ncols]
        extent = (0.0, meta["nx"] * meta["dx"] / 1e3, 0.0, meta["ny"] * meta["dy"] / 1e3)
        im = ax.imshow(arr.T, origin="lower", extent=extent, aspect="auto", cmap="RdYlBu_r")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title(f"{name} at t = {t / 86400.0:.2f} d", fontsize=9)
        ax.set_xlabel("x (km)")
        ax.set_ylabel("y (km)")
    for k in range(n, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(spec.outpath, dpi=150)
    plt.close(fig)
    return {"panels": n, "points": n}


RENDERERS = {
    "convergence-dx": render_convergence_dx,
    "convergence-dt": render_convergence_dt,
    "coupling-panel": render_coupling_panel,
    "field-map": render_field_map,
}


def render(spec):
    """Render one figure; returns a dict with panel/point counts."""
    outdir = os.path.dirname(os.path.abspath(spec.outpath))
    os.makedirs(outdir, exist_ok=True)
    return RENDERERS[spec.kind](spec)
