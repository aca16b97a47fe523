"""Convergence sweeps, coupling comparison and diagnostics output.

Three experiment drivers:

* run_resolution_sweep - the balanced jet at a ladder of resolutions with
  the timestep scaled to hold the advective Courant number, errors measured
  against the initial state;
* run_dt_sweep - the gravity-wave case at a ladder of timesteps in the
  split formulation, errors measured against an integrated-formulation
  reference run;
* run_coupling_comparison - run_dt_sweep repeated across physics
  placements against one shared reference.

Every run writes ``diagnostics.csv``, ``summary.json`` and plain-text field
dumps into its own directory; sweeps add a combined table CSV and a summary
at the sweep root.  Velocity errors are normalised by the wind-vector norm
of the reference (the meridional reference component is often identically
zero); scalar errors use each field's own reference norm.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cases import InitConfig, gravity_wave_spec, init_case, steady_jet_spec
from .core import (
    INTEGRATED,
    SPLIT,
    ConfigurationError,
    b_from_be,
    dump_field,
    l2_norm,
    mass_total,
    moisture_total,
)
from .grid import Grid
from .physics import PhysicsConfig, diagnose_qv_integrated, q_sat
from .stepper import (
    PLACEMENT_FINAL,
    PLACEMENT_INNER_LOOP,
    PLACEMENT_OUTER_LOOP,
    PLACEMENT_PRE_LOOP,
    SIQNConfig,
    SOLVER_DRY,
    SOLVER_MOIST,
    run,
)

__all__ = [
    "SweepSpec",
    "DiagnosticsRecord",
    "DEFAULT_COUPLING_PLACEMENTS",
    "config_for_placement",
    "placement_label",
    "comparable_fields",
    "normalized_errors",
    "run_with_diagnostics",
    "run_resolution_sweep",
    "run_dt_sweep",
    "run_coupling_comparison",
    "fit_slope",
]

DAY = 86400.0

# placement, beta pairs compared in the coupling study
DEFAULT_COUPLING_PLACEMENTS = (
    (PLACEMENT_FINAL, 1.0),
    (PLACEMENT_PRE_LOOP, 1.0),
    (PLACEMENT_OUTER_LOOP, 1.0),
    (PLACEMENT_INNER_LOOP, 1.0),
    (PLACEMENT_INNER_LOOP, 0.5),
)


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep: a resolution ladder, a dt ladder, or placements x dts."""

    mode: str
    resolutions: Optional[tuple] = None
    dts: Optional[tuple] = None
    ref_dt: Optional[float] = None
    placements: tuple = DEFAULT_COUPLING_PLACEMENTS
    end_time: float = 5.0 * DAY
    courant: float = 0.1

    def __post_init__(self):
        if self.mode not in ("resolution", "timestep", "coupling"):
            raise ConfigurationError(f"unknown sweep mode {self.mode!r}")
        if self.mode == "resolution":
            if not self.resolutions:
                raise ConfigurationError("resolution sweep needs a resolution list")
        else:
            if not self.dts:
                raise ConfigurationError("timestep sweep needs a dt list")
            if list(self.dts) != sorted(self.dts, reverse=True) or len(set(self.dts)) != len(self.dts):
                raise ConfigurationError("dt list must be strictly decreasing")
            if self.ref_dt is None or self.ref_dt >= min(self.dts):
                raise ConfigurationError("reference dt must be smaller than every swept dt")


@dataclass
class DiagnosticsRecord:
    time: float
    field_stats: dict  # name -> {"l2_error": float, "min": float, "max": float}
    mass: float
    moisture: float


def placement_label(placement, beta=1.0):
    if placement == PLACEMENT_INNER_LOOP:
        return f"inner-loop-beta{beta:g}"
    return placement


def config_for_placement(placement, beta=1.0, n_outer=2, n_inner=2, alpha=0.5, krylov=None):
    """SIQN configuration with the solver the placement requires."""
    solver = SOLVER_MOIST if placement == PLACEMENT_INNER_LOOP else SOLVER_DRY
    kwargs = dict(
        n_outer=n_outer, n_inner=n_inner, alpha=alpha, beta=beta, placement=placement, solver=solver
    )
    if krylov is not None:
        kwargs["krylov"] = krylov
    return SIQNConfig(**kwargs)


def comparable_fields(state, phys, sat):
    """Fields of either formulation expressed in split variables.

    Integrated states are converted by diagnosing the vapour from total
    moisture and rebuilding b = b_e + beta2 * q_v.
    """
    if state.formulation == SPLIT:
        f = state.fields()
        return {k: f[k] for k in ("u", "v", "D", "b", "q_v", "q_c")}
    qs = q_sat(state.D, phys.topography, state.b_e, sat, phys)
    q_v, q_c = diagnose_qv_integrated(state.q_t, qs)
    return {
        "u": state.u,
        "v": state.v,
        "D": state.D,
        "b": b_from_be(state.b_e, q_v, phys.beta2),
        "q_v": q_v,
        "q_c": q_c,
    }


def normalized_errors(fields, reference, grid):
    """Per-field normalised L2 errors.

    u and v are normalised by the wind-vector norm of the reference; scalar
    fields by their own reference norm, falling back to the absolute norm
    when the reference vanishes.
    """
    wind = np.hypot(l2_norm(reference["u"], grid), l2_norm(reference["v"], grid))
    errors = {}
    for name in fields:
        diff = l2_norm(fields[name] - reference[name], grid)
        if name in ("u", "v"):
            errors[name] = diff / wind if wind > 0.0 else diff
        else:
            ref = l2_norm(reference[name], grid)
            errors[name] = diff / ref if ref > 0.0 else diff
    return errors


def _record(state, reference, phys, sat, time):
    fields = comparable_fields(state, phys, sat)
    errs = normalized_errors(fields, reference, state.grid)
    stats = {
        name: {
            "l2_error": errs[name],
            "min": float(np.min(arr)),
            "max": float(np.max(arr)),
        }
        for name, arr in fields.items()
    }
    return DiagnosticsRecord(
        time=time,
        field_stats=stats,
        mass=mass_total(state.D, state.grid),
        moisture=moisture_total(state),
    )


def write_diagnostics_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "field", "l2_error", "min", "max", "mass_total", "moisture_total"])
        for rec in records:
            for name, st in rec.field_stats.items():
                writer.writerow(
                    [
                        f"{rec.time:.10g}",
                        name,
                        f"{st['l2_error']:.17g}",
                        f"{st['min']:.17g}",
                        f"{st['max']:.17g}",
                        f"{rec.mass:.17g}",
                        f"{rec.moisture:.17g}",
                    ]
                )


def _dump_state(dirpath, state, time):
    os.makedirs(dirpath, exist_ok=True)
    for name, arr in state.fields().items():
        fname = f"{name}_t{time:.0f}.dat"
        dump_field(os.path.join(dirpath, fname), arr, state.grid, time, name)


def run_with_diagnostics(
    state,
    cfg,
    dt,
    n_steps,
    phys,
    sat,
    physics_cfg=None,
    outdir=None,
    record_every=None,
    config_echo=None,
):
    """Time loop with periodic diagnostics against the initial state.

    Returns (final state, RunStats, records).  When outdir is given, writes
    diagnostics.csv, summary.json and initial/final field dumps there.
    """
    grid = state.grid
    reference = {k: v.copy() for k, v in comparable_fields(state, phys, sat).items()}
    if record_every is None:
        record_every = max(1, n_steps // 5)
    records = [_record(state, reference, phys, sat, 0.0)]

    def sink(step, time, s, trace):
        records.append(_record(s, reference, phys, sat, time))

    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        _dump_state(os.path.join(outdir, "fields"), state, 0.0)

    final, stats = run(
        state, cfg, dt, n_steps, phys, sat, physics_cfg, sink=sink, sink_every=record_every
    )

    if outdir is not None:
        _dump_state(os.path.join(outdir, "fields"), final, stats.final_time)
        write_diagnostics_csv(os.path.join(outdir, "diagnostics.csv"), records)
        summary = {
            "config": config_echo or {},
            "dt": dt,
            "n_steps": n_steps,
            "final_time": stats.final_time,
            "final_errors": {
                name: st["l2_error"] for name, st in records[-1].field_stats.items()
            },
            "max_step_mass_drift": stats.max_step_mass_drift,
            "solver_iterations": {
                "total": stats.solver_iterations_total,
                "max": stats.solver_iterations_max,
            },
        }
        with open(os.path.join(outdir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return final, stats, records


def fit_slope(dx_values, errors):
    """Least-squares slope of log10(error) against log10(dx)."""
    x = np.log10(np.asarray(dx_values, dtype=float))
    y = np.log10(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def steps_for(end_time, dt_target):
    """Steps and adjusted dt so that n * dt lands exactly on end_time."""
    n = max(1, round(end_time / dt_target))
    return n, end_time / n


def run_resolution_sweep(
    spec=None,
    sweep=None,
    params=None,
    init=None,
    physics_cfg=None,
    cfg_kwargs=None,
    outdir=None,
):
    """Steady-jet error against the initial state across a resolution ladder.

    Both formulations run at every resolution with dt holding the advective
    Courant number at sweep.courant.  The jet is initialised from the
    analytic profile, whose discrete imbalance carries the truncation-error
    signal that the convergence slopes measure.  Returns a dict with the
    table (rows keyed nx/formulation/field), per-field least-squares slopes
    and run statistics.
    """
    from .cases import default_physical_params

    spec = spec or steady_jet_spec()
    if sweep is None:
        sweep = SweepSpec(mode="resolution", resolutions=(32, 64, 128))
    params = params or default_physical_params()
    init = init or InitConfig()
    physics_cfg = physics_cfg if physics_cfg is not None else PhysicsConfig()
    cfg = config_for_placement(PLACEMENT_FINAL, **(cfg_kwargs or {}))

    rows = []
    run_stats = []
    for nx in sweep.resolutions:
        grid = Grid(nx=nx, ny=nx, Lx=spec.Lx, Ly=spec.Ly)
        dt_target = sweep.courant * grid.dx / spec.u0
        n_steps, dt = steps_for(sweep.end_time, dt_target)
        pair = init_case(spec, params, init, grid, balance="analytic")
        for state in pair:
            label = state.formulation
            sub = (
                os.path.join(outdir, spec.case, label, f"dt{dt:g}") if outdir else None
            )
            pcfg = physics_cfg if state.formulation == SPLIT else None
            final, stats, records = run_with_diagnostics(
                state,
                cfg,
                dt,
                n_steps,
                params,
                spec.saturation,
                physics_cfg=pcfg,
                outdir=sub,
                config_echo={"case": spec.case, "nx": nx, "dt": dt, "formulation": label},
            )
            run_stats.append(stats)
            for name, st in records[-1].field_stats.items():
                rows.append(
                    {
                        "nx": nx,
                        "dx": grid.dx,
                        "dt": dt,
                        "formulation": label,
                        "field": name,
                        "l2_error": st["l2_error"],
                    }
                )

    slopes = {}
    for formulation in (SPLIT, INTEGRATED):
        for name in ("u", "v", "D", "b", "q_v", "q_c"):
            pts = [
                (r["dx"], r["l2_error"])
                for r in rows
                if r["formulation"] == formulation and r["field"] == name
            ]
            if len(pts) >= 2:
                slopes[f"{formulation}/{name}"] = fit_slope(
                    [p[0] for p in pts], [p[1] for p in pts]
                )

    result = {"rows": rows, "slopes": slopes, "stats": run_stats}
    if outdir:
        base = os.path.join(outdir, spec.case)
        os.makedirs(base, exist_ok=True)
        with open(os.path.join(base, "convergence_dx.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["nx", "dx", "dt", "formulation", "field", "l2_error"])
            for r in rows:
                writer.writerow(
                    [r["nx"], f"{r['dx']:.10g}", f"{r['dt']:.10g}", r["formulation"], r["field"], f"{r['l2_error']:.17g}"]
                )
        with open(os.path.join(base, "summary.json"), "w") as fh:
            json.dump(
                {
                    "sweep": "resolution",
                    "case": spec.case,
                    "resolutions": list(sweep.resolutions),
                    "slopes": slopes,
                    "n_rows": len(rows),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
    return result


def _integrated_reference(spec, params, init, grid, ref_dt, end_time, cfg_kwargs, outdir):
    _, integrated = init_case(spec, params, init, grid, balance="discrete")
    cfg = config_for_placement(PLACEMENT_FINAL, **(cfg_kwargs or {}))
    n_steps, dt = steps_for(end_time, ref_dt)
    sub = os.path.join(outdir, spec.case, "integrated", f"dt{dt:g}") if outdir else None
    final, stats, _ = run_with_diagnostics(
        integrated,
        cfg,
        dt,
        n_steps,
        params,
        spec.saturation,
        physics_cfg=None,
        outdir=sub,
        config_echo={"case": spec.case, "formulation": INTEGRATED, "dt": dt},
    )
    return comparable_fields(final, params, spec.saturation), stats


def _split_run_job(payload):
    """One split run of a dt sweep; module-level so worker processes can run it."""
    spec = payload["spec"]
    params = payload["params"]
    grid = payload["grid"]
    label = payload["label"]
    n_steps, dt = steps_for(payload["end_time"], payload["dt"])
    cfg = config_for_placement(
        payload["placement"], beta=payload["beta"], **(payload["cfg_kwargs"] or {})
    )
    split, _ = init_case(spec, params, payload["init"], grid, balance="discrete")
    outdir = payload["outdir"]
    sub = os.path.join(outdir, spec.case, label, f"dt{dt:g}") if outdir else None
    final, stats, _ = run_with_diagnostics(
        split,
        cfg,
        dt,
        n_steps,
        params,
        spec.saturation,
        physics_cfg=payload["physics_cfg"],
        outdir=sub,
        config_echo={"case": spec.case, "formulation": SPLIT, "placement": label, "dt": dt},
    )
    errs = normalized_errors(
        comparable_fields(final, params, spec.saturation), payload["reference_fields"], grid
    )
    rows = [
        {"placement": label, "dt": dt, "field": name, "l2_error": err}
        for name, err in errs.items()
    ]
    return {"label": label, "dt": dt, "rows": rows, "stats": stats}


def _map_jobs(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_split_run_job(j) for j in jobs]
    import concurrent.futures as cf

    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_split_run_job, jobs))


def run_dt_sweep(
    spec=None,
    sweep=None,
    params=None,
    init=None,
    physics_cfg=None,
    placement=PLACEMENT_FINAL,
    beta=1.0,
    grid=None,
    cfg_kwargs=None,
    outdir=None,
    reference_fields=None,
    workers=1,
):
    """Split-formulation error against the integrated reference, per dt.

    The reference is the integrated formulation advanced at sweep.ref_dt on
    the same grid; its equivalent buoyancy is converted back to buoyancy
    through the diagnosed vapour before comparison.  Pass reference_fields
    to reuse a previously computed reference.  The per-dt runs are
    independent jobs; workers > 1 executes them in separate processes.
    """
    from .cases import default_physical_params

    spec = spec or gravity_wave_spec()
    if sweep is None:
        sweep = SweepSpec(mode="timestep", dts=(800.0, 400.0, 200.0, 100.0), ref_dt=50.0)
    params = params or default_physical_params()
    init = init or InitConfig()
    physics_cfg = physics_cfg if physics_cfg is not None else PhysicsConfig()
    grid = grid or Grid(nx=100, ny=100, Lx=spec.Lx, Ly=spec.Ly)
    label = placement_label(placement, beta)

    ref_stats = None
    if reference_fields is None:
        reference_fields, ref_stats = _integrated_reference(
            spec, params, init, grid, sweep.ref_dt, sweep.end_time, cfg_kwargs, outdir
        )

    jobs = [
        {
            "spec": spec,
            "params": params,
            "init": init,
            "physics_cfg": physics_cfg,
            "placement": placement,
            "beta": beta,
            "label": label,
            "grid": grid,
            "dt": dt_req,
            "end_time": sweep.end_time,
            "cfg_kwargs": cfg_kwargs,
            "outdir": outdir,
            "reference_fields": reference_fields,
        }
        for dt_req in sweep.dts
    ]
    outcomes = _map_jobs(jobs, workers)
    rows = [row for out in outcomes for row in out["rows"]]
    run_stats = [out["stats"] for out in outcomes]

    result = {
        "rows": rows,
        "stats": run_stats,
        "reference_fields": reference_fields,
        "reference_stats": ref_stats,
    }
    if outdir:
        base = os.path.join(outdir, spec.case)
        os.makedirs(base, exist_ok=True)
        _write_dt_table(os.path.join(base, f"convergence_dt_{label}.csv"), rows)
        with open(os.path.join(base, f"summary_dt_{label}.json"), "w") as fh:
            json.dump(
                {
                    "sweep": "timestep",
                    "case": spec.case,
                    "placement": label,
                    "dts": list(sweep.dts),
                    "ref_dt": sweep.ref_dt,
                    "n_rows": len(rows),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
    return result


def _write_dt_table(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["placement", "dt", "field", "l2_error"])
        for r in rows:
            writer.writerow([r["placement"], f"{r['dt']:.10g}", r["field"], f"{r['l2_error']:.17g}"])


def run_coupling_comparison(
    spec=None,
    sweep=None,
    params=None,
    init=None,
    physics_cfg=None,
    grid=None,
    cfg_kwargs=None,
    outdir=None,
    workers=1,
):
    """run_dt_sweep for every configured placement against one shared reference.

    All (placement, dt) runs are independent; workers > 1 spreads them over
    worker processes.  Table assembly is serial and ordered by the
    configured placement list, then by decreasing dt.
    """
    from .cases import default_physical_params

    spec = spec or gravity_wave_spec()
    if sweep is None:
        sweep = SweepSpec(mode="coupling", dts=(800.0, 400.0, 200.0, 100.0), ref_dt=50.0)
    params = params or default_physical_params()
    init = init or InitConfig()
    physics_cfg = physics_cfg if physics_cfg is not None else PhysicsConfig()
    grid = grid or Grid(nx=100, ny=100, Lx=spec.Lx, Ly=spec.Ly)

    reference_fields, ref_stats = _integrated_reference(
        spec, params, init, grid, sweep.ref_dt, sweep.end_time, cfg_kwargs, outdir
    )
    jobs = [
        {
            "spec": spec,
            "params": params,
            "init": init,
            "physics_cfg": physics_cfg,
            "placement": placement,
            "beta": beta,
            "label": placement_label(placement, beta),
            "grid": grid,
            "dt": dt_req,
            "end_time": sweep.end_time,
            "cfg_kwargs": cfg_kwargs,
            "outdir": outdir,
            "reference_fields": reference_fields,
        }
        for placement, beta in sweep.placements
        for dt_req in sweep.dts
    ]
    outcomes = _map_jobs(jobs, workers)

    all_rows = []
    per_placement = {}
    for placement, beta in sweep.placements:
        label = placement_label(placement, beta)
        rows = [
            row
            for out in outcomes
            if out["label"] == label
            for row in out["rows"]
        ]
        stats = [out["stats"] for out in outcomes if out["label"] == label]
        per_placement[label] = {"rows": rows, "stats": stats}
        all_rows.extend(rows)
        if outdir:
            base = os.path.join(outdir, spec.case)
            os.makedirs(base, exist_ok=True)
            _write_dt_table(os.path.join(base, f"convergence_dt_{label}.csv"), rows)

    result = {
        "rows": all_rows,
        "per_placement": per_placement,
        "reference_fields": reference_fields,
        "reference_stats": ref_stats,
    }
    if outdir:
        base = os.path.join(outdir, spec.case)
        os.makedirs(base, exist_ok=True)
        _write_dt_table(os.path.join(base, "coupling_table.csv"), all_rows)
        with open(os.path.join(base, "summary.json"), "w") as fh:
            json.dump(
                {
                    "sweep": "coupling",
                    "case": spec.case,
                    "placements": [placement_label(p, b) for p, b in sweep.placements],
                    "dts": list(sweep.dts),
                    "ref_dt": sweep.ref_dt,
                    "n_rows": len(all_rows),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
    return result
