"""Command-line harness: single runs, convergence sweeps, coupling comparison.

Exit codes: 0 success, 1 configuration error (including argument errors),
2 numerical failure.  A JSON config file given with --config overrides any
flag of the same name.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .cases import InitConfig, default_physical_params, gravity_wave_spec, steady_jet_spec
from .core import (
    INTEGRATED,
    SPLIT,
    ConfigurationError,
    ModelError,
)
from .experiments import (
    DAY,
    DEFAULT_COUPLING_PLACEMENTS,
    SweepSpec,
    config_for_placement,
    placement_label,
    run_coupling_comparison,
    run_dt_sweep,
    run_resolution_sweep,
    run_with_diagnostics,
    steps_for,
)
from .grid import Grid
from .physics import PhysicsConfig
from .cases import init_case

__all__ = ["main", "cli_main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_common(p):
    p.add_argument("--case", choices=["steady-jet", "gravity-wave"], default=None)
    p.add_argument("--nx", type=int, default=100)
    p.add_argument("--ny", type=int, default=None, help="defaults to --nx")
    p.add_argument("--dt", type=float, default=None, help="timestep (s)")
    p.add_argument("--days", type=float, default=5.0)
    p.add_argument(
        "--placement",
        choices=["final", "pre-loop", "outer-loop", "inner-loop"],
        default="final",
    )
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--solver", choices=["dry", "moist"], default=None,
                   help="defaults to the solver the placement requires")
    p.add_argument("--out", default="out")
    p.add_argument("--config", default=None, help="JSON file overriding any flag")


def build_parser():
    parser = _Parser(prog="moistsw", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[], help="single case")
    _add_common(p_run)
    p_run.add_argument("--formulation", choices=[SPLIT, INTEGRATED], default=SPLIT)

    p_dx = sub.add_parser("sweep-dx", help="steady-jet resolution convergence")
    _add_common(p_dx)
    p_dx.add_argument("--resolutions", default="32,64,128", help="comma list of nx values")
    p_dx.add_argument("--courant", type=float, default=0.1)

    p_dtsweep = sub.add_parser("sweep-dt", help="split-vs-integrated dt convergence")
    _add_common(p_dtsweep)
    p_dtsweep.add_argument("--dts", default="800,400,200,100", help="comma list (s), decreasing")
    p_dtsweep.add_argument("--ref-dt", dest="ref_dt", type=float, default=50.0)
    p_dtsweep.add_argument("--workers", type=int, default=1, help="parallel sweep jobs")

    p_cc = sub.add_parser("compare-coupling", help="dt sweep across physics placements")
    _add_common(p_cc)
    p_cc.add_argument("--dts", default="800,400,200,100")
    p_cc.add_argument("--ref-dt", dest="ref_dt", type=float, default=50.0)
    p_cc.add_argument("--workers", type=int, default=1, help="parallel sweep jobs")

    return parser


def _apply_config_file(args):
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(overrides, dict):
        raise ConfigurationError("config file must hold a JSON object of flag values")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigurationError(f"config key {key!r} does not match any flag")
        setattr(args, attr, value)
    return args


def _parse_float_list(text, name):
    try:
        values = tuple(float(x) for x in str(text).split(",") if x != "")
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {name} list {text!r}") from exc
    if not values:
        raise ConfigurationError(f"{name} list is empty")
    return values


def _case_spec(args, default_case):
    case = args.case or default_case
    if case == "steady-jet":
        return steady_jet_spec()
    return gravity_wave_spec()


def _cmd_run(args):
    spec = _case_spec(args, "steady-jet")
    ny = args.ny or args.nx
    grid = Grid(nx=args.nx, ny=ny, Lx=spec.Lx, Ly=spec.Ly)
    params = default_physical_params()
    init = InitConfig()
    if args.dt is None:
        raise ConfigurationError("run requires --dt")
    end_time = args.days * DAY
    n_steps, dt = steps_for(end_time, args.dt)
    cfg = config_for_placement(args.placement, beta=args.beta)
    if args.solver is not None and args.solver != cfg.solver:
        raise ConfigurationError(
            f"placement {args.placement!r} pairs with the {cfg.solver} solver"
        )
    split, integrated = init_case(spec, params, init, grid)
    state = split if args.formulation == SPLIT else integrated
    label = args.formulation if args.formulation == INTEGRATED else placement_label(
        args.placement, args.beta
    )
    outdir = os.path.join(args.out, spec.case, label, f"dt{dt:g}")
    physics_cfg = PhysicsConfig() if args.formulation == SPLIT else None
    _, stats, _ = run_with_diagnostics(
        state,
        cfg,
        dt,
        n_steps,
        params,
        spec.saturation,
        physics_cfg=physics_cfg,
        outdir=outdir,
        config_echo={
            "case": spec.case,
            "formulation": args.formulation,
            "placement": label,
            "nx": args.nx,
            "ny": ny,
            "dt": dt,
            "days": args.days,
        },
    )
    print(f"run complete: {n_steps} steps, output in {outdir}")
    return 0


def _cmd_sweep_dx(args):
    resolutions = tuple(int(x) for x in _parse_float_list(args.resolutions, "resolution"))
    sweep = SweepSpec(
        mode="resolution",
        resolutions=resolutions,
        end_time=args.days * DAY,
        courant=args.courant,
    )
    result = run_resolution_sweep(sweep=sweep, outdir=args.out)
    for key, slope in sorted(result["slopes"].items()):
        print(f"slope {key}: {slope:.3f}")
    print(f"table written under {args.out}/steady-jet")
    return 0


def _cmd_sweep_dt(args):
    dts = _parse_float_list(args.dts, "dt")
    sweep = SweepSpec(mode="timestep", dts=dts, ref_dt=args.ref_dt, end_time=args.days * DAY)
    spec = _case_spec(args, "gravity-wave")
    ny = args.ny or args.nx
    grid = Grid(nx=args.nx, ny=ny, Lx=spec.Lx, Ly=spec.Ly)
    result = run_dt_sweep(
        spec=spec,
        sweep=sweep,
        placement=args.placement,
        beta=args.beta,
        grid=grid,
        outdir=args.out,
        workers=args.workers,
    )
    for row in result["rows"]:
        print(f"{row['placement']} dt={row['dt']:g} {row['field']}: {row['l2_error']:.4e}")
    return 0


def _cmd_compare_coupling(args):
    dts = _parse_float_list(args.dts, "dt")
    sweep = SweepSpec(
        mode="coupling",
        dts=dts,
        ref_dt=args.ref_dt,
        placements=DEFAULT_COUPLING_PLACEMENTS,
        end_time=args.days * DAY,
    )
    spec = _case_spec(args, "gravity-wave")
    ny = args.ny or args.nx
    grid = Grid(nx=args.nx, ny=ny, Lx=spec.Lx, Ly=spec.Ly)
    result = run_coupling_comparison(
        spec=spec, sweep=sweep, grid=grid, outdir=args.out, workers=args.workers
    )
    print(f"coupling table: {len(result['rows'])} rows under {args.out}/{spec.case}")
    return 0


COMMANDS = {
    "run": _cmd_run,
    "sweep-dx": _cmd_sweep_dx,
    "sweep-dt": _cmd_sweep_dt,
    "compare-coupling": _cmd_compare_coupling,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ModelError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())
