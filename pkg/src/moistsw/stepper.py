"""Semi-implicit quasi-Newton timestep with selectable physics placement.

One step runs: an explicit half-step of forcing, an outer loop that rebuilds
the advecting wind and re-transports the forced state, and an inner loop
that forms the residual against the implicitly-forced state and solves the
frozen linear operator for an increment.  The split formulation's
conversion scheme can be called in four places:

* final      - once, after both loops (the standard arrangement);
* pre-loop   - once, on the time-level-n state before explicit forcing;
* outer-loop - on the transported state, entering the residual as a fixed
               increment across the inner iterations of that outer sweep;
* inner-loop - as a tendency, beta-weighted between an explicit evaluation
               before transport and an implicit evaluation inside the
               residual, paired with the moist linear solver.

The integrated formulation has no conversion scheme, so every placement
reduces to the same step.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import (
    INTEGRATED,
    SPLIT,
    ConfigurationError,
    StepError,
    l2_norm,
    mass_total,
)
from .forcing import forcing_integrated, forcing_split
from .grid import ssprk3_transport
from .physics import apply_physics_split, physics_tendency
from .solvers import (
    KrylovConfig,
    MoistOperator,
    dry_operator_from_state,
    moist_operator_from_state,
)

__all__ = [
    "PLACEMENTS",
    "SIQNConfig",
    "InnerIterationRecord",
    "StepTrace",
    "RunStats",
    "siqn_step",
    "run",
]

PLACEMENT_FINAL = "final"
PLACEMENT_PRE_LOOP = "pre-loop"
PLACEMENT_OUTER_LOOP = "outer-loop"
PLACEMENT_INNER_LOOP = "inner-loop"
PLACEMENTS = (PLACEMENT_FINAL, PLACEMENT_PRE_LOOP, PLACEMENT_OUTER_LOOP, PLACEMENT_INNER_LOOP)

SOLVER_DRY = "dry"
SOLVER_MOIST = "moist"


@dataclass(frozen=True)
class SIQNConfig:
    """Iteration counts, off-centring weights, placement and solver choice.

    alpha off-centres the implicit velocity forcing (0.5 throughout); beta
    weights the implicit share of the inner-loop physics (1 fully implicit,
    0 fully explicit).  Scalar rows carry no off-centring.  The inner-loop
    placement requires the moist solver; every other placement pairs with
    the dry solver.
    """

    n_outer: int = 2
    n_inner: int = 2
    alpha: float = 0.5
    beta: float = 1.0
    placement: str = PLACEMENT_FINAL
    solver: str = SOLVER_DRY
    krylov: KrylovConfig = dc_field(default_factory=KrylovConfig)

    def __post_init__(self):
        if self.n_outer < 1 or self.n_inner < 1:
            raise ConfigurationError("n_outer and n_inner must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("beta must lie in [0, 1]")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(f"unknown placement {self.placement!r}")
        if self.solver not in (SOLVER_DRY, SOLVER_MOIST):
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.placement == PLACEMENT_INNER_LOOP and self.solver != SOLVER_MOIST:
            raise ConfigurationError("inner-loop physics requires the moist solver")
        if self.placement != PLACEMENT_INNER_LOOP and self.solver == SOLVER_MOIST:
            raise ConfigurationError("the moist solver is only used with inner-loop physics")


@dataclass
class InnerIterationRecord:
    outer: int
    inner: int
    residual_norm: float
    solver_iterations: int
    solver_residual: float


@dataclass
class StepTrace:
    placement: str
    records: list = dc_field(default_factory=list)
    physics_increment_norms: list = dc_field(default_factory=list)


def _forcing(state, phys, sat, dt_frac):
    if state.formulation == SPLIT:
        return forcing_split(state, phys, dt_frac)
    return forcing_integrated(state, phys, sat, dt_frac)


def _combined_norm(fields, grid):
    return float(np.sqrt(sum(l2_norm(v, grid) ** 2 for v in fields.values())))


def _build_operator(state, cfg, dt, phys, sat):
    if state.formulation == INTEGRATED or cfg.solver == SOLVER_DRY:
        return dry_operator_from_state(state, phys, sat, cfg.alpha, dt)
    return moist_operator_from_state(state, phys, sat, cfg.alpha, dt)


def _solve_increment(op, resid, state, kcfg):
    """Increment for every prognostic field.

    Fields outside the linear operator (moisture under the dry solver) take
    their residual directly: with no implicit coupling the solve for them is
    the identity.
    """
    thermal = state.field_names()[3]
    if isinstance(op, MoistOperator):
        du, dv, dD, db, dqv, dqc, stats = op.solve(
            resid["u"], resid["v"], resid["D"], resid["b"], resid["q_v"], resid["q_c"], kcfg
        )
        return {"u": du, "v": dv, "D": dD, "b": db, "q_v": dqv, "q_c": dqc}, stats
    du, dv, dD, dth, stats = op.solve(resid["u"], resid["v"], resid["D"], resid[thermal], kcfg)
    incr = {"u": du, "v": dv, "D": dD, thermal: dth}
    for name in state.field_names():
        if name not in incr:
            incr[name] = resid[name]
    return incr, stats


def siqn_step(state, cfg, dt, phys, sat, physics_cfg=None):
    """Advance one timestep; returns (new state, StepTrace).

    physics_cfg=None disables the conversion scheme entirely (useful for
    dry runs and for composing the final-physics step out of its pieces).
    For integrated states the placement hooks never fire.
    """
    grid = state.grid
    do_physics = state.formulation == SPLIT and physics_cfg is not None
    trace = StepTrace(placement=cfg.placement)
    op = _build_operator(state, cfg, dt, phys, sat)

    base = state
    if do_physics and cfg.placement == PLACEMENT_PRE_LOOP:
        base = apply_physics_split(state, dt, sat, phys, physics_cfg)
        trace.physics_increment_norms.append(
            _combined_norm(
                {n: base.get(n) - state.get(n) for n in ("b", "q_v", "q_c")}, grid
            )
        )

    inc_e = _forcing(state, phys, sat, 0.5 * dt)
    chi_fe = base.with_fields(u=base.u + inc_e.du, v=base.v + inc_e.dv)

    if do_physics and cfg.placement == PLACEMENT_INNER_LOOP:
        tend = physics_tendency(state, dt, sat, phys, physics_cfg)
        w = (1.0 - cfg.beta) * dt
        chi_fe = chi_fe.with_fields(
            b=chi_fe.b + w * tend["b"],
            q_v=chi_fe.q_v + w * tend["q_v"],
            q_c=chi_fe.q_c + w * tend["q_c"],
        )

    chi_np1 = state.copy()
    for m in range(cfg.n_outer):
        u_adv = 0.5 * (state.u + chi_np1.u)
        v_adv = 0.5 * (state.v + chi_np1.v)
        chi_T = ssprk3_transport(chi_fe, u_adv, v_adv, dt)

        rhs_phys = None
        if do_physics and cfg.placement == PLACEMENT_OUTER_LOOP:
            after = apply_physics_split(chi_T, dt, sat, phys, physics_cfg)
            rhs_phys = {n: after.get(n) - chi_T.get(n) for n in ("b", "q_v", "q_c")}
            trace.physics_increment_norms.append(_combined_norm(rhs_phys, grid))

        for k in range(cfg.n_inner):
            inc_i = _forcing(chi_np1, phys, sat, 0.5 * dt)
            fT = chi_T.fields()
            fN = chi_np1.fields()
            resid = {name: fT[name] - fN[name] for name in fT}
            resid["u"] = resid["u"] + inc_i.du
            resid["v"] = resid["v"] + inc_i.dv
            if rhs_phys is not None:
                for name, val in rhs_phys.items():
                    resid[name] = resid[name] + val
            if do_physics and cfg.placement == PLACEMENT_INNER_LOOP:
                tend = physics_tendency(chi_np1, dt, sat, phys, physics_cfg)
                for name, val in tend.items():
                    resid[name] = resid[name] + cfg.beta * dt * val
                trace.physics_increment_norms.append(
                    _combined_norm({n: cfg.beta * dt * v for n, v in tend.items()}, grid)
                )

            incr, stats = _solve_increment(op, resid, state, cfg.krylov)
            trace.records.append(
                InnerIterationRecord(
                    outer=m,
                    inner=k,
                    residual_norm=_combined_norm(resid, grid),
                    solver_iterations=stats.iterations,
                    solver_residual=stats.residual_norm,
                )
            )
            chi_np1 = chi_np1.with_fields(**{n: fN[n] + incr[n] for n in incr})

    if do_physics and cfg.placement == PLACEMENT_FINAL:
        after = apply_physics_split(chi_np1, dt, sat, phys, physics_cfg)
        trace.physics_increment_norms.append(
            _combined_norm(
                {n: after.get(n) - chi_np1.get(n) for n in ("b", "q_v", "q_c")}, grid
            )
        )
        chi_np1 = after

    return chi_np1, trace


@dataclass
class RunStats:
    n_steps: int = 0
    final_time: float = 0.0
    max_step_mass_drift: float = 0.0
    solver_iterations_total: int = 0
    solver_iterations_max: int = 0

    def absorb(self, trace):
        for rec in trace.records:
            self.solver_iterations_total += rec.solver_iterations
            self.solver_iterations_max = max(self.solver_iterations_max, rec.solver_iterations)


def run(state, cfg, dt, n_steps, phys, sat, physics_cfg=None, sink=None, sink_every=0):
    """Apply siqn_step n_steps times.

    sink(step, time, state, trace) fires every sink_every steps (and at the
    final step) when provided.  Step failures are re-raised as StepError
    with the step index.  Returns (final state, RunStats); the stats track
    the worst per-step relative drift of the total fluid volume.
    """
    stats = RunStats()
    mass_prev = mass_total(state.D, state.grid)
    for i in range(n_steps):
        try:
            state, trace = siqn_step(state, cfg, dt, phys, sat, physics_cfg)
        except Exception as exc:  # noqa: BLE001 - annotate with the step index
            raise StepError(i, exc) from exc
        stats.absorb(trace)
        mass_now = mass_total(state.D, state.grid)
        stats.max_step_mass_drift = max(
            stats.max_step_mass_drift, abs(mass_now - mass_prev) / abs(mass_prev)
        )
        mass_prev = mass_now
        stats.n_steps = i + 1
        stats.final_time = (i + 1) * dt
        if sink is not None and (
            (sink_every and (i + 1) % sink_every == 0) or i + 1 == n_steps
        ):
            sink(i + 1, (i + 1) * dt, state, trace)
    return state, stats
