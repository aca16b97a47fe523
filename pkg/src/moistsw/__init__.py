"""Moist thermal shallow water testbed for physics-dynamics coupling.

A split-physics formulation (explicit vapour/cloud conversion) and an
integrated-physics formulation (conserved variables, no source terms) of
the moist thermal shallow water equations on a doubly-periodic f-plane
C-grid, advanced by a semi-implicit quasi-Newton timestep whose physics
call site is configurable.  The integrated formulation serves as the
ground truth for measuring coupling error in the split one.
"""

from .cases import (
    InitConfig,
    TestCaseSpec,
    default_physical_params,
    gravity_wave_spec,
    init_gravity_wave,
    init_steady_jet,
    newton_qv,
    steady_jet_spec,
)
from .core import (
    INTEGRATED,
    SPLIT,
    ConfigurationError,
    InitializationError,
    ModelError,
    ModelState,
    PhysicalParams,
    ReferenceState,
    SaturationParams,
    SolverConvergenceError,
    StepError,
    b_from_be,
    be_from_b,
    l2_error,
    l2_norm,
    mass_total,
    moisture_total,
)
from .forcing import ForcingIncrement, equivalence_check, forcing_integrated, forcing_split
from .grid import Grid, ssprk3_transport
from .physics import (
    PhysicsConfig,
    apply_physics_split,
    diagnose_qv_integrated,
    gamma_v,
    physics_tendency,
    q_sat,
    source_P,
)
from .solvers import (
    DryOperator,
    KrylovConfig,
    MoistOperator,
    dry_operator_from_state,
    moist_operator_from_state,
)
from .stepper import SIQNConfig, StepTrace, run, siqn_step

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "SPLIT",
    "INTEGRATED",
    "Grid",
    "ModelState",
    "PhysicalParams",
    "SaturationParams",
    "ReferenceState",
    "PhysicsConfig",
    "InitConfig",
    "TestCaseSpec",
    "SIQNConfig",
    "KrylovConfig",
    "DryOperator",
    "MoistOperator",
    "StepTrace",
    "ForcingIncrement",
    "ModelError",
    "ConfigurationError",
    "InitializationError",
    "SolverConvergenceError",
    "StepError",
    "be_from_b",
    "b_from_be",
    "l2_norm",
    "l2_error",
    "mass_total",
    "moisture_total",
    "q_sat",
    "gamma_v",
    "source_P",
    "physics_tendency",
    "apply_physics_split",
    "diagnose_qv_integrated",
    "forcing_split",
    "forcing_integrated",
    "equivalence_check",
    "ssprk3_transport",
    "dry_operator_from_state",
    "moist_operator_from_state",
    "siqn_step",
    "run",
    "newton_qv",
    "init_steady_jet",
    "init_gravity_wave",
    "steady_jet_spec",
    "gravity_wave_spec",
    "default_physical_params",
]
