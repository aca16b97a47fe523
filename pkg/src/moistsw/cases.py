"""Fair-test initialisation and the two planar test cases.

Both formulations must start from equivalent fields even though their
prognostics differ.  Given a buoyancy guess, a Newton-Raphson iteration
finds the vapour at saturation together with the matching equivalent
buoyancy, after which the split buoyancy is rebuilt from the actual vapour
so that b = b_e + beta2*q_v holds exactly in the returned pair.

The steady jet balances a sinusoidal zonal wind against the depth field on
the f-plane; the gravity-wave case adds a conical depth perturbation on the
jet flank and a uniform total moisture.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np

from .core import (
    ConfigurationError,
    InitializationError,
    ModelState,
    PhysicalParams,
    SaturationParams,
    SaturationDomainError,
    b_from_be,
)
from .physics import q_sat

__all__ = [
    "GRAVITY",
    "InitConfig",
    "TestCaseSpec",
    "default_physical_params",
    "steady_jet_spec",
    "gravity_wave_spec",
    "newton_qv",
    "init_steady_jet",
    "init_gravity_wave",
    "init_case",
]

GRAVITY = 9.80616
PHI0 = 3.0e4
DOMAIN_LENGTH = 1.0e7
CORIOLIS = 1.0e-4


@dataclass(frozen=True)
class InitConfig:
    """Controls for the vapour fixed-point iteration.

    xi in [0, 1) pulls the returned vapour below saturation; 0 starts
    exactly at saturation.
    """

    xi: float = 0.0
    newton_iterations: int = 10
    newton_tolerance: float = 1e-10
    qv_guess: float = 0.02

    def __post_init__(self):
        if not 0.0 <= self.xi < 1.0:
            raise ConfigurationError("xi must lie in [0, 1)")
        if self.newton_iterations < 1:
            raise ConfigurationError("need at least one Newton iteration")


@dataclass(frozen=True)
class TestCaseSpec:
    """Planar test-case description; perturbation fields are zero for the jet."""

    case: str
    Lx: float
    Ly: float
    u0: float
    b0: float
    saturation: SaturationParams
    q_t0: float = 0.0
    h0: float = 0.0
    R_p: float = 0.0
    center: tuple = (0.0, 0.0)
    qv_guess: float = 0.02


def default_physical_params(f=CORIOLIS, g=GRAVITY, phi0=PHI0, L=10.0, topography=0.0):
    return PhysicalParams(f=f, g=g, H=phi0 / g, L=L, topography=topography)


def steady_jet_spec(Lx=DOMAIN_LENGTH, Ly=DOMAIN_LENGTH, u0=20.0, b0=None, q0=0.007, nu=1.5):
    if b0 is None:
        b0 = GRAVITY * (299.0 / 300.0)
    return TestCaseSpec(
        case="steady-jet",
        Lx=Lx,
        Ly=Ly,
        u0=u0,
        b0=b0,
        saturation=SaturationParams(q0=q0, nu=nu),
        qv_guess=0.02,
    )


def gravity_wave_spec(
    Lx=DOMAIN_LENGTH,
    Ly=DOMAIN_LENGTH,
    u0=20.0,
    b0=None,
    q0=0.0115,
    nu=1.5,
    q_t0=0.03,
    h0=2000.0,
    R_p=None,
    center=None,
):
    if b0 is None:
        b0 = GRAVITY * (299.0 / 300.0)
    if R_p is None:
        # the angular radius pi/9 of the original perturbation, mapped to a
        # fraction of the domain width
        R_p = Lx * (np.pi / 9.0) / (2.0 * np.pi)
    if center is None:
        center = (Lx / 2.0, 2.0 * Ly / 3.0)
    return TestCaseSpec(
        case="gravity-wave",
        Lx=Lx,
        Ly=Ly,
        u0=u0,
        b0=b0,
        saturation=SaturationParams(q0=q0, nu=nu),
        q_t0=q_t0,
        h0=h0,
        R_p=R_p,
        center=center,
        qv_guess=0.03,
    )


def newton_qv(b, D, B, sat, phys, init):
    """Vapour at saturation for a prescribed buoyancy field.

    Solves q_v = q_sat(b - beta2 q_v) pointwise by Newton-Raphson and
    returns (q_v, b_e, q_sat) with b_e = b - beta2 * q_v and q_sat
    re-evaluated from the returned b_e (so downstream saturation
    evaluations reproduce it bitwise).  With xi > 0 the returned vapour is
    scaled to (1 - xi) of saturation after convergence.
    """
    b = np.asarray(b, dtype=float)
    depth = np.asarray(D, dtype=float) + B
    if np.any(depth <= 0.0):
        raise SaturationDomainError("initialisation requires D + B > 0")
    qv = np.full_like(b, init.qv_guess)
    coef = sat.nu * phys.beta2 / phys.g
    base = sat.q0 * phys.H / depth * np.exp(sat.nu * (1.0 - b / phys.g))
    for _ in range(init.newton_iterations):
        qs = base * np.exp(coef * qv)
        resid = qs - qv
        if np.max(np.abs(resid)) < init.newton_tolerance:
            break
        qv = qv - resid / (coef * qs - 1.0)
    qs = base * np.exp(coef * qv)
    worst = float(np.max(np.abs(qs - qv)))
    if worst >= init.newton_tolerance:
        raise InitializationError(
            f"vapour iteration stalled at residual {worst:.3e} "
            f"after {init.newton_iterations} iterations"
        )
    if init.xi > 0.0:
        qv = (1.0 - init.xi) * qs
    b_e = b - phys.beta2 * qv
    q_sat_out = q_sat(D, B, b_e, sat, phys)
    return qv, b_e, q_sat_out


def _jet_wind_and_depth(spec, params, grid, balance):
    """Zonal jet u(y) with the depth that balances it on the f-plane.

    balance="discrete" integrates the discrete v-point momentum balance
    exactly (the returned state is a fixed point of the discrete forcing);
    balance="analytic" evaluates the continuous profile pointwise, leaving
    an O(dy^2) residual that measures the discretisation error in
    convergence studies.
    """
    y = grid.y_centers()
    u_row = spec.u0 * np.sin(2.0 * np.pi * y / spec.Ly)
    if balance == "analytic":
        amp = params.f * spec.u0 * spec.Ly / (2.0 * np.pi * spec.b0)
        D_row = params.H + amp * np.cos(2.0 * np.pi * y / spec.Ly)
    elif balance == "discrete":
        # v-face condition: f*(u_j + u_{j+1})/2 + b0*(D_{j+1} - D_j)/dy = 0
        incr = -(params.f * grid.dy / (2.0 * spec.b0)) * (u_row + np.roll(u_row, -1))
        incr = incr - incr.mean()  # exact periodic closure
        D_row = np.concatenate(([0.0], np.cumsum(incr)[:-1]))
        D_row = D_row + (params.H - D_row.mean())
    else:
        raise ConfigurationError(f"unknown balance mode {balance!r}")
    u = np.broadcast_to(u_row[None, :], grid.shape).copy()
    v = np.zeros(grid.shape)
    D = np.broadcast_to(D_row[None, :], grid.shape).copy()
    return u, v, D


def init_steady_jet(spec, params, init, grid, balance="discrete"):
    """Over-saturated balanced jet; returns the matched (split, integrated) pair.

    Vapour and cloud both start at the saturation value, total moisture at
    twice it, so a phase change is armed on either side of saturation.
    """
    if spec.case != "steady-jet":
        raise ConfigurationError(f"spec describes {spec.case!r}, not steady-jet")
    u, v, D = _jet_wind_and_depth(spec, params, grid, balance)
    if np.any(D + params.topography <= 0.0):
        raise ConfigurationError("jet too strong: depth non-positive somewhere")
    b_guess = np.full(grid.shape, spec.b0)
    init_local = replace(init, qv_guess=spec.qv_guess)
    _, b_e, qs = newton_qv(b_guess, D, params.topography, spec.saturation, params, init_local)
    b = b_from_be(b_e, qs, params.beta2)
    split = ModelState.split(grid, u, v, D, b, qs.copy(), qs.copy())
    integrated = ModelState.integrated(
        grid, u.copy(), v.copy(), D.copy(), b_e.copy(), 2.0 * qs
    )
    return split, integrated


def _conical_perturbation(spec, grid):
    """h0 * (1 - min(1, r/R_p)) about the configured centre, periodic metric."""
    X, Y = grid.center_mesh()
    xc, yc = spec.center
    dxp = np.abs(X - xc)
    dyp = np.abs(Y - yc)
    dxp = np.minimum(dxp, spec.Lx - dxp)
    dyp = np.minimum(dyp, spec.Ly - dyp)
    r = np.hypot(dxp, dyp)
    return spec.h0 * (1.0 - np.minimum(1.0, r / spec.R_p))


def init_gravity_wave(spec, params, init, grid, balance="discrete"):
    """Balanced jet plus a conical depth bump and uniform total moisture."""
    if spec.case != "gravity-wave":
        raise ConfigurationError(f"spec describes {spec.case!r}, not gravity-wave")
    u, v, D = _jet_wind_and_depth(spec, params, grid, balance)
    D = D + _conical_perturbation(spec, grid)
    if np.any(D + params.topography <= 0.0):
        raise ConfigurationError("depth non-positive after perturbation")
    b_guess = np.full(grid.shape, spec.b0)
    init_local = replace(init, qv_guess=spec.qv_guess)
    _, b_e, qs = newton_qv(b_guess, D, params.topography, spec.saturation, params, init_local)
    q_t = np.full(grid.shape, spec.q_t0)
    q_v = np.minimum(q_t, qs)
    q_c = q_t - q_v
    b = b_from_be(b_e, q_v, params.beta2)
    split = ModelState.split(grid, u, v, D, b, q_v, q_c)
    integrated = ModelState.integrated(grid, u.copy(), v.copy(), D.copy(), b_e.copy(), q_t.copy())
    return split, integrated


def init_case(spec, params, init, grid, balance="discrete"):
    if spec.case == "steady-jet":
        return init_steady_jet(spec, params, init, grid, balance)
    if spec.case == "gravity-wave":
        return init_gravity_wave(spec, params, init, grid, balance)
    raise ConfigurationError(f"unknown case {spec.case!r}")
