"""Arakawa C-grid operators and explicit transport on a doubly-periodic plane.

Staggering convention: scalars live at cell centres (i, j), the x-velocity u
at x-faces (i+1/2, j) and the y-velocity v at y-faces (i, j+1/2).  All fields
are stored as (nx, ny) arrays indexed [i, j]; periodic wrap-around is index
arithmetic (np.roll).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError

__all__ = [
    "Grid",
    "CourantWarning",
    "grad_center_to_faces",
    "div_faces_to_center",
    "avg_center_to_xface",
    "avg_center_to_yface",
    "avg_xface_to_center",
    "avg_yface_to_center",
    "v_at_xfaces",
    "u_at_yfaces",
    "coriolis_term",
    "advect_scalar_upwind",
    "advect_velocity",
    "transport_tendencies",
    "ssprk3_transport",
]


class CourantWarning(UserWarning):
    """Advective Courant number exceeds 1; transport accuracy degrades."""


@dataclass(frozen=True)
class Grid:
    """Uniform doubly-periodic grid, nx*dx = Lx and ny*dy = Ly."""

    nx: int
    ny: int
    Lx: float
    Ly: float
    dx: float = field(init=False)
    dy: float = field(init=False)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(
                f"grid too small: need nx, ny >= 4, got {self.nx}x{self.ny}"
            )
        if self.Lx <= 0 or self.Ly <= 0:
            raise ConfigurationError("domain extents must be positive")
        object.__setattr__(self, "dx", self.Lx / self.nx)
        object.__setattr__(self, "dy", self.Ly / self.ny)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_area(self):
        return self.dx * self.dy

    def x_centers(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self):
        return (np.arange(self.ny) + 0.5) * self.dy

    def center_mesh(self):
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")


# Periodic unit shifts; slice-and-stitch is substantially faster than np.roll.

def shift_xp(a):
    """a[i+1, j] with periodic wrap."""
    out = np.empty_like(a)
    out[:-1] = a[1:]
    out[-1] = a[0]
    return out


def shift_xm(a):
    """a[i-1, j] with periodic wrap."""
    out = np.empty_like(a)
    out[1:] = a[:-1]
    out[0] = a[-1]
    return out


def shift_yp(a):
    """a[i, j+1] with periodic wrap."""
    out = np.empty_like(a)
    out[:, :-1] = a[:, 1:]
    out[:, -1] = a[:, 0]
    return out


def shift_ym(a):
    """a[i, j-1] with periodic wrap."""
    out = np.empty_like(a)
    out[:, 1:] = a[:, :-1]
    out[:, 0] = a[:, -1]
    return out


def grad_center_to_faces(s, grid):
    """Two-point gradient of a centre field, returned at (x-face, y-face) points."""
    gx = (shift_xp(s) - s) / grid.dx
    gy = (shift_yp(s) - s) / grid.dy
    return gx, gy


def div_faces_to_center(fx, fy, grid):
    """Divergence of face fluxes at cell centres."""
    return (fx - shift_xm(fx)) / grid.dx + (fy - shift_ym(fy)) / grid.dy


def avg_center_to_xface(s):
    return 0.5 * (s + shift_xp(s))


def avg_center_to_yface(s):
    return 0.5 * (s + shift_yp(s))


def avg_xface_to_center(f):
    return 0.5 * (f + shift_xm(f))


def avg_yface_to_center(f):
    return 0.5 * (f + shift_ym(f))


def v_at_xfaces(v):
    """Four-point average of v onto u points (i+1/2, j)."""
    vr = shift_xp(v)
    return 0.25 * (v + vr + shift_ym(v) + shift_ym(vr))


def u_at_yfaces(u):
    """Four-point average of u onto v points (i, j+1/2)."""
    ul = shift_xm(u)
    return 0.25 * (u + ul + shift_yp(u) + shift_yp(ul))


def coriolis_term(u, v, f):
    """Components of f k x u at the native velocity points: (-f vbar, +f ubar)."""
    return -f * v_at_xfaces(v), f * u_at_yfaces(u)


def advect_scalar_upwind(q, u, v, grid, mode="advective"):
    """Upwind transport tendency of a centre scalar.

    mode="flux" returns -div(u q) with first-order upwind face values
    (used for the depth); mode="advective" returns -(u . grad q) with
    one-sided upwind differences (used for thermal and moisture fields).
    """
    if mode == "flux":
        qx = np.where(u >= 0.0, q, shift_xp(q))
        qy = np.where(v >= 0.0, q, shift_yp(q))
        return -div_faces_to_center(u * qx, v * qy, grid)
    if mode == "advective":
        uc = avg_xface_to_center(u)
        vc = avg_yface_to_center(v)
        dqdx = np.where(
            uc > 0.0, (q - shift_xm(q)) / grid.dx, (shift_xp(q) - q) / grid.dx
        )
        dqdy = np.where(
            vc > 0.0, (q - shift_ym(q)) / grid.dy, (shift_yp(q) - q) / grid.dy
        )
        return -(uc * dqdx + vc * dqdy)
    raise ValueError(f"unknown transport mode {mode!r}")


def _upwind_diff(a, adv, axis, spacing):
    if axis == 0:
        back = (a - shift_xm(a)) / spacing
        fwd = (shift_xp(a) - a) / spacing
    else:
        back = (a - shift_ym(a)) / spacing
        fwd = (shift_yp(a) - a) / spacing
    return np.where(adv > 0.0, back, fwd)


def advect_velocity(u, v, u_adv, v_adv, grid):
    """Advective-form tendencies -(u_adv . grad) of u and v at their native points."""
    va_u = v_at_xfaces(v_adv)
    du = -(u_adv * _upwind_diff(u, u_adv, 0, grid.dx) + va_u * _upwind_diff(u, va_u, 1, grid.dy))
    ua_v = u_at_yfaces(u_adv)
    dv = -(ua_v * _upwind_diff(v, ua_v, 0, grid.dx) + v_adv * _upwind_diff(v, v_adv, 1, grid.dy))
    return du, dv


def transport_tendencies(fields, modes, u_adv, v_adv, grid):
    """Tendencies for a named collection of fields under fixed advecting winds.

    ``modes[name]`` is "velocity-u", "velocity-v", "flux" or "advective".
    The velocity tendencies are computed jointly so both components see the
    same averaged advecting winds.
    """
    out = {}
    if "u" in fields or "v" in fields:
        du, dv = advect_velocity(fields["u"], fields["v"], u_adv, v_adv, grid)
        out["u"] = du
        out["v"] = dv
    for name, arr in fields.items():
        if name in ("u", "v"):
            continue
        out[name] = advect_scalar_upwind(arr, u_adv, v_adv, grid, mode=modes[name])
    return out


def ssprk3_transport(state, u_adv, v_adv, dt):
    """Three-stage SSP Runge-Kutta transport of every prognostic field.

    The advecting winds are held fixed across all three stages.  Depth is
    transported in flux form, everything else in advective form.  An
    advective Courant number above 1 triggers a warning, not an error: the
    semi-implicit solver stabilises fast waves, not advection.
    """
    grid = state.grid
    courant = max(
        float(np.max(np.abs(u_adv))) * dt / grid.dx,
        float(np.max(np.abs(v_adv))) * dt / grid.dy,
    )
    if courant > 1.0 + 1e-12:
        warnings.warn(
            f"advective Courant number {courant:.3f} exceeds 1", CourantWarning, stacklevel=2
        )

    modes = {name: "flux" if name == "D" else "advective" for name in state.field_names()}
    q0 = state.fields()

    def stage(q):
        t = transport_tendencies(q, modes, u_adv, v_adv, grid)
        return {k: q[k] + dt * t[k] for k in q}

    q1 = stage(q0)
    q2 = {k: 0.75 * q0[k] + 0.25 * v1 for k, v1 in stage(q1).items()}
    qn = {k: (1.0 / 3.0) * q0[k] + (2.0 / 3.0) * v2 for k, v2 in stage(q2).items()}
    return state.with_fields(**qn)
