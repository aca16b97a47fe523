"""Non-transport forcing: Coriolis and the pressure-gradient-like terms.

Only the velocity components are forced; depth, thermal and moisture fields
evolve through transport (and, in the split formulation, the conversion
scheme).  Both formulations share one stencil; the integrated formulation
first diagnoses vapour from total moisture and rebuilds the effective
buoyancy b_e + beta2*q_v that multiplies the depth gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as gridops
from .core import INTEGRATED, SPLIT, ConfigurationError
from .physics import diagnose_qv_integrated, q_sat

__all__ = ["ForcingIncrement", "forcing_terms", "forcing_split", "forcing_integrated", "equivalence_check"]


@dataclass(frozen=True)
class ForcingIncrement:
    """Velocity increments at faces; scalar fields receive no forcing."""

    du: np.ndarray
    dv: np.ndarray


def forcing_terms(u, v, D, b_field, B, f, grid):
    """Left-hand-side forcing F = f k x u + b grad(D+B) + (D/2) grad b.

    b and D/2 are averaged from centres to the faces where the gradients
    live.  Returns the (x, y) components at u and v points.
    """
    gxD, gyD = gridops.grad_center_to_faces(np.asarray(D) + B, grid)
    gxb, gyb = gridops.grad_center_to_faces(b_field, grid)
    cor_u, cor_v = gridops.coriolis_term(u, v, f)
    fu = cor_u + gridops.avg_center_to_xface(b_field) * gxD + 0.5 * gridops.avg_center_to_xface(D) * gxb
    fv = cor_v + gridops.avg_center_to_yface(b_field) * gyD + 0.5 * gridops.avg_center_to_yface(D) * gyb
    return fu, fv


def forcing_split(state, phys, dt_frac):
    """Forcing increment -dt_frac * F for a split state."""
    if state.formulation != SPLIT:
        raise ConfigurationError("forcing_split requires a split state")
    fu, fv = forcing_terms(
        state.u, state.v, state.D, state.b, phys.topography, phys.f, state.grid
    )
    return ForcingIncrement(du=-dt_frac * fu, dv=-dt_frac * fv)


def forcing_integrated(state, phys, sat, dt_frac):
    """Forcing increment for an integrated state.

    Vapour is rediagnosed from q_t and the saturation function at every
    call, so the quasi-Newton loops always see a consistent pressure
    gradient.
    """
    if state.formulation != INTEGRATED:
        raise ConfigurationError("forcing_integrated requires an integrated state")
    qs = q_sat(state.D, phys.topography, state.b_e, sat, phys)
    q_v, _ = diagnose_qv_integrated(state.q_t, qs)
    b_star = state.b_e + phys.beta2 * q_v
    fu, fv = forcing_terms(
        state.u, state.v, state.D, b_star, phys.topography, phys.f, state.grid
    )
    return ForcingIncrement(du=-dt_frac * fu, dv=-dt_frac * fv)


def equivalence_check(split_state, integrated_state, phys, sat):
    """Maximum pointwise forcing discrepancy between a matched pair.

    For states related by b = b_e + beta2*q_v and q_t = q_v + q_c, with the
    integrated vapour diagnosis reproducing the split vapour, the two
    forcings agree; the returned maximum is a test diagnostic, never an
    error.
    """
    inc_s = forcing_split(split_state, phys, 1.0)
    inc_i = forcing_integrated(integrated_state, phys, sat, 1.0)
    return max(
        float(np.max(np.abs(inc_s.du - inc_i.du))),
        float(np.max(np.abs(inc_s.dv - inc_i.dv))),
    )
