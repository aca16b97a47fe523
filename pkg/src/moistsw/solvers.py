"""Quasi-Newton linear operators and their Krylov solves.

The dry operator couples (du, dv, dD, dtheta) through the linearised wave
terms; its solve eliminates the thermal increment analytically, solves a
reduced velocity-depth system and reconstructs the thermal field.  The moist
operator keeps buoyancy and both moisture species in a monolithic six-field
system with a linearised conversion term.

References are frozen at the start of each step (quasi-Newton: the Jacobian
is not rebuilt inside the iteration).  The depth row uses the flux-form
linearisation div(Dbar * du), whose cell sum telescopes on the periodic
grid, so the implicit increments are exactly mass-neutral at any iteration
count.

Krylov solves are preconditioned with the exact inverse of the
constant-coefficient operator (domain-mean references), applied per Fourier
mode; for uniform references the preconditioned system is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.sparse import linalg as spla

from . import grid as gridops
from .core import (
    INTEGRATED,
    SPLIT,
    ConfigurationError,
    ReferenceState,
    ShapeMismatchError,
    SolverConvergenceError,
)
from .physics import diagnose_qv_integrated, q_sat

__all__ = [
    "KrylovConfig",
    "SolveStats",
    "DryOperator",
    "MoistOperator",
    "dry_operator_from_state",
    "moist_operator_from_state",
    "apply_dry",
    "solve_dry",
    "apply_moist",
    "solve_moist",
    "linearized_P",
]

METHODS = ("cg", "gmres", "bicgstab")


@dataclass(frozen=True)
class KrylovConfig:
    """Iterative-solve controls.

    The monolithic systems are nonsymmetric (advective couplings, one-sided
    conversion terms), so the default method is BiCGStab; conjugate
    gradients remain selectable.
    """

    rel_tolerance: float = 1e-8
    abs_tolerance: float = 1e-12
    max_iterations: int = 500
    method: str = "bicgstab"

    def __post_init__(self):
        if self.rel_tolerance <= 0.0 or self.abs_tolerance <= 0.0:
            raise ConfigurationError("Krylov tolerances must be positive")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown Krylov method {self.method!r}; options {sorted(METHODS)}")


@dataclass
class SolveStats:
    iterations: int
    residual_norm: float


def _fourier_symbols(grid):
    """Per-mode symbols of the staggered difference and average stencils.

    Built on the half-spectrum (rfft2 layout) of real (nx, ny) fields.
    """
    ex = np.exp(2j * np.pi * np.fft.fftfreq(grid.nx))[:, None]
    ey = np.exp(2j * np.pi * np.fft.rfftfreq(grid.ny))[None, :]
    sym = {
        "gx": (ex - 1.0) / grid.dx,
        "gy": (ey - 1.0) / grid.dy,
        "divx": (1.0 - 1.0 / ex) / grid.dx,
        "divy": (1.0 - 1.0 / ey) / grid.dy,
        # four-point averages onto the opposite face points
        "v_to_u": 0.25 * (1.0 + ex) * (1.0 + 1.0 / ey),
        "u_to_v": 0.25 * (1.0 + 1.0 / ex) * (1.0 + ey),
    }
    return sym


class _BlockPreconditioner:
    """Exact inverse of the constant-coefficient operator, per Fourier mode."""

    def __init__(self, blocks, grid):
        # blocks: (nx, ny//2+1, n, n) complex; invert once and store each
        # (a, b) entry as a contiguous plane for fast mode-wise products
        self.inv = np.ascontiguousarray(np.moveaxis(np.linalg.inv(blocks), (2, 3), (0, 1)))
        self.grid = grid
        self.n = blocks.shape[-1]

    def apply(self, stacked):
        """Apply to an (n, nx, ny) stack of real fields."""
        hat = sfft.rfft2(stacked, axes=(-2, -1))
        sol = np.empty_like(hat)
        # unrolled block product; faster than einsum for these tiny blocks
        for a in range(self.n):
            acc = self.inv[a, 0] * hat[0]
            for b in range(1, self.n):
                acc += self.inv[a, b] * hat[b]
            sol[a] = acc
        return sfft.irfft2(sol, s=self.grid.shape, axes=(-2, -1))

    def as_linear_operator(self):
        grid = self.grid
        npts = grid.nx * grid.ny
        n = self.n

        def matvec(x):
            stacked = x.reshape((n,) + grid.shape)
            return self.apply(stacked).ravel()

        return spla.LinearOperator((n * npts, n * npts), matvec=matvec)


def _round_sig(x, digits=3):
    return float(f"{x:.{digits}e}")


@lru_cache(maxsize=64)
def _dry_preconditioner(grid, dt, alpha, f, b0, D0):
    sym = _fourier_symbols(grid)
    nkx, nky = sym["gx"].shape[0], sym["gy"].shape[1]
    a = alpha * dt
    M = np.zeros((nkx, nky, 3, 3), dtype=complex)
    M[..., 0, 0] = 1.0
    M[..., 0, 1] = -a * f * sym["v_to_u"]
    M[..., 0, 2] = a * b0 * sym["gx"]
    M[..., 1, 0] = a * f * sym["u_to_v"]
    M[..., 1, 1] = 1.0
    M[..., 1, 2] = a * b0 * sym["gy"]
    M[..., 2, 0] = dt * D0 * sym["divx"]
    M[..., 2, 1] = dt * D0 * sym["divy"]
    M[..., 2, 2] = 1.0
    return _BlockPreconditioner(M, grid)


@lru_cache(maxsize=64)
def _moist_preconditioner(grid, dt, alpha, f, b0, D0, qs0, beta2, nu_g):
    sym = _fourier_symbols(grid)
    nkx, nky = sym["gx"].shape[0], sym["gy"].shape[1]
    a = alpha * dt
    cv = 1.0 - qs0 * beta2 * nu_g  # dq_v coefficient of the linearised conversion
    cD = qs0 / D0
    cb = qs0 * nu_g
    M = np.zeros((nkx, nky, 6, 6), dtype=complex)
    M[..., 0, 0] = 1.0
    M[..., 0, 1] = -a * f * sym["v_to_u"]
    M[..., 0, 2] = a * b0 * sym["gx"]
    M[..., 1, 0] = a * f * sym["u_to_v"]
    M[..., 1, 1] = 1.0
    M[..., 1, 2] = a * b0 * sym["gy"]
    M[..., 2, 0] = dt * D0 * sym["divx"]
    M[..., 2, 1] = dt * D0 * sym["divy"]
    M[..., 2, 2] = 1.0
    M[..., 3, 2] = dt * beta2 * cD
    M[..., 3, 3] = 1.0 + dt * beta2 * cb
    M[..., 3, 4] = dt * beta2 * cv
    M[..., 4, 2] = dt * cD
    M[..., 4, 3] = dt * cb
    M[..., 4, 4] = 1.0 + dt * cv
    M[..., 5, 2] = -dt * cD
    M[..., 5, 3] = -dt * cb
    M[..., 5, 4] = -dt * cv
    M[..., 5, 5] = 1.0
    return _BlockPreconditioner(M, grid)


def _dot(a, b):
    return float(np.dot(a.ravel(), b.ravel()))


def _norm(a):
    return float(np.linalg.norm(a.ravel()))


def _bicgstab(A, M, b, tol, maxiter):
    """Preconditioned BiCGStab (van der Vorst) on stacked field arrays.

    Maintains the true residual of A x = b, so the convergence test matches
    the unpreconditioned contract.
    """
    x = np.zeros_like(b)
    r = b.copy()
    rhat = b.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxiter + 1):
        rho_new = _dot(rhat, r)
        if rho_new == 0.0 or omega == 0.0:
            break  # breakdown; fall through to the convergence check
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = M(p)
        v = A(phat)
        denom = _dot(rhat, v)
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if _norm(s) <= tol:
            x = x + alpha * phat
            return x, it, _norm(s)
        shat = M(s)
        t = A(shat)
        tt = _dot(t, t)
        if tt == 0.0:
            break
        omega = _dot(t, s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        if _norm(r) <= tol:
            return x, it, _norm(r)
    res = _norm(b - A(x))
    if res <= tol:
        return x, maxiter, res
    raise SolverConvergenceError(
        f"bicgstab did not converge in {maxiter} iterations (|residual| = {res:.3e})",
        iterations=maxiter,
        residual_norm=res,
    )


def _pcg(A, M, b, tol, maxiter):
    """Preconditioned conjugate gradients on stacked field arrays."""
    x = np.zeros_like(b)
    r = b.copy()
    z = M(r)
    p = z.copy()
    rz = _dot(r, z)
    for it in range(1, maxiter + 1):
        q = A(p)
        pq = _dot(p, q)
        if pq == 0.0:
            break
        alpha = rz / pq
        x = x + alpha * p
        r = r - alpha * q
        if _norm(r) <= tol:
            return x, it, _norm(r)
        z = M(r)
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    res = _norm(b - A(x))
    if res <= tol:
        return x, maxiter, res
    raise SolverConvergenceError(
        f"cg did not converge in {maxiter} iterations (|residual| = {res:.3e})",
        iterations=maxiter,
        residual_norm=res,
    )


def _krylov(matvec_fields, rhs_fields, grid, kcfg, precond=None):
    """Run the configured Krylov method on stacked (n, nx, ny) arrays.

    Returns (solution fields, SolveStats); raises SolverConvergenceError
    when the iteration cap is hit.  The returned increment x satisfies
    |A x - b| <= rel_tolerance * |b| + abs_tolerance in the flat 2-norm.
    """
    n = len(rhs_fields)
    b = np.stack([np.asarray(f, dtype=float) for f in rhs_fields])
    if not np.any(b):
        return [np.zeros(grid.shape) for _ in range(n)], SolveStats(0, 0.0)
    tol = kcfg.rel_tolerance * _norm(b) + kcfg.abs_tolerance

    def A(x):
        return np.stack(matvec_fields(list(x)))

    if precond is not None:
        M = precond.apply
    else:
        M = lambda x: x  # noqa: E731

    if kcfg.method == "bicgstab":
        x, iters, res = _bicgstab(A, M, b, tol, kcfg.max_iterations)
    elif kcfg.method == "cg":
        x, iters, res = _pcg(A, M, b, tol, kcfg.max_iterations)
    else:  # gmres via scipy
        npts = grid.nx * grid.ny
        Aop = spla.LinearOperator(
            (n * npts, n * npts), matvec=lambda v: A(v.reshape(b.shape)).ravel()
        )
        Mop = precond.as_linear_operator() if precond is not None else None
        iters = 0

        def count(_):
            nonlocal iters
            iters += 1

        sol, info = spla.gmres(
            Aop,
            b.ravel(),
            rtol=kcfg.rel_tolerance,
            atol=kcfg.abs_tolerance,
            maxiter=kcfg.max_iterations,
            M=Mop,
            callback=count,
            callback_type="legacy",
        )
        res = float(np.linalg.norm(Aop.matvec(sol) - b.ravel()))
        if info != 0:
            raise SolverConvergenceError(
                f"gmres did not converge in {kcfg.max_iterations} iterations "
                f"(|residual| = {res:.3e})",
                iterations=iters,
                residual_norm=res,
            )
        x = sol.reshape(b.shape)
    return [x[k] for k in range(n)], SolveStats(iters, res)


class DryOperator:
    """Linearisation of the wave dynamics about a resting reference.

    variant "split" uses the buoyancy reference directly; variant
    "integrated" augments it with beta2 * qv_bar in the pressure-gradient
    coefficient.  The thermal increment obeys
    dtheta = -dt * (du . grad) theta_bar + theta_r and is eliminated from
    the solve.
    """

    def __init__(self, grid, reference, alpha, dt, phys, variant):
        if variant not in (SPLIT, INTEGRATED):
            raise ConfigurationError(f"unknown dry-operator variant {variant!r}")
        self.grid = grid
        self.reference = reference
        self.alpha = alpha
        self.dt = dt
        self.f = phys.f
        self.variant = variant
        theta = reference.thermal_bar
        if variant == INTEGRATED:
            if reference.qv_bar is None:
                raise ConfigurationError("integrated dry operator needs a vapour reference")
            bstar = theta + phys.beta2 * reference.qv_bar
        else:
            bstar = theta
        self.bstar_xf = gridops.avg_center_to_xface(bstar)
        self.bstar_yf = gridops.avg_center_to_yface(bstar)
        self.gx_bstar, self.gy_bstar = gridops.grad_center_to_faces(bstar, grid)
        self.D_xf = gridops.avg_center_to_xface(reference.D_bar)
        self.D_yf = gridops.avg_center_to_yface(reference.D_bar)
        self.gx_theta, self.gy_theta = gridops.grad_center_to_faces(theta, grid)
        self._mean_b = float(np.mean(bstar))
        self._mean_D = float(np.mean(reference.D_bar))

    def _advect_reference(self, du, dv):
        """(du . grad) theta_bar at cell centres."""
        return gridops.avg_xface_to_center(du * self.gx_theta) + gridops.avg_yface_to_center(
            dv * self.gy_theta
        )

    def _wave_rows(self, du, dv, dD, bstar_grad_term=True):
        """Velocity rows without the thermal-gradient contribution."""
        a = self.alpha * self.dt
        gxD, gyD = gridops.grad_center_to_faces(dD, self.grid)
        ru = du - a * self.f * gridops.v_at_xfaces(dv) + a * self.bstar_xf * gxD
        rv = dv + a * self.f * gridops.u_at_yfaces(du) + a * self.bstar_yf * gyD
        if bstar_grad_term:
            ru = ru + 0.5 * a * gridops.avg_center_to_xface(dD) * self.gx_bstar
            rv = rv + 0.5 * a * gridops.avg_center_to_yface(dD) * self.gy_bstar
        return ru, rv

    def _depth_row(self, du, dv, dD):
        return dD + self.dt * gridops.div_faces_to_center(
            self.D_xf * du, self.D_yf * dv, self.grid
        )

    def apply(self, du, dv, dD, dtheta):
        """Full operator on an increment (du, dv, dD, dtheta)."""
        for arr in (du, dv, dD, dtheta):
            if arr.shape != self.grid.shape:
                raise ShapeMismatchError(f"increment shape {arr.shape} on grid {self.grid.shape}")
        a = self.alpha * self.dt
        ru, rv = self._wave_rows(du, dv, dD)
        gxt, gyt = gridops.grad_center_to_faces(dtheta, self.grid)
        ru = ru + 0.5 * a * self.D_xf * gxt
        rv = rv + 0.5 * a * self.D_yf * gyt
        rD = self._depth_row(du, dv, dD)
        rtheta = dtheta + self.dt * self._advect_reference(du, dv)
        return ru, rv, rD, rtheta

    def _reduced_apply(self, du, dv, dD):
        """Velocity-depth system after eliminating the thermal increment."""
        a = self.alpha * self.dt
        ru, rv = self._wave_rows(du, dv, dD)
        adv = self._advect_reference(du, dv)
        gxa, gya = gridops.grad_center_to_faces(adv, self.grid)
        ru = ru - 0.5 * a * self.dt * self.D_xf * gxa
        rv = rv - 0.5 * a * self.dt * self.D_yf * gya
        return ru, rv, self._depth_row(du, dv, dD)

    def _preconditioner(self):
        return _dry_preconditioner(
            self.grid,
            self.dt,
            self.alpha,
            self.f,
            _round_sig(self._mean_b),
            _round_sig(self._mean_D),
        )

    def solve(self, u_r, v_r, D_r, theta_r, kcfg):
        """Solve S(dchi) = residual; returns (du, dv, dD, dtheta, stats)."""
        a = self.alpha * self.dt
        gxt, gyt = gridops.grad_center_to_faces(theta_r, self.grid)
        rhs_u = u_r - 0.5 * a * self.D_xf * gxt
        rhs_v = v_r - 0.5 * a * self.D_yf * gyt

        def matvec(fields):
            return self._reduced_apply(*fields)

        (du, dv, dD), stats = _krylov(
            matvec, [rhs_u, rhs_v, D_r], self.grid, kcfg, precond=self._preconditioner()
        )
        dtheta = -self.dt * self._advect_reference(du, dv) + theta_r
        return du, dv, dD, dtheta, stats


class MoistOperator:
    """Monolithic linearisation including vapour and cloud.

    The conversion term is linearised about the reference saturation,
    evaluated once at construction from (D_bar, b_bar, qv_bar); topography
    is ignored in the linearisation.
    """

    def __init__(self, grid, reference, alpha, dt, phys, sat):
        if reference.qv_bar is None or reference.qc_bar is None:
            raise ConfigurationError("moist operator needs vapour and cloud references")
        self.grid = grid
        self.reference = reference
        self.alpha = alpha
        self.dt = dt
        self.phys = phys
        self.sat = sat
        b_bar = reference.thermal_bar
        self.b_xf = gridops.avg_center_to_xface(b_bar)
        self.b_yf = gridops.avg_center_to_yface(b_bar)
        self.gx_b, self.gy_b = gridops.grad_center_to_faces(b_bar, grid)
        self.D_xf = gridops.avg_center_to_xface(reference.D_bar)
        self.D_yf = gridops.avg_center_to_yface(reference.D_bar)
        self.grad_refs = {
            "b": (self.gx_b, self.gy_b),
            "q_v": gridops.grad_center_to_faces(reference.qv_bar, grid),
            "q_c": gridops.grad_center_to_faces(reference.qc_bar, grid),
        }
        be_bar = b_bar - phys.beta2 * reference.qv_bar
        self.qsat_bar = q_sat(reference.D_bar, 0.0, be_bar, sat, phys)
        self._mean_b = float(np.mean(b_bar))
        self._mean_D = float(np.mean(reference.D_bar))
        self._mean_qsat = float(np.mean(self.qsat_bar))

    def linearized_P(self, dD, db, dqv):
        """First-order conversion response to (dD, db, dq_v)."""
        nu_g = self.sat.nu / self.phys.g
        return dqv + self.qsat_bar * (
            dD / self.reference.D_bar + nu_g * db - self.phys.beta2 * nu_g * dqv
        )

    def _advect(self, name, du, dv):
        gx, gy = self.grad_refs[name]
        return gridops.avg_xface_to_center(du * gx) + gridops.avg_yface_to_center(dv * gy)

    def apply(self, du, dv, dD, db, dqv, dqc):
        for arr in (du, dv, dD, db, dqv, dqc):
            if arr.shape != self.grid.shape:
                raise ShapeMismatchError(f"increment shape {arr.shape} on grid {self.grid.shape}")
        a = self.alpha * self.dt
        gxD, gyD = gridops.grad_center_to_faces(dD, self.grid)
        gxb, gyb = gridops.grad_center_to_faces(db, self.grid)
        ru = (
            du
            - a * self.f_term(dv, "u")
            + a * (self.b_xf * gxD + 0.5 * gridops.avg_center_to_xface(dD) * self.gx_b)
            + 0.5 * a * self.D_xf * gxb
        )
        rv = (
            dv
            + a * self.f_term(du, "v")
            + a * (self.b_yf * gyD + 0.5 * gridops.avg_center_to_yface(dD) * self.gy_b)
            + 0.5 * a * self.D_yf * gyb
        )
        rD = dD + self.dt * gridops.div_faces_to_center(
            self.D_xf * du, self.D_yf * dv, self.grid
        )
        P = self.linearized_P(dD, db, dqv)
        rb = db + self.dt * self._advect("b", du, dv) + self.dt * self.phys.beta2 * P
        rqv = dqv + self.dt * self._advect("q_v", du, dv) + self.dt * P
        rqc = dqc + self.dt * self._advect("q_c", du, dv) - self.dt * P
        return ru, rv, rD, rb, rqv, rqc

    def f_term(self, w, row):
        if row == "u":
            return self.phys.f * gridops.v_at_xfaces(w)
        return self.phys.f * gridops.u_at_yfaces(w)

    def _preconditioner(self):
        return _moist_preconditioner(
            self.grid,
            self.dt,
            self.alpha,
            self.phys.f,
            _round_sig(self._mean_b),
            _round_sig(self._mean_D),
            _round_sig(self._mean_qsat),
            self.phys.beta2,
            self.sat.nu / self.phys.g,
        )

    def solve(self, u_r, v_r, D_r, b_r, qv_r, qc_r, kcfg):
        def matvec(fields):
            return self.apply(*fields)

        fields, stats = _krylov(
            matvec,
            [u_r, v_r, D_r, b_r, qv_r, qc_r],
            self.grid,
            kcfg,
            precond=self._preconditioner(),
        )
        return (*fields, stats)


def dry_operator_from_state(state, phys, sat, alpha, dt):
    """Dry operator linearised about the time-level-n fields.

    For the integrated formulation the vapour reference is rediagnosed from
    the step-start total moisture and saturation.
    """
    if state.formulation == SPLIT:
        ref = ReferenceState(D_bar=state.D, thermal_bar=state.b)
        return DryOperator(state.grid, ref, alpha, dt, phys, SPLIT)
    qs = q_sat(state.D, phys.topography, state.b_e, sat, phys)
    qv_bar, _ = diagnose_qv_integrated(state.q_t, qs)
    ref = ReferenceState(D_bar=state.D, thermal_bar=state.b_e, qv_bar=qv_bar)
    return DryOperator(state.grid, ref, alpha, dt, phys, INTEGRATED)


def moist_operator_from_state(state, phys, sat, alpha, dt):
    if state.formulation != SPLIT:
        raise ConfigurationError("the moist operator linearises the split formulation")
    ref = ReferenceState(
        D_bar=state.D, thermal_bar=state.b, qv_bar=state.q_v, qc_bar=state.q_c
    )
    return MoistOperator(state.grid, ref, alpha, dt, phys, sat)


# Functional aliases mirroring the operator methods.

def apply_dry(op, dchi):
    return op.apply(*dchi)


def solve_dry(op, residual, kcfg):
    return op.solve(*residual, kcfg)


def apply_moist(op, dchi):
    return op.apply(*dchi)


def solve_moist(op, residual, kcfg):
    return op.solve(*residual, kcfg)


def linearized_P(op, dD, db, dqv):
    return op.linearized_P(dD, db, dqv)
