"""Physical parameters, prognostic state containers and field diagnostics.

Two formulations of the moist thermal shallow water equations share one state
container.  The split formulation carries (u, v, D, b, q_v, q_c) and couples
moisture through an explicit conversion term; the integrated formulation
carries (u, v, D, b_e, q_t) in conserved variables and needs no source terms.
The two thermal variables are related by b_e = b - beta2 * q_v.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ModelError",
    "ShapeMismatchError",
    "DegenerateReferenceError",
    "SaturationDomainError",
    "ConfigurationError",
    "InitializationError",
    "SolverConvergenceError",
    "StepError",
    "SPLIT",
    "INTEGRATED",
    "PhysicalParams",
    "SaturationParams",
    "ModelState",
    "ReferenceState",
    "be_from_b",
    "b_from_be",
    "l2_norm",
    "l2_error",
    "mass_total",
    "moisture_total",
    "dump_field",
    "read_field_dump",
]

SPLIT = "split"
INTEGRATED = "integrated"


class ModelError(Exception):
    """Base class for model errors."""


class ShapeMismatchError(ModelError, ValueError):
    """Fields that must share a grid have different shapes."""


class DegenerateReferenceError(ModelError, ValueError):
    """A normalised error was requested against a zero-norm reference."""


class SaturationDomainError(ModelError, ValueError):
    """Saturation evaluation requires D + B > 0 everywhere."""


class ConfigurationError(ModelError, ValueError):
    """Invalid run configuration (grid, placement/solver pairing, parameters)."""


class InitializationError(ModelError, RuntimeError):
    """The initialisation fixed-point iteration failed to converge."""


class SolverConvergenceError(ModelError, RuntimeError):
    """A Krylov solve exceeded its iteration cap."""

    def __init__(self, message, iterations=None, residual_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


class StepError(ModelError, RuntimeError):
    """A timestep failed; carries the step index and the underlying cause."""

    def __init__(self, step_index, cause):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause


@dataclass(frozen=True)
class PhysicalParams:
    """Planetary and thermal constants.

    beta2 is the pseudo-latent-heat coefficient g*L; it is stored but the
    constructor derives it from L so the identity beta2 = g*L holds exactly.
    Topography B may be a scalar (broadcast) or one value per cell centre.
    """

    f: float
    g: float
    H: float
    L: float = 10.0
    topography: float | np.ndarray = 0.0
    beta2: float = field(init=False)

    def __post_init__(self):
        if self.g <= 0.0:
            raise ConfigurationError("g must be positive")
        if self.H <= 0.0:
            raise ConfigurationError("H must be positive")
        object.__setattr__(self, "beta2", self.g * self.L)


@dataclass(frozen=True)
class SaturationParams:
    """Scale q0 and exponent factor nu of the saturation function."""

    q0: float
    nu: float

    def __post_init__(self):
        if self.q0 <= 0.0:
            raise ConfigurationError("q0 must be positive")
        if self.nu <= 0.0:
            raise ConfigurationError("nu must be positive")


def _check_same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"fields do not share a grid: shapes {sorted(shapes)}")


class ModelState:
    """Prognostic fields of one formulation on a shared C-grid.

    Split states carry moisture (q_v, q_c) and thermal field b; integrated
    states carry q_t and thermal field b_e.  Velocities sit on faces,
    scalars at centres; all arrays have shape (grid.nx, grid.ny).
    """

    __slots__ = ("formulation", "grid", "u", "v", "D", "thermal", "moisture")

    def __init__(self, formulation, grid, u, v, D, thermal, moisture):
        if formulation not in (SPLIT, INTEGRATED):
            raise ConfigurationError(f"unknown formulation {formulation!r}")
        n_moist = 2 if formulation == SPLIT else 1
        if len(moisture) != n_moist:
            raise ConfigurationError(
                f"{formulation} formulation carries {n_moist} moisture field(s), got {len(moisture)}"
            )
        _check_same_shape(u, v, D, thermal, *moisture)
        if u.shape != grid.shape:
            raise ShapeMismatchError(f"fields of shape {u.shape} on grid {grid.shape}")
        self.formulation = formulation
        self.grid = grid
        self.u = u
        self.v = v
        self.D = D
        self.thermal = thermal
        self.moisture = tuple(moisture)

    @classmethod
    def split(cls, grid, u, v, D, b, q_v, q_c):
        return cls(SPLIT, grid, u, v, D, b, (q_v, q_c))

    @classmethod
    def integrated(cls, grid, u, v, D, b_e, q_t):
        return cls(INTEGRATED, grid, u, v, D, b_e, (q_t,))

    def _require(self, formulation, name):
        if self.formulation != formulation:
            raise AttributeError(f"{name} only exists in the {formulation} formulation")

    @property
    def b(self):
        self._require(SPLIT, "b")
        return self.thermal

    @property
    def q_v(self):
        self._require(SPLIT, "q_v")
        return self.moisture[0]

    @property
    def q_c(self):
        self._require(SPLIT, "q_c")
        return self.moisture[1]

    @property
    def b_e(self):
        self._require(INTEGRATED, "b_e")
        return self.thermal

    @property
    def q_t(self):
        self._require(INTEGRATED, "q_t")
        return self.moisture[0]

    def field_names(self):
        if self.formulation == SPLIT:
            return ("u", "v", "D", "b", "q_v", "q_c")
        return ("u", "v", "D", "b_e", "q_t")

    def fields(self):
        """Name -> array view of every prognostic field."""
        names = self.field_names()
        arrays = (self.u, self.v, self.D, self.thermal) + self.moisture
        return dict(zip(names, arrays))

    def get(self, name):
        return self.fields()[name]

    def copy(self):
        return ModelState(
            self.formulation,
            self.grid,
            self.u.copy(),
            self.v.copy(),
            self.D.copy(),
            self.thermal.copy(),
            tuple(m.copy() for m in self.moisture),
        )

    def with_fields(self, **updates):
        """New state with the named fields replaced (canonical field names)."""
        current = self.fields()
        for name in updates:
            if name not in current:
                raise KeyError(f"unknown field {name!r} for {self.formulation} state")
        current.update(updates)
        names = self.field_names()
        thermal_name = names[3]
        moist_names = names[4:]
        return ModelState(
            self.formulation,
            self.grid,
            current["u"],
            current["v"],
            current["D"],
            current[thermal_name],
            tuple(current[m] for m in moist_names),
        )


@dataclass(frozen=True)
class ReferenceState:
    """Linearisation point for the quasi-Newton operators.

    The reference velocity is identically zero by construction, so only the
    scalar reference fields are stored.  thermal_bar is b for the split
    variants and b_e for the integrated variant; qv_bar/qc_bar are present
    where the operator needs them.
    """

    D_bar: np.ndarray
    thermal_bar: np.ndarray
    qv_bar: Optional[np.ndarray] = None
    qc_bar: Optional[np.ndarray] = None


def be_from_b(b, q_v, beta2):
    """Equivalent buoyancy b_e = b - beta2 * q_v."""
    b = np.asarray(b)
    q_v = np.asarray(q_v)
    _check_same_shape(b, q_v)
    return b - beta2 * q_v


def b_from_be(b_e, q_v, beta2):
    """Buoyancy recovered from equivalent buoyancy, b = b_e + beta2 * q_v."""
    b_e = np.asarray(b_e)
    q_v = np.asarray(q_v)
    _check_same_shape(b_e, q_v)
    return b_e + beta2 * q_v


def l2_norm(a, grid):
    """Discrete L2 norm with uniform cell-area weighting."""
    return float(np.sqrt(np.sum(np.asarray(a) ** 2) * grid.cell_area))


def l2_error(a, reference, grid):
    """Normalised L2 error ||a - reference|| / ||reference||."""
    a = np.asarray(a)
    reference = np.asarray(reference)
    _check_same_shape(a, reference)
    ref_norm = l2_norm(reference, grid)
    if ref_norm == 0.0:
        raise DegenerateReferenceError("reference field has zero L2 norm")
    return l2_norm(a - reference, grid) / ref_norm


def mass_total(D, grid):
    """Total fluid volume sum(D) * dx * dy."""
    return float(np.sum(D) * grid.cell_area)


def moisture_total(state):
    """Domain-integrated moisture: q_v + q_c (split) or q_t (integrated)."""
    total = sum(np.sum(m) for m in state.moisture)
    return float(total * state.grid.cell_area)


def dump_field(path, arr, grid, time, name):
    """Write one field in the plain-text dump format.

    Header line ``nx ny dx dy time name`` followed by nx*ny floats in
    row-major order (index i outermost), 17 significant digits.
    """
    arr = np.asarray(arr)
    if arr.shape != grid.shape:
        raise ShapeMismatchError(f"field shape {arr.shape} does not match grid {grid.shape}")
    with open(path, "w") as fh:
        fh.write(f"{grid.nx} {grid.ny} {grid.dx:.17g} {grid.dy:.17g} {time:.17g} {name}\n")
        for row in arr:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_field_dump(path):
    """Parse a field dump; returns (array, meta dict)."""
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
        data = np.loadtxt(fh).reshape(nx, ny)
    return data, meta
