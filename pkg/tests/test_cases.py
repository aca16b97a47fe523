"""Vapour fixed-point initialisation and the two planar test cases."""

import numpy as np
import pytest

from moistsw.cases import (
    InitConfig,
    default_physical_params,
    gravity_wave_spec,
    init_gravity_wave,
    init_steady_jet,
    newton_qv,
    steady_jet_spec,
)
from moistsw.core import (
    ConfigurationError,
    InitializationError,
    PhysicalParams,
    SaturationParams,
)
from moistsw.forcing import equivalence_check, forcing_split
from moistsw.grid import Grid
from moistsw.physics import q_sat

G = 9.80616


@pytest.fixture
def params():
    return default_physical_params()


def small_grid(n=16):
    return Grid(nx=n, ny=n, Lx=1e7, Ly=1e7)


class TestNewton:
    def test_decoupled_converges_in_one_update(self, params):
        # beta2 = 0 makes saturation independent of vapour: the first update
        # lands exactly on the fixed point
        phys = PhysicalParams(f=1e-4, g=G, H=params.H, L=0.0)
        sat = SaturationParams(q0=0.007, nu=1.5)
        grid = small_grid(8)
        b = np.full(grid.shape, G * 0.99)
        D = np.full(grid.shape, phys.H)
        init = InitConfig(newton_iterations=2, qv_guess=0.02)
        qv, be, qs = newton_qv(b, D, 0.0, sat, phys, init)
        expected = sat.q0 * np.exp(sat.nu * (1.0 - b / G))
        assert np.allclose(qv, expected, rtol=1e-14)
        assert np.array_equal(be, b)

    def test_jet_constants_converge_within_ten_iterations(self, params):
        # steady-jet setup: guess 0.02, nu = 1.5, q0 = 0.007
        spec = steady_jet_spec()
        grid = small_grid(32)
        y = grid.y_centers()
        amp = params.f * spec.u0 * spec.Ly / (2 * np.pi * spec.b0)
        D = np.broadcast_to(
            (params.H + amp * np.cos(2 * np.pi * y / spec.Ly))[None, :], grid.shape
        ).copy()
        b = np.full(grid.shape, spec.b0)
        init = InitConfig(newton_iterations=10, newton_tolerance=1e-10, qv_guess=0.02)
        qv, be, qs = newton_qv(b, D, 0.0, spec.saturation, params, init)
        assert np.max(np.abs(qs - qv)) < 1e-10

    def test_fixed_point_property(self, params):
        spec = gravity_wave_spec()
        grid = small_grid(16)
        D = np.full(grid.shape, params.H)
        b = np.full(grid.shape, spec.b0)
        init = InitConfig(qv_guess=0.03)
        qv, be, qs = newton_qv(b, D, 0.0, spec.saturation, params, init)
        # substituting the output back moves the vapour by < tolerance
        qs_back = q_sat(D, 0.0, b - params.beta2 * qv, spec.saturation, params)
        assert np.max(np.abs(qs_back - qv)) < 1e-10
        assert np.array_equal(be, b - params.beta2 * qv)

    def test_subsaturation_scaling(self, params):
        # xi scales the converged saturated vapour; the returned saturation
        # field is re-evaluated at the final b_e, so compare the vapour
        # against the xi = 0 fixed point
        spec = steady_jet_spec()
        grid = small_grid(8)
        D = np.full(grid.shape, params.H)
        b = np.full(grid.shape, spec.b0)
        qv_sat, _, _ = newton_qv(b, D, 0.0, spec.saturation, params, InitConfig(qv_guess=0.02))
        init = InitConfig(xi=0.25, qv_guess=0.02)
        qv, be, qs = newton_qv(b, D, 0.0, spec.saturation, params, init)
        assert np.allclose(qv, 0.75 * qv_sat, rtol=1e-9)
        assert np.array_equal(be, b - params.beta2 * qv)
        assert np.array_equal(qs, q_sat(D, 0.0, be, spec.saturation, params))

    def test_nonconvergence_raises_with_residual(self, params):
        spec = steady_jet_spec()
        grid = small_grid(8)
        D = np.full(grid.shape, params.H)
        b = np.full(grid.shape, spec.b0)
        init = InitConfig(newton_iterations=1, newton_tolerance=1e-14, qv_guess=0.3)
        with pytest.raises(InitializationError):
            newton_qv(b, D, 0.0, spec.saturation, params, init)


class TestSteadyJet:
    def test_zero_jet_gives_resting_uniform_state(self, params):
        spec = steady_jet_spec(u0=0.0)
        grid = small_grid(8)
        split, integ = init_steady_jet(spec, params, InitConfig(), grid)
        assert np.all(split.u == 0.0) and np.all(split.v == 0.0)
        assert np.allclose(split.D, params.H)
        assert np.ptp(split.b) == 0.0
        assert np.ptp(split.q_v) < 1e-15

    def test_oversaturated_moisture_layout(self, params):
        spec = steady_jet_spec()
        grid = small_grid(16)
        split, integ = init_steady_jet(spec, params, InitConfig(), grid)
        qs = q_sat(split.D, params.topography, split.b - params.beta2 * split.q_v,
                   spec.saturation, params)
        assert np.array_equal(split.q_v, qs)
        assert np.array_equal(split.q_c, qs)
        assert np.array_equal(integ.q_t, 2.0 * qs)

    def test_pair_relations_exact(self, params):
        spec = steady_jet_spec()
        grid = small_grid(16)
        split, integ = init_steady_jet(spec, params, InitConfig(), grid)
        assert np.array_equal(split.b, integ.b_e + params.beta2 * split.q_v)
        assert np.sum(split.q_v + split.q_c) == pytest.approx(np.sum(integ.q_t), rel=1e-15)
        assert equivalence_check(split, integ, params, spec.saturation) <= 1e-12 * params.f * spec.u0

    def test_discrete_balance(self, params):
        spec = steady_jet_spec()
        grid = small_grid(32)
        split, _ = init_steady_jet(spec, params, InitConfig(), grid, balance="discrete")
        inc = forcing_split(split, params, 1.0)
        scale = params.f * spec.u0
        assert max(np.max(np.abs(inc.du)), np.max(np.abs(inc.dv))) <= 1e-12 * scale

    def test_too_strong_jet_rejected(self, params):
        spec = steady_jet_spec(u0=2.0e4)
        with pytest.raises(ConfigurationError):
            init_steady_jet(spec, params, InitConfig(), small_grid(8))

    def test_wrong_case_tag(self, params):
        with pytest.raises(ConfigurationError):
            init_steady_jet(gravity_wave_spec(), params, InitConfig(), small_grid(8))


class TestGravityWave:
    def test_zero_bump_reduces_to_jet_base(self, params):
        spec = gravity_wave_spec(h0=0.0)
        grid = small_grid(16)
        split, integ = init_gravity_wave(spec, params, InitConfig(), grid)
        jet_spec = steady_jet_spec(q0=spec.saturation.q0, nu=spec.saturation.nu)
        jet_split, _ = init_steady_jet(jet_spec, params, InitConfig(), grid)
        assert np.array_equal(split.u, jet_split.u)
        assert np.array_equal(split.D, jet_split.D)
        assert np.all(integ.q_t == spec.q_t0)

    def test_bump_shape_and_extent(self, params):
        spec = gravity_wave_spec()
        grid = Grid(nx=90, ny=90, Lx=spec.Lx, Ly=spec.Ly)
        split, _ = init_gravity_wave(spec, params, InitConfig(), grid)
        base_spec = gravity_wave_spec(h0=0.0)
        base, _ = init_gravity_wave(base_spec, params, InitConfig(), grid)
        bump = split.D - base.D
        # the cone apex h0 is met only at the exact centre, which sits
        # between cell centres; the sampled peak loses at most the slope
        # times half a cell diagonal
        half_diag = 0.5 * np.hypot(grid.dx, grid.dy)
        assert spec.h0 * (1.0 - half_diag / spec.R_p) - 1e-9 <= bump.max() <= spec.h0
        x, y = grid.center_mesh()
        xc, yc = spec.center
        r = np.hypot(np.minimum(abs(x - xc), spec.Lx - abs(x - xc)),
                     np.minimum(abs(y - yc), spec.Ly - abs(y - yc)))
        assert np.all(bump[r > spec.R_p + grid.dx] == 0.0)
        i, j = np.unravel_index(np.argmax(bump), bump.shape)
        assert abs(x[i, j] - xc) <= grid.dx and abs(y[i, j] - yc) <= grid.dy

    def test_moisture_partition(self, params):
        spec = gravity_wave_spec()
        grid = small_grid(32)
        split, integ = init_gravity_wave(spec, params, InitConfig(), grid)
        qs = q_sat(split.D, params.topography, integ.b_e, spec.saturation, params)
        assert np.array_equal(split.q_v, np.minimum(integ.q_t, qs))
        assert np.max(np.abs((split.q_v + split.q_c) - integ.q_t)) <= np.spacing(spec.q_t0)
        assert np.sum(split.q_v + split.q_c) == pytest.approx(np.sum(integ.q_t), rel=1e-14)

    def test_planar_defaults_saturate_everywhere(self, params):
        # with the planar uniform-buoyancy background the saturation stays
        # well below the 0.03 total moisture, so the vapour diagnosis sits on
        # its saturated branch over the whole domain (cloud present everywhere)
        spec = gravity_wave_spec()
        grid = Grid(nx=50, ny=50, Lx=spec.Lx, Ly=spec.Ly)
        split, integ = init_gravity_wave(spec, params, InitConfig(), grid)
        qs = q_sat(integ.D, params.topography, integ.b_e, spec.saturation, params)
        assert np.all(integ.q_t >= qs)
        assert np.all(split.q_c > 0.0)
        assert qs.max() < spec.q_t0

    def test_pair_equivalence(self, params):
        spec = gravity_wave_spec()
        grid = small_grid(32)
        split, integ = init_gravity_wave(spec, params, InitConfig(), grid)
        scale = params.f * spec.u0
        assert equivalence_check(split, integ, params, spec.saturation) <= 1e-12 * scale
