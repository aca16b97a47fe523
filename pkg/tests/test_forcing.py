"""Coriolis plus pressure-gradient-like forcing for both formulations."""

import numpy as np
import pytest

from moistsw.cases import InitConfig, default_physical_params, init_steady_jet, steady_jet_spec
from moistsw.core import ModelState, PhysicalParams, SaturationParams
from moistsw.forcing import equivalence_check, forcing_integrated, forcing_split
from moistsw.grid import Grid

G = 9.80616


@pytest.fixture
def grid():
    return Grid(nx=8, ny=8, Lx=8.0e5, Ly=8.0e5)


@pytest.fixture
def phys():
    return PhysicalParams(f=1e-4, g=G, H=3000.0, L=10.0)


@pytest.fixture
def sat():
    return SaturationParams(q0=0.007, nu=1.5)


def test_resting_uniform_state_unforced(grid, phys):
    z = np.zeros(grid.shape)
    s = ModelState.split(grid, z, z, np.full(grid.shape, phys.H), np.full(grid.shape, G), z, z)
    inc = forcing_split(s, phys, 600.0)
    assert np.all(inc.du == 0.0) and np.all(inc.dv == 0.0)


def test_linear_in_dt_frac(grid, phys):
    r = np.random.default_rng(0)
    s = ModelState.split(
        grid,
        r.normal(0, 5, grid.shape),
        r.normal(0, 5, grid.shape),
        r.uniform(2000, 4000, grid.shape),
        r.uniform(9.0, 9.8, grid.shape),
        np.zeros(grid.shape),
        np.zeros(grid.shape),
    )
    one = forcing_split(s, phys, 1.0)
    two = forcing_split(s, phys, 2.0)
    assert np.array_equal(two.du, 2.0 * one.du)
    assert np.array_equal(two.dv, 2.0 * one.dv)


def test_linear_b_profile_single_column(phys):
    # uniform D, b varying in y only: dv = -dt*(D/2)*db/dy at v-points
    grid = Grid(nx=4, ny=8, Lx=4.0e5, Ly=8.0e5)
    D0 = 2500.0
    slope = 1e-6
    y = grid.y_centers()
    b_row = 9.0 + slope * y
    b = np.broadcast_to(b_row[None, :], grid.shape).copy()
    D = np.full(grid.shape, D0)
    z = np.zeros(grid.shape)
    s = ModelState.split(grid, z, z, D, b, z.copy(), z.copy())
    inc = forcing_split(s, phys, 1.0)
    # hand-evaluated centred difference at the first v-point of column 0
    dbdy = (b_row[1] - b_row[0]) / grid.dy
    expected = -(0.0 + 0.5 * D0 * dbdy)
    assert inc.dv[0, 0] == pytest.approx(expected, rel=1e-12)
    assert np.allclose(inc.du, 0.0)


def test_discrete_jet_balance(grid):
    params = default_physical_params()
    spec = steady_jet_spec()
    g = Grid(nx=32, ny=32, Lx=spec.Lx, Ly=spec.Ly)
    split, _ = init_steady_jet(spec, params, InitConfig(), g, balance="discrete")
    inc = forcing_split(split, params, 1.0)
    scale = params.f * spec.u0
    assert np.max(np.abs(inc.du)) <= 1e-12 * scale
    assert np.max(np.abs(inc.dv)) <= 1e-12 * scale


def test_analytic_jet_balance_is_second_order():
    params = default_physical_params()
    spec = steady_jet_spec()
    residuals = []
    for n in (32, 64):
        g = Grid(nx=n, ny=n, Lx=spec.Lx, Ly=spec.Ly)
        split, _ = init_steady_jet(spec, params, InitConfig(), g, balance="analytic")
        inc = forcing_split(split, params, 1.0)
        residuals.append(np.max(np.abs(inc.dv)))
    assert 3.5 <= residuals[0] / residuals[1] <= 4.5


class TestIntegratedForcing:
    def _pair(self, grid, phys, sat, q_t_value, seed=0):
        r = np.random.default_rng(seed)
        u = r.normal(0, 5, grid.shape)
        v = r.normal(0, 5, grid.shape)
        D = r.uniform(2500, 3500, grid.shape)
        be = r.uniform(9.0, 9.6, grid.shape)
        qt = np.full(grid.shape, q_t_value)
        return ModelState.integrated(grid, u, v, D, be, qt)

    def test_dry_total_matches_split_on_be(self, grid, phys, sat):
        integ = self._pair(grid, phys, sat, 0.0)
        split = ModelState.split(
            grid, integ.u, integ.v, integ.D, integ.b_e.copy(), np.zeros(grid.shape), np.zeros(grid.shape)
        )
        inc_i = forcing_integrated(integ, phys, sat, 1.0)
        inc_s = forcing_split(split, phys, 1.0)
        assert np.array_equal(inc_i.du, inc_s.du)
        assert np.array_equal(inc_i.dv, inc_s.dv)

    def test_beta2_zero_matches_split_on_be(self, grid, sat):
        phys0 = PhysicalParams(f=1e-4, g=G, H=3000.0, L=0.0)
        integ = self._pair(grid, phys0, sat, 0.02, seed=1)
        split = ModelState.split(
            grid, integ.u, integ.v, integ.D, integ.b_e.copy(), np.zeros(grid.shape), np.zeros(grid.shape)
        )
        inc_i = forcing_integrated(integ, phys0, sat, 1.0)
        inc_s = forcing_split(split, phys0, 1.0)
        assert np.array_equal(inc_i.du, inc_s.du)
        assert np.array_equal(inc_i.dv, inc_s.dv)

    def test_subsaturated_equals_split_on_total(self, grid, phys, sat):
        # q_t far below saturation: diagnosis returns q_t, so the integrated
        # forcing equals the split forcing on b = b_e + beta2*q_t
        integ = self._pair(grid, phys, sat, 1e-4, seed=2)
        b = integ.b_e + phys.beta2 * integ.q_t
        split = ModelState.split(
            grid, integ.u, integ.v, integ.D, b, integ.q_t.copy(), np.zeros(grid.shape)
        )
        inc_i = forcing_integrated(integ, phys, sat, 1.0)
        inc_s = forcing_split(split, phys, 1.0)
        assert np.allclose(inc_i.du, inc_s.du, rtol=1e-13, atol=1e-18)
        assert np.allclose(inc_i.dv, inc_s.dv, rtol=1e-13, atol=1e-18)


class TestEquivalence:
    def test_dry_pair_is_exact(self, grid, phys, sat):
        r = np.random.default_rng(3)
        u = r.normal(0, 5, grid.shape)
        v = r.normal(0, 5, grid.shape)
        D = r.uniform(2500, 3500, grid.shape)
        be = r.uniform(9.0, 9.6, grid.shape)
        z = np.zeros(grid.shape)
        split = ModelState.split(grid, u, v, D, be.copy(), z.copy(), z.copy())
        integ = ModelState.integrated(grid, u, v, D, be, z.copy())
        assert equivalence_check(split, integ, phys, sat) == 0.0

    def test_saturated_fair_pair_from_initialization(self, phys, sat):
        params = default_physical_params()
        spec = steady_jet_spec()
        g = Grid(nx=24, ny=24, Lx=spec.Lx, Ly=spec.Ly)
        split, integ = init_steady_jet(spec, params, InitConfig(), g)
        scale = params.f * spec.u0
        assert equivalence_check(split, integ, params, spec.saturation) <= 1e-12 * scale

    def test_mismatched_vapour_reports_nonzero(self, grid, phys, sat):
        r = np.random.default_rng(4)
        u = r.normal(0, 5, grid.shape)
        v = r.normal(0, 5, grid.shape)
        D = r.uniform(2500, 3500, grid.shape)
        be = r.uniform(9.0, 9.6, grid.shape)
        qt = np.full(grid.shape, 5e-5)
        split = ModelState.split(
            grid, u, v, D, be + phys.beta2 * 2e-4, np.full(grid.shape, 2e-4), np.zeros(grid.shape)
        )
        integ = ModelState.integrated(grid, u, v, D, be, qt)
        assert equivalence_check(split, integ, phys, sat) > 0.0
