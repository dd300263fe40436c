"""Tests for src.ensemble -- detuning grids and the ensemble average.

Covers:
- Lineshapes, uniform and clustered axes
- Grid construction for both quadrature layouts
- Population-map lattice in (delta_o, delta_mu)
- Ensemble polarisations: homogeneous limit, linearity in N, symmetries
- Linear susceptibilities against finite differences
- Population-difference map and signal absorption rate
"""

import math

import numpy as np
import pytest

from src.core_model import build_liouvillian, steady_state_atom
from src.ensemble import (
    build_detuning_grid,
    clustered_axis,
    ensemble_response,
    lineshape_density,
    population_difference_map,
    population_lattice,
    signal_absorption_rate,
    uniform_axis,
)
from src.models import (
    TWO_PI,
    AtomDetunings,
    AtomParams,
    DensityInvariantError,
    FieldState,
    InhomogeneousSpec,
    LineShape,
    Quadrature,
)

ATOM = AtomParams(
    f_mu=5.186e9, f_opt=195113.30e9,
    g_mu=TWO_PI * 0.2, g_s=TWO_PI * 3.0, g_p=TWO_PI * 3.0,
)

# Narrow lines so a handful of nodes overlaps the homogeneous response.
SMALL = InhomogeneousSpec(fwhm_opt=2e6, fwhm_spin=1e6, n_opt=5, n_spin=5)


# ============================================================================
# Axes
# ============================================================================

class TestAxes:

    @pytest.mark.parametrize("shape", list(LineShape))
    def test_lineshape_peak_and_half_maximum(self, shape):
        x = np.array([0.0, 0.5, -0.5])
        values = lineshape_density(shape, x, 1.0)
        assert values == pytest.approx([1.0, 0.5, 0.5])

    def test_gaussian_fwhm_from_weights(self):
        fwhm = TWO_PI * 340e6
        x, w = uniform_axis(fwhm, 201, 3.0, LineShape.GAUSSIAN)
        peak = w[100]
        assert np.interp(0.5 * fwhm, x, w) / peak == pytest.approx(0.5, abs=1e-3)
        assert np.interp(-0.5 * fwhm, x, w) / peak == pytest.approx(0.5, abs=1e-3)

    def test_uniform_axis_symmetric_and_normalised(self):
        x, w = uniform_axis(1.0, 11, 3.0, LineShape.LORENTZIAN)
        assert x[0] == -3.0 and x[-1] == 3.0
        assert np.sum(w) == pytest.approx(1.0, abs=1e-15)
        assert w == pytest.approx(w[::-1], rel=1e-14)

    def test_single_node_axis(self):
        x, w = uniform_axis(1.0, 1, 3.0, LineShape.GAUSSIAN)
        assert x.tolist() == [0.0]
        assert w.tolist() == [1.0]

    def test_clustered_axis_is_fine_near_zero(self):
        x, q = clustered_axis(1e9, 101, 1e6)
        assert x[0] == pytest.approx(-1e9)
        assert x[-1] == pytest.approx(1e9)
        assert abs(x[50]) < 1e-3
        inner = x[51] - x[50]
        outer = x[-1] - x[-2]
        assert inner < 1e6
        assert outer > 100 * inner
        assert np.sum(q) == pytest.approx(2e9, rel=5e-3)


# ============================================================================
# Grids
# ============================================================================

class TestUniformGrid:

    def test_weights_sum_to_one(self):
        grid = build_detuning_grid(InhomogeneousSpec(n_opt=21, n_spin=11), n_eff=1e15)
        assert len(grid) == 231
        assert grid.shape == (21, 11)
        assert abs(np.sum(grid.weights) - 1.0) <= 1e-12
        assert np.all(grid.weights >= 0.0)

    def test_row_major_layout(self):
        grid = build_detuning_grid(SMALL, n_eff=1.0)
        assert grid.offsets_o[:5].tolist() == [grid.row_axis[0]] * 5
        assert grid.offsets_mu[:5].tolist() == grid.col_axis.tolist()

    def test_single_node_grid(self):
        grid = build_detuning_grid(InhomogeneousSpec(n_opt=1, n_spin=1), n_eff=5.0)
        assert len(grid) == 1
        assert grid.weights.tolist() == [1.0]


class TestResolvedGrid:

    @pytest.fixture(scope="class")
    def spec(self):
        return InhomogeneousSpec(n_opt=101, n_spin=41, quadrature=Quadrature.RESOLVED)

    def test_weights_normalised(self, spec):
        grid = build_detuning_grid(spec, n_eff=1e15, center=(TWO_PI * 50e6, TWO_PI * -10e6))
        assert abs(np.sum(grid.weights) - 1.0) <= 1e-12
        assert np.all(grid.weights >= 0.0)
        assert grid.row_name == "delta_s"

    def test_node_on_the_resonant_ion(self, spec):
        center = (TWO_PI * 50e6, TWO_PI * -10e6)
        grid = build_detuning_grid(spec, n_eff=1e15, center=center)
        d_o, d_mu = grid.ion_detunings()
        closest = np.min(np.hypot(d_o + d_mu, d_mu))
        assert closest < 1e-3

    def test_nodes_outside_window_have_no_weight(self, spec):
        grid = build_detuning_grid(spec, n_eff=1e15)
        outside = np.abs(grid.offsets_o) > 3.0 * TWO_PI * spec.fwhm_opt * (1 + 1e-9)
        assert np.all(grid.weights[outside] == 0.0)

    def test_second_moment_agrees_with_uniform(self, spec):
        resolved = build_detuning_grid(spec, n_eff=1.0)
        uniform = build_detuning_grid(InhomogeneousSpec(n_opt=201, n_spin=101), n_eff=1.0)
        var_resolved = np.sum(resolved.weights * resolved.offsets_o ** 2)
        var_uniform = np.sum(uniform.weights * uniform.offsets_o ** 2)
        assert var_resolved == pytest.approx(var_uniform, rel=2e-2)


class TestPopulationLattice:

    @pytest.mark.parametrize("quadrature", list(Quadrature))
    def test_axes_and_equal_weights(self, quadrature):
        spec = InhomogeneousSpec(n_opt=11, n_spin=5, quadrature=quadrature)
        grid = population_lattice(spec, n_eff=1e15)
        assert grid.shape == (11, 5)
        assert (grid.row_name, grid.col_name) == ("delta_o", "delta_mu")
        assert np.all(grid.weights == grid.weights[0])
        assert abs(np.sum(grid.weights) - 1.0) <= 1e-12

    def test_centred_on_the_drives(self):
        spec = InhomogeneousSpec(n_opt=11, n_spin=5, quadrature=Quadrature.RESOLVED)
        center = (TWO_PI * 50e6, TWO_PI * -10e6)
        grid = population_lattice(spec, n_eff=1e15, center=center)
        d_o, d_mu = grid.ion_detunings()
        middle = (11 * 5) // 2
        assert d_o[middle] == pytest.approx(0.0, abs=1e-6)
        assert d_mu[middle] == pytest.approx(0.0, abs=1e-6)
        assert np.max(d_o) == pytest.approx(3.0 * TWO_PI * 340e6)


# ============================================================================
# Ensemble response
# ============================================================================

class TestEnsembleResponse:

    FIELDS = FieldState(a=0.2 + 0.1j, b=300.0, omega_o=TWO_PI * 2e5)

    def test_homogeneous_limit(self):
        grid = build_detuning_grid(InhomogeneousSpec(n_opt=1, n_spin=1), n_eff=1e6)
        resp = ensemble_response(grid, ATOM, self.FIELDS)
        rho = steady_state_atom(build_liouvillian(ATOM, AtomDetunings(), self.FIELDS))
        assert resp.pol_mu == pytest.approx(1e6 * ATOM.g_mu * rho.element(2, 1), rel=1e-12)
        assert resp.pol_s == pytest.approx(1e6 * ATOM.g_s * rho.element(3, 1), rel=1e-12)
        assert resp.pol_p == pytest.approx(1e6 * ATOM.g_p * rho.element(3, 2), rel=1e-12)

    def test_linear_in_ion_number(self):
        one = ensemble_response(build_detuning_grid(SMALL, n_eff=1e12), ATOM, self.FIELDS)
        two = ensemble_response(build_detuning_grid(SMALL, n_eff=2e12), ATOM, self.FIELDS)
        assert two.pol_mu == pytest.approx(2.0 * one.pol_mu, rel=1e-12)
        assert two.pol_s == pytest.approx(2.0 * one.pol_s, rel=1e-12)

    def test_decoupled_ions_give_no_polarisation(self):
        atom = AtomParams(f_mu=5.186e9, f_opt=195113.30e9)
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1e15), atom, self.FIELDS)
        assert resp.pol_mu == 0.0
        assert resp.pol_s == 0.0

    def test_conjugate_mirror_symmetry(self):
        fields = FieldState(a=0j, b=300.0, omega_o=TWO_PI * 2e5)
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, fields)
        rho = resp.rho_grid
        mirrored = rho[::-1]
        assert mirrored[:, 1, 0] == pytest.approx(-np.conj(rho[:, 1, 0]), abs=1e-10)
        assert resp.popdiff_grid[::-1] == pytest.approx(resp.popdiff_grid, abs=1e-10)

    def test_center_shifts_ion_detunings(self):
        grid = build_detuning_grid(SMALL, n_eff=1.0)
        resp = ensemble_response(grid, ATOM, self.FIELDS, center=(TWO_PI * 1e6, 0.0))
        assert resp.delta_o == pytest.approx(grid.offsets_o - TWO_PI * 1e6)
        assert resp.delta_s == pytest.approx(resp.delta_o + resp.delta_mu)

    def test_every_node_is_physical(self):
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, self.FIELDS)
        for rho in resp.rho_grid:
            trace = np.trace(rho).real
            assert trace == pytest.approx(1.0, abs=1e-12)
            assert np.min(np.linalg.eigvalsh(rho)) > -1e-10

    def test_invariant_violation_reported_with_node(self, monkeypatch):
        import src.ensemble as ensemble

        monkeypatch.setattr(ensemble, "_TRACE_TOL", -1.0)
        with pytest.raises(DensityInvariantError) as info:
            ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, self.FIELDS)
        assert info.value.node_index == 0
        assert info.value.node is not None


class TestSusceptibility:

    @staticmethod
    def _wirtinger(func, z, eps):
        d_re = (func(z + eps) - func(z - eps)) / (2 * eps)
        d_im = (func(z + 1j * eps) - func(z - 1j * eps)) / (2 * eps)
        return 0.5 * (d_re - 1j * d_im)

    def test_signal_susceptibility(self):
        grid = build_detuning_grid(SMALL, n_eff=1e10)
        base = FieldState(a=0.05 + 0.02j, b=300.0, omega_o=TWO_PI * 2e5)
        resp = ensemble_response(grid, ATOM, base, with_susceptibility=True)

        def pol_s(a):
            return ensemble_response(grid, ATOM, FieldState(a=a, b=base.b, omega_o=base.omega_o)).pol_s

        expected = self._wirtinger(pol_s, base.a, 1e-4)
        assert resp.chi_s == pytest.approx(expected, rel=1e-5)

    def test_microwave_susceptibility(self):
        grid = build_detuning_grid(SMALL, n_eff=1e10)
        base = FieldState(a=0j, b=300.0 + 40.0j, omega_o=TWO_PI * 2e5)
        resp = ensemble_response(grid, ATOM, base, with_susceptibility=True)

        def pol_mu(b):
            return ensemble_response(grid, ATOM, FieldState(a=base.a, b=b, omega_o=base.omega_o)).pol_mu

        expected = self._wirtinger(pol_mu, base.b, 1e-2)
        assert resp.chi_mu == pytest.approx(expected, rel=1e-5)

    def test_not_computed_by_default(self):
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, FieldState(b=10.0))
        assert resp.chi_mu == 0j and resp.chi_s == 0j


# ============================================================================
# Derived observables
# ============================================================================

class TestObservables:

    def test_population_map_shape(self):
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, FieldState(b=300.0))
        pop = population_difference_map(resp)
        assert pop.values.shape == (5, 5)
        assert pop.delta_o.shape == (5, 5)
        assert pop.variation >= 0.0

    def test_undriven_map_is_flat_and_thermal(self):
        resp = ensemble_response(build_detuning_grid(SMALL, n_eff=1.0), ATOM, FieldState())
        pop = population_difference_map(resp)
        p1 = 1.0 / (1.0 + math.exp(-0.0541063))
        assert pop.values == pytest.approx(np.full((5, 5), p1), abs=1e-5)
        assert pop.variation < 1e-12

    def test_absorption_rate_single_node(self):
        grid = build_detuning_grid(InhomogeneousSpec(n_opt=1, n_spin=1), n_eff=1e15)
        resp = ensemble_response(grid, ATOM, FieldState())
        gamma = ATOM.coherence_opt
        expected = 2.0 * 1e15 * ATOM.g_s ** 2 * resp.popdiff_grid[0] / gamma
        assert signal_absorption_rate(resp, ATOM) == pytest.approx(expected, rel=1e-12)

    def test_absorption_rate_linear_in_n(self):
        resp1 = ensemble_response(build_detuning_grid(SMALL, n_eff=1e12), ATOM, FieldState())
        resp2 = ensemble_response(build_detuning_grid(SMALL, n_eff=3e12), ATOM, FieldState())
        assert signal_absorption_rate(resp2, ATOM) == pytest.approx(3.0 * signal_absorption_rate(resp1, ATOM), rel=1e-12)
