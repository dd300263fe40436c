"""Tests for src.models -- parameter dataclasses, grids, results, exceptions.

Covers:
- AtomParams validation and derived decay / dephasing rates
- AtomDetunings, FieldState and DensityMatrix helpers
- CavityParams, DriveInputs, SolverNumerics validation
- SweepAxis / SweepSpec / SweepResult bookkeeping
- Exception payloads
"""

import math

import numpy as np
import pytest

from src.models import (
    AtomDetunings,
    AtomParams,
    AxisScale,
    CavityParams,
    ConfigError,
    ConvergenceError,
    DensityMatrix,
    DetuningGrid,
    DivergenceError,
    DriveInputs,
    FieldState,
    InhomogeneousSpec,
    SingularSystemError,
    SolverNumerics,
    SweepAxis,
    SweepOutput,
    SweepResult,
    SweepSpec,
    boltzmann_ratio,
)


def _atom(**overrides):
    params = dict(f_mu=5.186e9, f_opt=195113.30e9)
    params.update(overrides)
    return AtomParams(**params)


# ============================================================================
# Boltzmann factor
# ============================================================================

class TestBoltzmannRatio:

    def test_operating_temperature(self):
        assert boltzmann_ratio(4.6, 5.186e9) == pytest.approx(0.94733, abs=1e-4)

    def test_millikelvin(self):
        assert boltzmann_ratio(0.05, 5.186e9) == pytest.approx(6.88e-3, rel=1e-2)

    def test_zero_temperature(self):
        assert boltzmann_ratio(0.0, 5.186e9) == 0.0

    def test_infinite_temperature(self):
        assert boltzmann_ratio(math.inf, 5.186e9) == 1.0


# ============================================================================
# AtomParams
# ============================================================================

class TestAtomParams:

    def test_defaults_are_valid(self):
        atom = _atom()
        assert atom.t1_spin == 1e-3
        assert atom.branching_31 == 0.5

    def test_decay_rates(self):
        atom = _atom(t1_opt=10e-3, branching_31=0.3)
        assert atom.gamma_31 == pytest.approx(30.0)
        assert atom.gamma_32 == pytest.approx(70.0)
        assert atom.gamma_spin_down == pytest.approx(1000.0)

    def test_detailed_balance_up_rate(self):
        atom = _atom()
        assert atom.gamma_spin_up / atom.gamma_spin_down == pytest.approx(boltzmann_ratio(4.6, 5.186e9))

    def test_bath_switched_off(self):
        assert _atom(thermal_spin_bath=False).gamma_spin_up == 0.0

    def test_pure_dephasing_values(self):
        atom = _atom(temperature=0.0)
        phi2, phi3 = atom.pure_dephasing()
        assert phi2 == pytest.approx(1e6 - 500.0)
        assert phi3 == pytest.approx(1e6 - 0.5 / 11e-3)

    def test_negative_pure_dephasing_rejected(self):
        with pytest.raises(ConfigError, match="t2_spin"):
            _atom(t2_spin=5e-3)

    @pytest.mark.parametrize("field,value", [
        ("t1_spin", -1e-3),
        ("t2_opt", 0.0),
        ("f_mu", -1.0),
        ("branching_31", 1.5),
        ("g_s", -1.0),
        ("temperature", -4.0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigError):
            _atom(**{field: value})


# ============================================================================
# Small value types
# ============================================================================

class TestDetuningsAndFields:

    def test_delta_s_is_derived(self):
        det = AtomDetunings(delta_mu=2.0, delta_o=-5.0)
        assert det.delta_s == -3.0

    def test_field_rotation(self):
        fields = FieldState(a=1.0 + 0j, b=2.0j, omega_o=3.0)
        rotated = fields.rotated(math.pi / 2)
        assert rotated.a == pytest.approx(1j)
        assert rotated.b == pytest.approx(-2.0)
        assert rotated.omega_o == 3.0


class TestDensityMatrix:

    def test_valid_state_has_no_violations(self):
        rho = DensityMatrix(np.diag([0.5, 0.3, 0.2]))
        assert rho.invariant_violations() == []
        assert rho.popdiff_13 == pytest.approx(0.3)
        assert rho.element(1, 1) == pytest.approx(0.5)

    def test_detects_bad_trace_and_positivity(self):
        rho = DensityMatrix(np.diag([1.2, -0.1, 0.0]))
        problems = rho.invariant_violations()
        assert any("negative eigenvalue" in p for p in problems)
        rho = DensityMatrix(np.diag([0.5, 0.3, 0.3]))
        assert any("trace" in p for p in rho.invariant_violations())

    def test_detects_non_hermitian(self):
        m = np.diag([0.5, 0.5, 0.0]).astype(complex)
        m[1, 0] = 0.1
        assert any("Hermitian" in p for p in DensityMatrix(m).invariant_violations())

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(2))


# ============================================================================
# Cavity / drive / numerics
# ============================================================================

class TestCavityParams:

    def test_total_loss(self):
        cav = CavityParams(kappa1=1.0, kappa2=2.0, kappai=3.0)
        assert cav.kappa_total == 6.0

    def test_impedance_matched_keeps_intrinsic_loss(self):
        cav = CavityParams(kappa1=75.0, kappa2=55.0, kappai=717.0).impedance_matched()
        assert cav.kappa1 == 772.0
        assert cav.kappai == 717.0

    def test_negative_rate_rejected(self):
        with pytest.raises(ConfigError):
            CavityParams(kappa1=-1.0)

    def test_lossless_cavity_rejected(self):
        with pytest.raises(ConfigError):
            CavityParams(kappa1=0.0)


class TestDriveAndNumerics:

    def test_no_microwave_input_allowed(self):
        drive = DriveInputs(p_mw_dbm=-math.inf, p_opt=0.0, f_mw=5e9, f_opt=2e14)
        assert drive.p_mw_dbm == -math.inf

    def test_negative_pump_rejected(self):
        with pytest.raises(ConfigError):
            DriveInputs(p_mw_dbm=-10.0, p_opt=-1e-3, f_mw=5e9, f_opt=2e14)

    @pytest.mark.parametrize("kwargs", [
        {"damping": 0.0},
        {"damping": 1.5},
        {"tol": 0.0},
        {"max_iter": 0},
    ])
    def test_invalid_numerics(self, kwargs):
        with pytest.raises(ConfigError):
            SolverNumerics(**kwargs)


class TestInhomogeneousSpec:

    @pytest.mark.parametrize("n", [2, 4, 100])
    def test_even_counts_rejected(self, n):
        with pytest.raises(ConfigError):
            InhomogeneousSpec(n_opt=n)

    def test_single_node_allowed(self):
        assert InhomogeneousSpec(n_opt=1, n_spin=1).n_opt == 1


class TestDetuningGrid:

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DetuningGrid(
                offsets_o=np.zeros(2), offsets_mu=np.zeros(2), weights=np.array([0.5, 0.6]),
                n_eff=1.0, shape=(2, 1), row_axis=np.zeros(2), col_axis=np.zeros(1),
            )

    def test_ion_detunings(self):
        grid = DetuningGrid(
            offsets_o=np.array([-1.0, 1.0]), offsets_mu=np.array([0.0, 0.0]),
            weights=np.array([0.5, 0.5]), n_eff=10.0, shape=(2, 1),
            row_axis=np.array([-1.0, 1.0]), col_axis=np.zeros(1), center=(1.0, 0.5),
        )
        d_o, d_mu = grid.ion_detunings()
        assert d_o.tolist() == [-2.0, 0.0]
        assert d_mu.tolist() == [-0.5, -0.5]


# ============================================================================
# Sweeps
# ============================================================================

class TestSweepTypes:

    def test_linear_axis(self):
        axis = SweepAxis("drive.p_mw_dbm", -60.0, -10.0, 6, AxisScale.DBM)
        assert axis.values().tolist() == [-60.0, -50.0, -40.0, -30.0, -20.0, -10.0]

    def test_log_axis(self):
        axis = SweepAxis("drive.p_opt", 1e-3, 1e-1, 3, AxisScale.LOG)
        assert axis.values() == pytest.approx([1e-3, 1e-2, 1e-1])

    def test_axis_needs_two_points(self):
        with pytest.raises(ConfigError):
            SweepAxis("drive.p_opt", 0.0, 1.0, 1)

    def test_spec_axis_count(self):
        axis = SweepAxis("drive.p_opt", 0.0, 1.0, 2)
        with pytest.raises(ConfigError):
            SweepSpec(axes=(axis, axis, axis))
        assert SweepSpec(axes=(axis, axis)).shape == (2, 2)

    def test_output_units(self):
        assert SweepOutput.KAPPA_ABS.unit == "rad/s"
        assert SweepOutput.ETA.unit == "1"

    def test_peak_skips_nan(self):
        axis = SweepAxis("drive.p_opt", 0.0, 2.0, 3)
        result = SweepResult(
            axes=(axis,),
            axis_values=(axis.values(),),
            values={"eta": np.array([1e-6, np.nan, 5e-7])},
            converged=np.array([True, False, True]),
        )
        assert result.peak("eta") == (1e-6, (0.0,))
        assert result.failed_cells == 1

    def test_lattice_shape_checked(self):
        axis = SweepAxis("drive.p_opt", 0.0, 2.0, 3)
        with pytest.raises(ValueError):
            SweepResult(
                axes=(axis,), axis_values=(axis.values(),),
                values={"eta": np.zeros(4)}, converged=np.ones(3, dtype=bool),
            )


# ============================================================================
# Exceptions
# ============================================================================

class TestExceptions:

    def test_singular_error_names_node(self):
        exc = SingularSystemError("singular", node_index=7, node=(1.0, -2.0))
        assert exc.node_index == 7
        assert "grid node 7" in str(exc)

    def test_convergence_error_payload(self):
        exc = ConvergenceError("stuck", residual=1e-3, iterations=50)
        assert exc.residual == 1e-3
        assert exc.iterations == 50
        assert "iterations=50" in str(exc)

    def test_divergence_is_convergence_error(self):
        assert issubclass(DivergenceError, ConvergenceError)
        assert issubclass(ConfigError, ValueError)
