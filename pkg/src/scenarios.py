"""
Delta-system transducer simulator -- Scenarios

Figure-level experiments built on the fixed-point solver: detuning maps,
microwave and optical power sweeps, the impedance-matching / millikelvin
prediction, population-difference maps and a few numerical sanity
studies.

Every sweep cell is an independent operating point: it gets its own copy
of the configuration with the swept keys overridden and is solved from the
same initial fields.  Cells run in a process pool when ``threads > 1`` and
are gathered back by index, so the lattice never depends on scheduling.

Usage:
    from src.config import get_config
    from src.scenarios import microwave_power_sweep

    result = microwave_power_sweep(get_config(), threads=4)
    print(result.peak("eta"))
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional

import numpy as np

from .cavity import (
    dbm_to_watts,
    fixed_point_solve,
    input_photon_flux,
    loaded_reflection,
    pump_amplitude,
    reflection_coefficient,
)
from .config import RunConfig, config_hash, field_unit, with_values
from .core_model import TRACE_ROW, build_liouvillian, steady_state_atom, thermal_state
from .ensemble import (
    build_detuning_grid,
    ensemble_response,
    population_difference_map,
    population_lattice,
    signal_absorption_rate,
)
from .models import (
    CONSTANTS_VERSION,
    TWO_PI,
    AtomDetunings,
    AxisScale,
    ConvergenceError,
    FieldState,
    Map2D,
    SingularSystemError,
    SteadyStateSolution,
    SweepAxis,
    SweepOutput,
    SweepResult,
    SweepSpec,
    UndefinedInputError,
)

logger = logging.getLogger(__name__)

SENSITIVITY_FACTORS: tuple[float, ...] = (0.1, 1.0, 10.0)


# ===================================================================
# Single operating point
# ===================================================================

def solve_operating_point(cfg: RunConfig) -> SteadyStateSolution:
    """Joint steady state at the configuration's drive settings."""
    return fixed_point_solve(cfg.system(), cfg.solver_numerics())


def observe(solution: SteadyStateSolution, cfg: RunConfig, outputs: tuple[SweepOutput, ...]) -> dict[str, float]:
    """Reduce a solution to the requested scalar observables."""
    values: dict[str, float] = {}
    for output in outputs:
        if output is SweepOutput.ETA:
            values[output.value] = solution.eta
        elif output is SweepOutput.KAPPA_ABS:
            values[output.value] = signal_absorption_rate(solution.response, cfg.atom_params())
        elif output is SweepOutput.POPDIFF:
            weighted = solution.response.popdiff_grid[solution.response.grid.weights > 0.0]
            values[output.value] = float(np.max(weighted) - np.min(weighted))
        elif output is SweepOutput.REFLECTION:
            try:
                r = loaded_reflection(cfg.microwave_cavity_params(), math.sqrt(solution.mw_flux), solution.fields.b)
                values[output.value] = abs(r) ** 2
            except UndefinedInputError:
                values[output.value] = math.nan
    return values


@dataclass
class CellOutcome:
    """Result of one sweep cell."""
    values: dict[str, float]
    converged: bool
    message: str = ""


def _solve_cell(task: tuple[RunConfig, dict[str, float], tuple[SweepOutput, ...]]) -> CellOutcome:
    base, overrides, outputs = task
    cfg = with_values(base, overrides)
    try:
        solution = solve_operating_point(cfg)
    except (ConvergenceError, SingularSystemError) as exc:
        return CellOutcome({o.value: math.nan for o in outputs}, False, str(exc))
    return CellOutcome(observe(solution, cfg, outputs), True)


def _map_cells(tasks: list[Any], worker: Any, threads: int) -> list[Any]:
    """Run tasks serially or in a process pool; results keep task order."""
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            return list(pool.map(worker, tasks))
    return [worker(task) for task in tasks]


# ===================================================================
# Generic sweep
# ===================================================================

def make_axis(name: str, start: float, stop: float, count: int, scale: AxisScale = AxisScale.LINEAR) -> SweepAxis:
    """SweepAxis over a dotted config key, with the key's unit attached."""
    return SweepAxis(name=name, start=start, stop=stop, count=count, scale=scale, unit=field_unit(name))


def run_sweep(spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Solve every cell of the axis lattice (C order, last axis fastest)."""
    cfg: RunConfig = spec.base_config
    axis_values = tuple(axis.values() for axis in spec.axes)
    indices = list(itertools.product(*(range(len(v)) for v in axis_values)))
    tasks = [
        (cfg, {axis.name: float(vals[i]) for axis, vals, i in zip(spec.axes, axis_values, idx)}, spec.outputs)
        for idx in indices
    ]
    # surface bad axis keys/values before fanning out
    with_values(cfg, tasks[0][1])

    logger.info(
        "Sweep over %s: %d cells, %d worker(s)",
        " x ".join(axis.name for axis in spec.axes), len(tasks), max(threads, 1),
    )
    outcomes: list[CellOutcome] = _map_cells(tasks, _solve_cell, threads)

    shape = spec.shape
    values = {o.value: np.full(shape, math.nan) for o in spec.outputs}
    converged = np.zeros(shape, dtype=bool)
    for idx, task, outcome in zip(indices, tasks, outcomes):
        converged[idx] = outcome.converged
        if outcome.converged:
            for name, value in outcome.values.items():
                values[name][idx] = value
        else:
            cell = ", ".join(f"{key}={val:.6g}" for key, val in task[1].items())
            logger.warning("Cell %s did not converge: %s", cell, outcome.message)

    result = SweepResult(
        axes=spec.axes,
        axis_values=axis_values,
        values=values,
        converged=converged,
        provenance={
            "config_hash": config_hash(cfg),
            "constants": CONSTANTS_VERSION,
        },
    )
    logger.info("Sweep done: %d/%d cells converged", int(np.count_nonzero(converged)), converged.size)
    return result


# ===================================================================
# Figure-level sweeps
# ===================================================================

def sweep_2d(
    cfg: RunConfig,
    threads: int = 1,
    opt_axis: Optional[SweepAxis] = None,
    mw_axis: Optional[SweepAxis] = None,
) -> SweepResult:
    """Efficiency map over pump (delta_o) and microwave (delta_mu) detunings."""
    s = cfg.scenario
    opt_axis = opt_axis or make_axis("drive.detuning_o", s.opt_detuning_start, s.opt_detuning_stop, s.opt_detuning_count)
    mw_axis = mw_axis or make_axis("drive.detuning_mu", s.mw_detuning_start, s.mw_detuning_stop, s.mw_detuning_count)
    result = run_sweep(SweepSpec(axes=(opt_axis, mw_axis), outputs=(SweepOutput.ETA,), base_config=cfg), threads)
    peak, coords = result.peak("eta")
    logger.info("Peak eta %.4e at detuning_o=%.4g Hz, detuning_mu=%.4g Hz", peak, *coords)
    return result


def microwave_power_sweep(cfg: RunConfig, threads: int = 1, axis: Optional[SweepAxis] = None) -> SweepResult:
    """Efficiency, reabsorption rate and port reflection versus microwave power."""
    s = cfg.scenario
    axis = axis or make_axis("drive.p_mw_dbm", s.mw_power_start, s.mw_power_stop, s.mw_power_count, AxisScale.DBM)
    outputs = (SweepOutput.ETA, SweepOutput.KAPPA_ABS, SweepOutput.REFLECTION)
    return run_sweep(SweepSpec(axes=(axis,), outputs=outputs, base_config=cfg), threads)


def optical_power_sweep(cfg: RunConfig, threads: int = 1, axis: Optional[SweepAxis] = None) -> SweepResult:
    """Efficiency versus pump power at the scenario's fixed microwave power."""
    s = cfg.scenario
    base = with_values(cfg, {"drive.p_mw_dbm": s.opt_sweep_mw_dbm})
    axis = axis or make_axis("drive.p_opt", s.opt_power_start, s.opt_power_stop, s.opt_power_count)
    return run_sweep(SweepSpec(axes=(axis,), outputs=(SweepOutput.ETA,), base_config=base), threads)


# --- curve analysis ---

def ridge_width(result: SweepResult, output: str = "eta", axis: int = 0) -> float:
    """FWHM of ``output`` along ``axis`` through the lattice peak.

    Half-maximum crossings are linearly interpolated; a ridge that does
    not fall below half maximum inside the axis range returns the range.
    """
    lattice = result.values[output]
    peak_idx = np.unravel_index(int(np.nanargmax(lattice)), lattice.shape)
    index = list(peak_idx)
    index[axis] = slice(None)
    line = np.nan_to_num(lattice[tuple(index)], nan=0.0)
    x = result.axis_values[axis]
    k = peak_idx[axis]
    half = 0.5 * line[k]

    def crossing(step: int) -> float:
        j = k
        while 0 <= j + step < line.size:
            if line[j + step] < half:
                x0, x1, y0, y1 = x[j], x[j + step], line[j], line[j + step]
                return float(x0 + (half - y0) * (x1 - x0) / (y1 - y0))
            j += step
        return float(x[j])

    return abs(crossing(+1) - crossing(-1))


def knee_position(x: np.ndarray, y: np.ndarray) -> float:
    """Abscissa where y first falls to half of y[0], linearly interpolated.

    NaN when y never drops that far.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    half = 0.5 * y[0]
    below = np.flatnonzero(y[1:] <= half)
    if below.size == 0:
        return math.nan
    j = int(below[0]) + 1
    return float(x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1]))


def linear_fit_residual(x: np.ndarray, y: np.ndarray) -> float:
    """Largest residual of a straight-line fit relative to max |y|."""
    slope, intercept = np.polyfit(x, y, 1)
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(y - (slope * x + intercept))) / scale)


# ===================================================================
# Impedance matching and millikelvin prediction
# ===================================================================

@dataclass
class PredictionCase:
    label: str
    temperature: float          # K
    kappa1_mw: float            # Hz
    eta: float
    empty_reflection: float     # |r|^2 on resonance, empty cavity


@dataclass
class PredictionReport:
    """Efficiencies with current and impedance-matched microwave coupling."""
    p_mw_dbm: float
    cases: list[PredictionCase]
    boost_warm: float
    boost_cold: float
    mk_prediction: float
    ground_fraction_warm: float
    ground_fraction_cold: float
    low_power_change: float     # relative eta change between the two low powers
    config_hash: str = ""

    def case(self, label: str, temperature: float) -> PredictionCase:
        for c in self.cases:
            if c.label == label and math.isclose(c.temperature, temperature):
                return c
        raise KeyError(f"no prediction case {label!r} at {temperature} K")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _solve_eta(cfg: RunConfig) -> float:
    return solve_operating_point(cfg).eta


def impedance_match_prediction(cfg: RunConfig, threads: int = 1) -> PredictionReport:
    """Low-power efficiency for current vs matched coupling at both temperatures.

    Matching keeps the intrinsic loss and sets kappa1 = kappa2 + kappai.
    """
    s = cfg.scenario
    mw = cfg.microwave_cavity
    matched_kappa1 = mw.kappa2 + mw.kappai
    warm, cold = cfg.physics.temperature, s.cold_temperature
    base = with_values(cfg, {"drive.p_mw_dbm": s.low_power_dbm})

    specs = [
        ("current", warm, mw.kappa1),
        ("matched", warm, matched_kappa1),
        ("current", cold, mw.kappa1),
        ("matched", cold, matched_kappa1),
    ]
    configs = [
        with_values(base, {"physics.temperature": temp, "microwave_cavity.kappa1": k1})
        for _, temp, k1 in specs
    ]
    configs.append(with_values(base, {"drive.p_mw_dbm": s.low_power_check_dbm}))
    logger.info("Prediction: solving %d operating points at %.1f dBm", len(configs), s.low_power_dbm)
    etas = _map_cells(configs, _solve_eta, threads)

    cases = []
    for (label, temp, k1), case_cfg, eta in zip(specs, configs, etas):
        r = reflection_coefficient(case_cfg.microwave_cavity_params(), 0.0)
        cases.append(PredictionCase(label, temp, k1, eta, abs(r) ** 2))

    def ratio(num: float, den: float) -> float:
        return num / den if den > 0.0 else math.nan

    current_warm = etas[0]
    f_mu = cfg.physics.f_mu
    return PredictionReport(
        p_mw_dbm=s.low_power_dbm,
        cases=cases,
        boost_warm=ratio(etas[1], etas[0]),
        boost_cold=ratio(etas[3], etas[2]),
        mk_prediction=etas[3],
        ground_fraction_warm=thermal_state(warm, f_mu).populations[0],
        ground_fraction_cold=thermal_state(cold, f_mu).populations[0],
        low_power_change=abs(ratio(etas[4], current_warm) - 1.0),
        config_hash=config_hash(cfg),
    )


# ===================================================================
# Population map
# ===================================================================

@dataclass
class PopulationMapReport:
    """rho11 - rho33 over the ion-detuning lattice at one microwave power.

    ``change`` is the map minus the pump-only map: what the microwave and
    its upconverted signal do to the populations.  The minimum reported is
    the deepest point of that change.
    """
    p_mw_dbm: float
    map: Map2D
    change: Map2D
    variation: float
    microwave_variation: float
    min_delta_o: float          # Hz, ion detuning of the deepest change
    min_delta_mu: float         # Hz
    antidiagonal_offset: float  # Hz, |delta_o + delta_mu| there
    cell_size: float            # Hz, local lattice spacing there


def _local_spacing(axis: np.ndarray, k: int) -> float:
    if axis.size < 2:
        return 0.0
    lo, hi = max(k - 1, 0), min(k + 1, axis.size - 1)
    return float(axis[hi] - axis[lo]) / (hi - lo)


def population_map(cfg: RunConfig, p_mw_dbm: Optional[float] = None, phase: float = 0.0) -> PopulationMapReport:
    """Converged population-difference map and where the microwave digs into it.

    The map samples rho11 - rho33 on a (delta_o, delta_mu) ion-detuning
    lattice at the converged fields.  ``phase`` rotates the microwave
    input; the upconverted signal follows it.
    """
    p_mw_dbm = cfg.scenario.popmap_mw_dbm if p_mw_dbm is None else p_mw_dbm
    point = with_values(cfg, {"drive.p_mw_dbm": p_mw_dbm})
    solution = solve_operating_point(point)
    atom = point.atom_params()
    drive = point.drive_inputs()
    lattice = population_lattice(point.inhomogeneous_spec(), point.physics.n_eff, (drive.delta_o, drive.delta_mu))
    check = point.numerics.check_invariants

    fields = solution.fields.rotated(phase)
    pop = population_difference_map(ensemble_response(lattice, atom, fields, check_invariants=check))
    pump_only = population_difference_map(
        ensemble_response(lattice, atom, FieldState(omega_o=fields.omega_o), check_invariants=check)
    )
    change = replace(pop, values=pop.values - pump_only.values)

    i, j = change.argmin()
    d_o = float(change.delta_o[i, j]) / TWO_PI
    d_mu = float(change.delta_mu[i, j]) / TWO_PI
    logger.info(
        "Population map at %g dBm: variation %.3e, microwave-induced %.3e",
        p_mw_dbm, pop.variation, change.variation,
    )
    return PopulationMapReport(
        p_mw_dbm=p_mw_dbm,
        map=pop,
        change=change,
        variation=pop.variation,
        microwave_variation=change.variation,
        min_delta_o=d_o,
        min_delta_mu=d_mu,
        antidiagonal_offset=abs(d_o + d_mu),
        cell_size=max(_local_spacing(change.row_axis, i), _local_spacing(change.col_axis, j)) / TWO_PI,
    )


# ===================================================================
# Numerical studies
# ===================================================================

@dataclass
class SensitivityRow:
    factor: float
    t1_opt: float               # s
    eta: float


def t1_opt_sensitivity(
    cfg: RunConfig,
    threads: int = 1,
    factors: tuple[float, ...] = SENSITIVITY_FACTORS,
) -> list[SensitivityRow]:
    """Efficiency at the operating point with T1_opt scaled by each factor."""
    t1 = cfg.physics.t1_opt
    configs = [with_values(cfg, {"physics.t1_opt": t1 * f}) for f in factors]
    etas = _map_cells(configs, _solve_eta, threads)
    return [SensitivityRow(f, t1 * f, eta) for f, eta in zip(factors, etas)]


@dataclass
class GridConvergence:
    n_opt: int
    n_spin: int
    eta: float
    n_opt_fine: int
    n_spin_fine: int
    eta_fine: float

    @property
    def relative_change(self) -> float:
        if self.eta == 0.0:
            return 0.0 if self.eta_fine == 0.0 else math.inf
        return abs(self.eta_fine / self.eta - 1.0)


def _refined(n: int) -> int:
    return n if n == 1 else 2 * n - 1


def grid_convergence(cfg: RunConfig, threads: int = 1) -> GridConvergence:
    """Efficiency on the configured grid and on one with node spacing halved."""
    n = cfg.numerics
    fine = with_values(cfg, {"numerics.n_opt": _refined(n.n_opt), "numerics.n_spin": _refined(n.n_spin)})
    eta, eta_fine = _map_cells([cfg, fine], _solve_eta, threads)
    return GridConvergence(n.n_opt, n.n_spin, eta, fine.numerics.n_opt, fine.numerics.n_spin, eta_fine)


# ===================================================================
# Configuration sanity checks (validate command)
# ===================================================================

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)
    config_hash: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_validation(cfg: RunConfig) -> ValidationReport:
    """Cheap physics checks that need no self-consistent solve."""
    report = ValidationReport(config_hash=config_hash(cfg))
    atom = cfg.atom_params()
    drive = cfg.drive_inputs()
    opt_cav = cfg.optical_cavity_params()
    mw_cav = cfg.microwave_cavity_params()

    phi2, phi3 = atom.pure_dephasing()
    report.checks.append(CheckResult(
        "pure dephasing non-negative", True,
        f"gamma_phi2={phi2:.4e} /s, gamma_phi3={phi3:.4e} /s",
    ))

    n_p = abs(pump_amplitude(drive.p_opt, opt_cav, drive.f_opt)) ** 2
    fields = FieldState(omega_o=atom.g_p * math.sqrt(n_p))
    lv = build_liouvillian(atom, AtomDetunings(), fields)
    leak = float(np.max(np.abs(TRACE_ROW @ lv)))
    report.checks.append(CheckResult(
        "generator preserves trace", leak <= 1e-12 * max(float(np.max(np.abs(lv))), 1.0),
        f"max |Tr L| = {leak:.2e}; pump photons {n_p:.4e}, Rabi {abs(fields.omega_o) / TWO_PI:.4e} Hz",
    ))

    undriven = steady_state_atom(build_liouvillian(atom, AtomDetunings(), FieldState()))
    thermal = thermal_state(atom.temperature if atom.thermal_spin_bath else 0.0, atom.f_mu)
    gap = float(np.max(np.abs(undriven.rho - thermal.rho)))
    report.checks.append(CheckResult(
        "undriven state is thermal", gap <= 1e-10,
        f"rho22/rho11 = {undriven.populations[1] / undriven.populations[0]:.6f}, max deviation {gap:.2e}",
    ))

    pumped = steady_state_atom(lv)
    problems = pumped.invariant_violations(tol=1e-9, positivity_tol=1e-9)
    report.checks.append(CheckResult(
        "pumped ion state physical", not problems,
        "; ".join(problems) or f"rho11 - rho33 = {pumped.popdiff_13:.4f} for an ion resonant with the pump",
    ))

    grid = build_detuning_grid(cfg.inhomogeneous_spec(), cfg.physics.n_eff, (drive.delta_o, drive.delta_mu))
    total = float(np.sum(grid.weights))
    report.checks.append(CheckResult(
        "quadrature weights normalised", abs(total - 1.0) <= 1e-12 and bool(np.all(grid.weights >= 0.0)),
        f"{grid.shape[0]}x{grid.shape[1]} nodes, sum of weights {total:.15f}",
    ))

    r_mw = abs(reflection_coefficient(mw_cav, 0.0)) ** 2
    r_opt = abs(reflection_coefficient(opt_cav, 0.0)) ** 2
    report.checks.append(CheckResult(
        "empty-cavity reflection bounded", r_mw <= 1.0 and r_opt <= 1.0,
        f"|r_mw|^2 = {r_mw:.4f}, |r_opt|^2 = {r_opt:.4f}",
    ))

    flux = input_photon_flux(dbm_to_watts(drive.p_mw_dbm), drive.f_mw)
    report.checks.append(CheckResult(
        "microwave input flux", flux >= 0.0, f"{flux:.4e} photons/s at {drive.p_mw_dbm:g} dBm",
    ))
    return report
