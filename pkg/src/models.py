"""Data models for the Delta-system transducer simulator.

Plain dataclasses with type hints, in the same spirit as the rest of the
package: physics parameters, detuning grids, field amplitudes, solver
results and sweep lattices.  Unit conventions are fixed here:

  * every rate, detuning and coupling is in rad/s (angular units);
  * every lifetime is in seconds, temperatures in kelvin;
  * cavity loss rates are energy (photon-number) decay rates, so an
    empty cavity's amplitude decays at kappa/2 and a port emits
    ``kappa_port * |amp|**2`` photons per second.

The configuration layer (``src/config.py``) works in Hz and converts to
these units once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy.constants

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig


# ---------------------------------------------------------------------------
# Physical constants
# ---------------------------------------------------------------------------
# h and k_B are exact in the 2019 SI, so CODATA 2018 and later agree bit for
# bit.  Results carry CONSTANTS_VERSION in their provenance header.

PLANCK: float = scipy.constants.h            # J s
BOLTZMANN: float = scipy.constants.k         # J / K
CONSTANTS_VERSION: str = "CODATA-2018 (exact SI h, k_B)"

TWO_PI: float = 2.0 * math.pi


def boltzmann_ratio(temperature: float, frequency: float) -> float:
    """Return exp(-h f / k_B T), the upper/lower occupation ratio.

    T = 0 gives 0.0 and T = inf gives 1.0.
    """
    if temperature <= 0.0:
        return 0.0
    if math.isinf(temperature):
        return 1.0
    return math.exp(-PLANCK * frequency / (BOLTZMANN * temperature))


# ---------------------------------------------------------------------------
# Exceptions
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


class UsageError(ValueError):
    """Unknown command or malformed command-line flags."""


class SingularSystemError(ValueError):
    """The steady-state linear system has no unique solution.

    ``node_index`` / ``node`` identify the detuning-grid node when the
    failure happened inside an ensemble solve.
    """

    def __init__(
        self,
        message: str,
        node_index: int | None = None,
        node: tuple[float, float] | None = None,
    ) -> None:
        if node_index is not None:
            message = f"{message} (grid node {node_index}"
            if node is not None:
                message += f", delta_o={node[0]:.6g} rad/s, delta_mu={node[1]:.6g} rad/s"
            message += ")"
        super().__init__(message)
        self.node_index = node_index
        self.node = node


class DensityInvariantError(SingularSystemError):
    """A solved density matrix violates trace/Hermiticity/positivity."""


class StepSizeError(ValueError):
    """The time-propagation step is too large or lost the trace."""


class UndefinedInputError(ValueError):
    """An observable is undefined for the given inputs (e.g. zero flux)."""


class ConvergenceError(RuntimeError):
    """The self-consistent field iteration did not converge."""

    def __init__(self, message: str, residual: float = math.nan, iterations: int = 0) -> None:
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class DivergenceError(ConvergenceError):
    """A field amplitude blew past the divergence limit."""


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class LineShape(str, Enum):
    """Inhomogeneous lineshape of a transition."""

    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian-truncated"


class Quadrature(str, Enum):
    """How the two-dimensional detuning grid is laid out.

    UNIFORM   tensor product of uniform trapezoidal grids over the
              inhomogeneous offsets (delta_o, delta_mu).
    RESOLVED  tensor product over (delta_s, delta_mu) ion detunings with
              sinh-clustered nodes, so the narrow microwave and signal
              resonances are sampled finely; built around the drive
              detunings of the operating point.
    """

    UNIFORM = "uniform"
    RESOLVED = "resolved"


class AxisScale(str, Enum):
    """Spacing of sweep-axis values."""

    LINEAR = "linear"
    LOG = "log"
    DBM = "dbm"      # linear in dB; values are dBm


class SweepOutput(str, Enum):
    """Observables a sweep cell can report."""

    ETA = "eta"
    POPDIFF = "popdiff"              # max-min of rho11-rho33 over the grid
    KAPPA_ABS = "kappa_abs"          # signal reabsorption rate, rad/s
    REFLECTION = "reflection"        # |r|^2 at the microwave input port

    @property
    def unit(self) -> str:
        return {"eta": "1", "popdiff": "1", "kappa_abs": "rad/s", "reflection": "1"}[self.value]


# ---------------------------------------------------------------------------
# Single-ion physics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomParams:
    """Delta-system parameters for one ion class.

    Levels: |1> and |2> are the ground Kramers doublet (spin transition at
    ``f_mu``), |3> is the optically excited state.  The pump drives 2<->3,
    the microwave mode 1<->2 and the signal mode 1<->3.
    """

    f_mu: float                         # Hz, spin transition frequency
    f_opt: float                        # Hz, pump optical transition frequency
    t1_spin: float = 1e-3               # s, |2> -> |1> population lifetime
    t2_spin: float = 1e-6               # s, rho21 coherence time
    t2_opt: float = 1e-6                # s, rho31 coherence time
    t1_opt: float = 11e-3               # s, |3> population lifetime
    branching_31: float = 0.5           # fraction of |3> decay that lands in |1>
    g_mu: float = 0.0                   # rad/s, single-ion microwave coupling
    g_s: float = 0.0                    # rad/s, single-ion signal-mode coupling
    g_p: float = 0.0                    # rad/s, single-ion pump-mode coupling
    temperature: float = 4.6            # K
    thermal_spin_bath: bool = True      # detailed-balance up-rate on 1<->2

    def __post_init__(self) -> None:
        for name in ("f_mu", "f_opt", "t1_spin", "t2_spin", "t2_opt", "t1_opt"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"AtomParams.{name} must be positive and finite, got {value!r}")
        if not 0.0 <= self.branching_31 <= 1.0:
            raise ConfigError(f"AtomParams.branching_31 must lie in [0, 1], got {self.branching_31!r}")
        for name in ("g_mu", "g_s", "g_p"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"AtomParams.{name} must be >= 0, got {getattr(self, name)!r}")
        if self.temperature < 0.0:
            raise ConfigError(f"AtomParams.temperature must be >= 0 K, got {self.temperature!r}")
        # raises ConfigError when T2 is shorter than the population-decay limit
        self.pure_dephasing()

    # --- decay rates (1/s) ---

    @property
    def gamma_spin_down(self) -> float:
        return 1.0 / self.t1_spin

    @property
    def gamma_spin_up(self) -> float:
        if not self.thermal_spin_bath:
            return 0.0
        return self.gamma_spin_down * boltzmann_ratio(self.temperature, self.f_mu)

    @property
    def gamma_31(self) -> float:
        return self.branching_31 / self.t1_opt

    @property
    def gamma_32(self) -> float:
        return (1.0 - self.branching_31) / self.t1_opt

    @property
    def coherence_spin(self) -> float:
        """Total decay rate of rho21."""
        return 1.0 / self.t2_spin

    @property
    def coherence_opt(self) -> float:
        """Total decay rate of rho31."""
        return 1.0 / self.t2_opt

    def pure_dephasing(self) -> tuple[float, float]:
        """Pure-dephasing rates (gamma_phi2, gamma_phi3) on |2> and |3>.

        Chosen so rho21 decays at 1/T2_spin and rho31 at 1/T2_opt in total.
        """
        up, down = self.gamma_spin_up, self.gamma_spin_down
        phi2 = 1.0 / self.t2_spin - 0.5 * (down + up)
        phi3 = 1.0 / self.t2_opt - 0.5 * (1.0 / self.t1_opt + up)
        if phi2 < 0.0:
            raise ConfigError(
                f"t2_spin={self.t2_spin:g} s is longer than the population-decay limit "
                f"({2.0 / (down + up):g} s); implied pure dephasing would be negative"
            )
        if phi3 < 0.0:
            raise ConfigError(
                f"t2_opt={self.t2_opt:g} s is longer than the population-decay limit "
                f"({2.0 / (1.0 / self.t1_opt + up):g} s); implied pure dephasing would be negative"
            )
        return phi2, phi3


@dataclass(frozen=True)
class AtomDetunings:
    """Detunings of one ion from the drives, rad/s.

    ``delta_s`` is derived, never stored: delta_s = delta_o + delta_mu.
    """

    delta_mu: float = 0.0
    delta_o: float = 0.0

    @property
    def delta_s(self) -> float:
        return self.delta_o + self.delta_mu


@dataclass(frozen=True)
class FieldState:
    """Classical cavity amplitudes seen by the ions.

    ``a`` and ``b`` are dimensionless (|amp|^2 = intracavity photons),
    ``omega_o`` is the pump Rabi frequency in rad/s.
    """

    a: complex = 0j
    b: complex = 0j
    omega_o: complex = 0j

    def rotated(self, phase: float) -> FieldState:
        """Multiply both mode amplitudes by exp(i*phase); pump untouched."""
        factor = complex(math.cos(phase), math.sin(phase))
        return replace(self, a=self.a * factor, b=self.b * factor)


@dataclass
class DensityMatrix:
    """3x3 density matrix over {|1>, |2>, |3>}."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (3, 3):
            raise ValueError(f"density matrix must be 3x3, got shape {self.rho.shape}")

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()

    @property
    def popdiff_13(self) -> float:
        """rho11 - rho33, the population difference seen by the signal."""
        return float(np.real(self.rho[0, 0] - self.rho[2, 2]))

    def element(self, i: int, j: int) -> complex:
        """rho_ij with 1-based level labels, i.e. <i|rho|j>."""
        return complex(self.rho[i - 1, j - 1])

    def invariant_violations(self, tol: float = 1e-12, positivity_tol: float = 1e-10) -> list[str]:
        """Return descriptions of broken invariants (empty when valid)."""
        problems: list[str] = []
        if not np.all(np.isfinite(self.rho)):
            return ["non-finite entries"]
        trace = np.trace(self.rho)
        if abs(trace - 1.0) > tol:
            problems.append(f"trace {trace:.15g} != 1")
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > tol:
            problems.append(f"non-Hermitian by {herm:.3e}")
        eigs = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if eigs.min() < -positivity_tol:
            problems.append(f"negative eigenvalue {eigs.min():.3e}")
        return problems


# ---------------------------------------------------------------------------
# Inhomogeneous ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InhomogeneousSpec:
    """Inhomogeneous broadening and the quadrature used to integrate it.

    Widths are FWHM in Hz; spans are half-widths of the truncation window
    in units of FWHM.  ``resolve_width`` (rad/s) is the core width of the
    sinh clustering used by the RESOLVED quadrature.
    """

    fwhm_opt: float = 340e6
    fwhm_spin: float = 50e6
    shape: LineShape = LineShape.GAUSSIAN
    n_opt: int = 201
    n_spin: int = 101
    span_opt: float = 3.0
    span_spin: float = 3.0
    quadrature: Quadrature = Quadrature.UNIFORM
    resolve_width: float = 1e6

    def __post_init__(self) -> None:
        for name in ("n_opt", "n_spin"):
            n = getattr(self, name)
            if n != 1 and (n < 3 or n % 2 == 0):
                raise ConfigError(f"{name} must be odd and >= 3 (or 1 for no broadening), got {n}")
        for name in ("span_opt", "span_spin", "fwhm_opt", "fwhm_spin", "resolve_width"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")


@dataclass
class DetuningGrid:
    """Quadrature nodes over the two inhomogeneous offsets.

    ``offsets_o`` / ``offsets_mu`` are the line-centre offsets (rad/s) of
    each node's optical and spin transitions; an ion's detuning from the
    drives is its offset minus the drive detuning in ``center``.  Nodes are
    stored row-major over a ``shape`` lattice whose axes are ``row_axis``
    (named ``row_name``) and ``col_axis`` (``col_name``).
    """

    offsets_o: np.ndarray
    offsets_mu: np.ndarray
    weights: np.ndarray
    n_eff: float
    shape: tuple[int, int]
    row_axis: np.ndarray
    col_axis: np.ndarray
    row_name: str = "delta_o"
    col_name: str = "delta_mu"
    center: tuple[float, float] = (0.0, 0.0)     # drive detunings (D_o, D_mu)

    def __post_init__(self) -> None:
        if self.weights.shape != self.offsets_o.shape or self.weights.shape != self.offsets_mu.shape:
            raise ValueError("offsets and weights must have matching shapes")
        if self.weights.size != self.shape[0] * self.shape[1]:
            raise ValueError("grid shape does not match node count")
        if np.any(self.weights < 0.0):
            raise ValueError("quadrature weights must be non-negative")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError(f"quadrature weights sum to {np.sum(self.weights)!r}, expected 1")
        if not self.n_eff > 0.0:
            raise ConfigError(f"n_eff must be > 0, got {self.n_eff!r}")

    def __len__(self) -> int:
        return int(self.weights.size)

    def ion_detunings(self, center: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-node (delta_o, delta_mu) detunings from the drives."""
        d_o, d_mu = self.center if center is None else center
        return self.offsets_o - d_o, self.offsets_mu - d_mu


@dataclass
class EnsembleResponse:
    """Ensemble-averaged atomic response at one set of fields.

    pol_mu = N sum_k w_k g_mu <sigma_12>_k with <sigma_12> = Tr(rho sigma_12)
    = rho[1, 0]; pol_s uses <sigma_13> = rho[2, 0]; pol_p uses
    <sigma_23> = rho[2, 1].  These enter the cavity equations as
    d(amp)/dt = ... - i*pol.  chi_* are the linear susceptibilities
    d(pol)/d(amp) used by the loaded cavity update.
    """

    pol_mu: complex
    pol_s: complex
    pol_p: complex
    rho_grid: np.ndarray                 # (N, 3, 3)
    popdiff_grid: np.ndarray             # (N,) rho11 - rho33
    delta_o: np.ndarray                  # (N,) ion detunings used
    delta_mu: np.ndarray
    grid: DetuningGrid
    chi_mu: complex = 0j
    chi_s: complex = 0j
    chi_p: complex = 0j

    @property
    def delta_s(self) -> np.ndarray:
        return self.delta_o + self.delta_mu


@dataclass
class Map2D:
    """A per-node observable laid out on the grid lattice."""

    values: np.ndarray                   # shape (n_rows, n_cols)
    row_axis: np.ndarray                 # rad/s
    col_axis: np.ndarray                 # rad/s
    row_name: str
    col_name: str
    delta_o: np.ndarray                  # same shape as values, rad/s
    delta_mu: np.ndarray

    @property
    def variation(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def argmin(self) -> tuple[int, int]:
        idx = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return int(idx[0]), int(idx[1])


# ---------------------------------------------------------------------------
# Cavities and drives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityParams:
    """One resonator: port couplings, intrinsic loss and detuning (rad/s)."""

    kappa1: float
    kappa2: float = 0.0
    kappai: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kappa1", "kappa2", "kappai"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"CavityParams.{name} must be >= 0, got {getattr(self, name)!r}")
        if not self.kappa_total > 0.0:
            raise ConfigError("CavityParams total loss kappa1+kappa2+kappai must be > 0")

    @property
    def kappa_total(self) -> float:
        return self.kappa1 + self.kappa2 + self.kappai

    def impedance_matched(self) -> CavityParams:
        """Same resonator with kappa1 = kappa2 + kappai (intrinsic loss kept)."""
        return replace(self, kappa1=self.kappa2 + self.kappai)


@dataclass(frozen=True)
class DriveInputs:
    """External drives.  Drive detunings are from the line centres, rad/s.

    ``p_mw_dbm = -inf`` means no microwave input.
    """

    p_mw_dbm: float
    p_opt: float                 # W
    f_mw: float                  # Hz
    f_opt: float                 # Hz
    delta_o: float = 0.0
    delta_mu: float = 0.0

    def __post_init__(self) -> None:
        if self.p_opt < 0.0:
            raise ConfigError(f"DriveInputs.p_opt must be >= 0 W, got {self.p_opt!r}")
        if not (self.f_mw > 0.0 and self.f_opt > 0.0):
            raise ConfigError("DriveInputs frequencies must be > 0 Hz")
        if math.isnan(self.p_mw_dbm) or self.p_mw_dbm == math.inf:
            raise ConfigError(f"DriveInputs.p_mw_dbm must be finite or -inf, got {self.p_mw_dbm!r}")


@dataclass(frozen=True)
class SolverNumerics:
    """Controls for the self-consistent field iteration."""

    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    loaded_update: bool = True
    self_consistent_pump: bool = False
    divergence_limit: float = 1e12
    check_invariants: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping!r}")
        if not self.tol > 0.0:
            raise ConfigError(f"tol must be > 0, got {self.tol!r}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class TransducerSystem:
    """Everything the fixed-point solver needs about the physical system."""

    atom: AtomParams
    inhomogeneity: InhomogeneousSpec
    n_eff: float
    mw_cavity: CavityParams
    opt_cavity: CavityParams
    drive: DriveInputs


@dataclass
class SteadyStateSolution:
    """Converged joint steady state of ions and cavity fields."""

    fields: FieldState
    response: EnsembleResponse
    eta: float
    iterations: int
    residual: float
    converged: bool = True
    mw_flux: float = 0.0          # input microwave photons/s
    pump_amplitude: complex = 0j  # intracavity pump amplitude

    @property
    def signal_photons(self) -> float:
        return abs(self.fields.a) ** 2

    @property
    def microwave_photons(self) -> float:
        return abs(self.fields.b) ** 2


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepAxis:
    """One swept configuration field, addressed by its dotted config key."""

    name: str                       # e.g. "drive.p_mw_dbm"
    start: float
    stop: float
    count: int
    scale: AxisScale = AxisScale.LINEAR
    unit: str = ""

    def __post_init__(self) -> None:
        if self.count < 2:
            raise ConfigError(f"sweep axis {self.name!r} needs count >= 2, got {self.count}")
        if self.scale is AxisScale.LOG and (self.start <= 0.0 or self.stop <= 0.0):
            raise ConfigError(f"log-scaled axis {self.name!r} needs positive bounds")

    def values(self) -> np.ndarray:
        if self.scale is AxisScale.LOG:
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """Up to two axes, the requested outputs and the base configuration."""

    axes: tuple[SweepAxis, ...]
    outputs: tuple[SweepOutput, ...] = (SweepOutput.ETA,)
    base_config: Any = None         # RunConfig; Any keeps this module import-free

    def __post_init__(self) -> None:
        if not 1 <= len(self.axes) <= 2:
            raise ConfigError(f"a sweep takes 1 or 2 axes, got {len(self.axes)}")
        if not self.outputs:
            raise ConfigError("a sweep needs at least one output")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.count for axis in self.axes)


@dataclass
class SweepResult:
    """Value lattices of a sweep with per-cell convergence flags.

    Non-converged cells hold NaN in every output and False in
    ``converged``; they are never zero-filled.
    """

    axes: tuple[SweepAxis, ...]
    axis_values: tuple[np.ndarray, ...]
    values: dict[str, np.ndarray]
    converged: np.ndarray
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shape = tuple(len(v) for v in self.axis_values)
        if self.converged.shape != shape:
            raise ValueError(f"convergence flags have shape {self.converged.shape}, axes give {shape}")
        for name, lattice in self.values.items():
            if lattice.shape != shape:
                raise ValueError(f"output {name!r} has shape {lattice.shape}, axes give {shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.converged.shape

    @property
    def failed_cells(self) -> int:
        return int(np.count_nonzero(~self.converged))

    def peak(self, output: str = "eta") -> tuple[float, tuple[float, ...]]:
        """Largest finite value of an output and the axis coordinates there."""
        lattice = self.values[output]
        if not np.any(np.isfinite(lattice)):
            return math.nan, tuple(math.nan for _ in self.axes)
        idx = np.unravel_index(int(np.nanargmax(lattice)), lattice.shape)
        coords = tuple(float(vals[i]) for vals, i in zip(self.axis_values, idx))
        return float(lattice[idx]), coords
