"""Delta-system transducer simulator - Models and Solvers.

Steady-state model of cavity-enhanced Raman heterodyne microwave-to-optical
conversion in an inhomogeneously broadened three-level ensemble: the
single-ion master equation, the ensemble quadrature, and the self-consistent
microwave / optical cavity fields.

Parameter records, grids and results live in ``models``; the numerical
entry points are re-exported here.
"""

from .models import (
    AtomParams,
    CavityParams,
    ConfigError,
    ConvergenceError,
    DensityMatrix,
    DivergenceError,
    DriveInputs,
    FieldState,
    InhomogeneousSpec,
    SteadyStateSolution,
    SweepAxis,
    SweepResult,
    SweepSpec,
    TransducerSystem,
)

from .core_model import build_liouvillian, steady_state_atom
from .ensemble import build_detuning_grid, ensemble_response
from .cavity import fixed_point_solve

__all__ = [
    "AtomParams",
    "CavityParams",
    "ConfigError",
    "ConvergenceError",
    "DensityMatrix",
    "DivergenceError",
    "DriveInputs",
    "FieldState",
    "InhomogeneousSpec",
    "SteadyStateSolution",
    "SweepAxis",
    "SweepResult",
    "SweepSpec",
    "TransducerSystem",
    "build_detuning_grid",
    "build_liouvillian",
    "ensemble_response",
    "fixed_point_solve",
    "steady_state_atom",
]
