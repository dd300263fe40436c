"""Single-ion Delta-system master equation.

Builds the 9x9 Lindblad generator for one ion, solves for its steady
state (one ion or a whole stack of ions at once) and provides an
independent time-propagation oracle used to cross-check the solver.

Vectorisation is row-major: vec(rho)[3*i + j] = rho[i, j], so that
vec(A rho B) = (A kron B^T) vec(rho).

Usage:
    from src.core_model import build_liouvillian, steady_state_atom

    L = build_liouvillian(params, AtomDetunings(), FieldState(omega_o=1e5))
    rho = steady_state_atom(L)
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .models import (
    AtomDetunings,
    AtomParams,
    DensityMatrix,
    FieldState,
    SingularSystemError,
    StepSizeError,
    boltzmann_ratio,
)

logger = logging.getLogger(__name__)

DIM = 3
VEC_DIM = DIM * DIM

_IDENTITY = np.eye(DIM, dtype=complex)

# vec(I): the row that, dotted with vec(rho), gives Tr(rho).
TRACE_ROW = _IDENTITY.reshape(VEC_DIM)


def transition(i: int, j: int) -> np.ndarray:
    """|i><j| with 0-based level indices."""
    op = np.zeros((DIM, DIM), dtype=complex)
    op[i, j] = 1.0
    return op


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i[h, rho]."""
    return -1j * (np.kron(h, _IDENTITY) - np.kron(_IDENTITY, h.T))


def dissipator_superop(op: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> op rho op^+ - {op^+ op, rho}/2."""
    n = op.conj().T @ op
    return np.kron(op, op.conj()) - 0.5 * np.kron(n, _IDENTITY) - 0.5 * np.kron(_IDENTITY, n.T)


# Detuning generators: L(delta) = L(0) + delta_mu * K_MU + delta_s * K_S.
K_MU = commutator_superop(transition(1, 1))
K_S = commutator_superop(transition(2, 2))


# ---------------------------------------------------------------------------
# Generator construction
# ---------------------------------------------------------------------------

def coupling_hamiltonian(params: AtomParams, fields: FieldState) -> np.ndarray:
    """Field part of H (rotating frame, hbar = 1)."""
    h = np.zeros((DIM, DIM), dtype=complex)
    h[2, 1] = fields.omega_o                    # Omega sigma_32
    h[2, 0] = params.g_s * fields.a             # g_s a sigma_31
    h[1, 0] = params.g_mu * fields.b            # g_mu b sigma_21
    return h + h.conj().T


def hamiltonian(params: AtomParams, det: AtomDetunings, fields: FieldState) -> np.ndarray:
    h = coupling_hamiltonian(params, fields)
    h[1, 1] += det.delta_mu
    h[2, 2] += det.delta_s
    return h


def jump_operators(params: AtomParams) -> list[np.ndarray]:
    """Collapse operators for spin and optical decay plus pure dephasing."""
    phi2, phi3 = params.pure_dephasing()
    ops = [
        math.sqrt(params.gamma_spin_down) * transition(0, 1),
        math.sqrt(params.gamma_31) * transition(0, 2),
        math.sqrt(params.gamma_32) * transition(1, 2),
        math.sqrt(2.0 * phi2) * transition(1, 1),
        math.sqrt(2.0 * phi3) * transition(2, 2),
    ]
    if params.gamma_spin_up > 0.0:
        ops.append(math.sqrt(params.gamma_spin_up) * transition(1, 0))
    return ops


def dissipator(params: AtomParams) -> np.ndarray:
    """Sum of all dissipators; independent of fields and detunings."""
    total = np.zeros((VEC_DIM, VEC_DIM), dtype=complex)
    for op in jump_operators(params):
        total += dissipator_superop(op)
    return total


def build_liouvillian(params: AtomParams, det: AtomDetunings, fields: FieldState) -> np.ndarray:
    """Return the 9x9 generator L with d vec(rho)/dt = L vec(rho).

    Raises ConfigError (via AtomParams.pure_dephasing) when the implied
    pure-dephasing rate would be negative.
    """
    return commutator_superop(hamiltonian(params, det, fields)) + dissipator(params)


def base_liouvillian(params: AtomParams, fields: FieldState) -> np.ndarray:
    """Generator at zero detuning; add delta_mu*K_MU + delta_s*K_S per ion."""
    return commutator_superop(coupling_hamiltonian(params, fields)) + dissipator(params)


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------

def _bordered(liouvillian: np.ndarray) -> np.ndarray:
    """Replace the first equation with the trace constraint."""
    system = np.array(liouvillian, dtype=complex, copy=True)
    system[..., 0, :] = TRACE_ROW
    return system


def _locate_singular(systems: np.ndarray) -> int:
    for k in range(systems.shape[0]):
        m = systems[k]
        if not np.all(np.isfinite(m)) or np.linalg.matrix_rank(m) < VEC_DIM:
            return k
    # LAPACK flagged an exactly-zero pivot that rank() tolerates; report the worst-conditioned.
    return int(np.argmax(np.linalg.cond(systems)))


def solve_stationary(
    liouvillians: np.ndarray,
    perturbations: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Batched steady states and, optionally, their first-order responses.

    ``liouvillians`` has shape (N, 9, 9).  For each 9x9 ``perturbation`` P
    the response d(vec rho) solves L d = -P vec(rho) with Tr(d) = 0.
    Returns (rho_vecs (N, 9), responses (N, 9, len(perturbations)) or None).
    """
    systems = _bordered(liouvillians)
    n = systems.shape[0]
    rhs = np.zeros((n, VEC_DIM, 1), dtype=complex)
    rhs[:, 0, 0] = 1.0
    try:
        rho = np.linalg.solve(systems, rhs)[..., 0]
    except np.linalg.LinAlgError as exc:
        k = _locate_singular(systems)
        raise SingularSystemError("steady-state system is singular", node_index=k) from exc
    if not np.all(np.isfinite(rho)):
        k = int(np.argmax(~np.all(np.isfinite(rho), axis=1)))
        raise SingularSystemError("steady-state solve produced non-finite values", node_index=k)

    if not perturbations:
        return rho, None

    # (N, 9, m): column c is -P_c vec(rho), with the trace equation set to zero
    sources = np.stack([-(rho @ p.T) for p in perturbations], axis=-1)
    sources[:, 0, :] = 0.0
    responses = np.linalg.solve(systems, sources)
    return rho, responses


def hermitize(rho: np.ndarray) -> np.ndarray:
    """Project (..., 3, 3) matrices onto their Hermitian part."""
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def steady_state_atom(liouvillian: np.ndarray) -> DensityMatrix:
    """Unique stationary state of a single 9x9 generator.

    Raises SingularSystemError when the bordered system is rank deficient.
    """
    lv = np.asarray(liouvillian, dtype=complex)
    if lv.shape != (VEC_DIM, VEC_DIM):
        raise ValueError(f"expected a 9x9 generator, got shape {lv.shape}")
    if np.linalg.matrix_rank(_bordered(lv)) < VEC_DIM:
        raise SingularSystemError("steady-state system is singular: stationary state not unique")
    rho_vec, _ = solve_stationary(lv[np.newaxis])
    return DensityMatrix(hermitize(rho_vec[0].reshape(DIM, DIM)))


def thermal_state(temperature: float, f_mu: float) -> DensityMatrix:
    """Boltzmann populations on the spin doublet, |3> empty."""
    ratio = boltzmann_ratio(temperature, f_mu)
    p1 = 1.0 / (1.0 + ratio)
    return DensityMatrix(np.diag([p1, 1.0 - p1, 0.0]).astype(complex))


# ---------------------------------------------------------------------------
# Time-propagation oracle
# ---------------------------------------------------------------------------

def rk4_step_matrix(liouvillian: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for a linear ODE as a matrix polynomial."""
    z = dt * liouvillian
    z2 = z @ z
    z3 = z2 @ z
    z4 = z3 @ z
    return np.eye(VEC_DIM, dtype=complex) + z + z2 / 2.0 + z3 / 6.0 + z4 / 24.0


def propagate_oracle(
    liouvillian: np.ndarray,
    rho0: DensityMatrix,
    t_final: float,
    dt: float,
    trace_tol: float = 1e-6,
) -> DensityMatrix:
    """Evolve rho0 by fixed-step RK4 for ceil(t_final/dt) steps.

    The constant-step RK4 map is applied by repeated squaring, which is
    exactly the sequential integration but needs only O(log n) products.
    Raises StepSizeError when dt * ||L||_2 >= 0.1 or when the trace
    drifts by more than ``trace_tol``; the returned state is renormalised.
    """
    if t_final < 0.0:
        raise ValueError(f"t_final must be >= 0, got {t_final!r}")
    if t_final == 0.0:
        return DensityMatrix(rho0.rho.copy())
    if not dt > 0.0:
        raise StepSizeError(f"dt must be > 0, got {dt!r}")
    norm = float(np.linalg.norm(liouvillian, 2))
    if dt * norm >= 0.1:
        raise StepSizeError(f"dt*||L|| = {dt * norm:.3g} >= 0.1; reduce dt below {0.1 / norm:.3e} s")

    steps = math.ceil(t_final / dt)
    propagator = np.linalg.matrix_power(rk4_step_matrix(liouvillian, dt), steps)
    rho_vec = propagator @ rho0.rho.reshape(VEC_DIM)
    trace = complex(TRACE_ROW @ rho_vec)
    if abs(trace - 1.0) > trace_tol:
        raise StepSizeError(f"trace drifted to {trace:.9g} over {steps} steps")
    logger.debug("RK4 oracle: %d steps, trace drift %.2e", steps, abs(trace - 1.0))
    return DensityMatrix(hermitize((rho_vec / trace).reshape(DIM, DIM)))
