"""Inhomogeneous ensemble: detuning grids and ensemble-averaged response.

Every grid node is one class of ions with fixed optical and spin
line-centre offsets.  All nodes are solved in a single batched linear
solve and reduced with fixed-order weighted sums, so results do not
depend on thread count or scheduling.

Usage:
    from src.ensemble import build_detuning_grid, ensemble_response

    grid = build_detuning_grid(spec, n_eff=8e15)
    resp = ensemble_response(grid, params, fields)

    lattice = population_lattice(spec, n_eff=8e15)
    pop = population_difference_map(ensemble_response(lattice, params, fields))
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core_model import (
    K_MU,
    K_S,
    base_liouvillian,
    commutator_superop,
    hermitize,
    solve_stationary,
    transition,
)
from .models import (
    TWO_PI,
    AtomParams,
    DensityInvariantError,
    DetuningGrid,
    EnsembleResponse,
    FieldState,
    InhomogeneousSpec,
    LineShape,
    Map2D,
    Quadrature,
    SingularSystemError,
)

logger = logging.getLogger(__name__)

# Flat vec(rho) indices of rho[1,0], rho[2,0], rho[2,1].
_IDX_21 = 3
_IDX_31 = 6
_IDX_32 = 7

_TRACE_TOL = 1e-9
_HERMITIAN_TOL = 1e-8
_POSITIVITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# Lineshapes and axes
# ---------------------------------------------------------------------------

def lineshape_density(shape: LineShape, x: np.ndarray, fwhm: float) -> np.ndarray:
    """Unnormalised lineshape with peak 1 at x = 0."""
    u = np.asarray(x, dtype=float) / fwhm
    if shape is LineShape.GAUSSIAN:
        return np.exp(-4.0 * math.log(2.0) * u * u)
    if shape is LineShape.LORENTZIAN:
        return 1.0 / (1.0 + 4.0 * u * u)
    raise ValueError(f"unknown lineshape {shape!r}")


def uniform_axis(fwhm: float, n: int, span: float, shape: LineShape) -> tuple[np.ndarray, np.ndarray]:
    """Uniform trapezoidal nodes over +-span*fwhm and normalised weights."""
    if n == 1:
        return np.zeros(1), np.ones(1)
    half = span * fwhm
    x = np.linspace(-half, half, n)
    trap = np.full(n, x[1] - x[0])
    trap[0] *= 0.5
    trap[-1] *= 0.5
    w = trap * lineshape_density(shape, x, fwhm)
    return x, w / np.sum(w)


def clustered_axis(half: float, n: int, width: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes x = width*sinh(u) over [-half, half], uniform in u.

    Spacing is ~width*du near zero and grows geometrically outwards.
    Returns (nodes, trapezoidal measure dx) without any lineshape.
    """
    if n == 1:
        return np.zeros(1), np.ones(1)
    u_max = math.asinh(half / width)
    u = np.linspace(-u_max, u_max, n)
    x = width * np.sinh(u)
    q = (u[1] - u[0]) * width * np.cosh(u)
    q[0] *= 0.5
    q[-1] *= 0.5
    return x, q


# ---------------------------------------------------------------------------
# Grid construction
# ---------------------------------------------------------------------------

def build_detuning_grid(
    spec: InhomogeneousSpec,
    n_eff: float,
    center: tuple[float, float] = (0.0, 0.0),
) -> DetuningGrid:
    """Tensor-product quadrature over the two inhomogeneous lines.

    ``center`` holds the drive detunings (D_o, D_mu) in rad/s.  The UNIFORM
    layout ignores it apart from recording it; the RESOLVED layout clusters
    nodes on the ions resonant with those drives.
    """
    if spec.quadrature is Quadrature.RESOLVED:
        grid = _resolved_grid(spec, n_eff, center)
    else:
        grid = _uniform_grid(spec, n_eff, center)
    logger.debug(
        "Detuning grid %s: %dx%d nodes, %d with non-zero weight",
        spec.quadrature.value, grid.shape[0], grid.shape[1], int(np.count_nonzero(grid.weights)),
    )
    return grid


def _uniform_grid(spec: InhomogeneousSpec, n_eff: float, center: tuple[float, float]) -> DetuningGrid:
    x_o, w_o = uniform_axis(TWO_PI * spec.fwhm_opt, spec.n_opt, spec.span_opt, spec.shape)
    x_mu, w_mu = uniform_axis(TWO_PI * spec.fwhm_spin, spec.n_spin, spec.span_spin, spec.shape)
    weights = np.outer(w_o, w_mu).ravel()
    return DetuningGrid(
        offsets_o=np.repeat(x_o, x_mu.size),
        offsets_mu=np.tile(x_mu, x_o.size),
        weights=weights / np.sum(weights),
        n_eff=n_eff,
        shape=(x_o.size, x_mu.size),
        row_axis=x_o,
        col_axis=x_mu,
        row_name="delta_o",
        col_name="delta_mu",
        center=(float(center[0]), float(center[1])),
    )


def _resolved_grid(spec: InhomogeneousSpec, n_eff: float, center: tuple[float, float]) -> DetuningGrid:
    d_o, d_mu = float(center[0]), float(center[1])
    fwhm_o = TWO_PI * spec.fwhm_opt
    fwhm_mu = TWO_PI * spec.fwhm_spin
    window_o = spec.span_opt * fwhm_o
    window_mu = spec.span_spin * fwhm_mu

    if spec.n_spin == 1:
        x_mu, q_mu = np.array([-d_mu]), np.ones(1)
    else:
        x_mu, q_mu = clustered_axis(window_mu + abs(d_mu), spec.n_spin, spec.resolve_width)

    if spec.n_opt == 1:
        # no optical broadening: every ion sits on the optical line centre
        offsets_mu = x_mu + d_mu
        offsets_o = np.zeros_like(offsets_mu)
        measure = q_mu.copy()
        row_axis, row_name = np.zeros(1), "delta_o"
    else:
        spin_reach = 0.0 if spec.n_spin == 1 else window_mu
        x_s, q_s = clustered_axis(window_o + spin_reach + abs(d_o) + abs(d_mu), spec.n_opt, spec.resolve_width)
        delta_s = np.repeat(x_s, x_mu.size)
        delta_mu = np.tile(x_mu, x_s.size)
        offsets_o = delta_s - delta_mu + d_o
        offsets_mu = delta_mu + d_mu
        measure = np.outer(q_s, q_mu).ravel()
        row_axis, row_name = x_s, "delta_s"

    inside = (np.abs(offsets_o) <= window_o * (1.0 + 1e-12)) & (np.abs(offsets_mu) <= window_mu * (1.0 + 1e-12))
    weights = measure * inside
    weights = weights * lineshape_density(spec.shape, offsets_o, fwhm_o)
    weights = weights * lineshape_density(spec.shape, offsets_mu, fwhm_mu)
    total = float(np.sum(weights))
    if not total > 0.0:
        raise SingularSystemError("resolved detuning grid has no nodes inside the lineshape window")
    return DetuningGrid(
        offsets_o=offsets_o,
        offsets_mu=offsets_mu,
        weights=weights / total,
        n_eff=n_eff,
        shape=(row_axis.size, x_mu.size),
        row_axis=row_axis,
        col_axis=x_mu,
        row_name=row_name,
        col_name="delta_mu",
        center=(d_o, d_mu),
    )


def population_lattice(
    spec: InhomogeneousSpec,
    n_eff: float,
    center: tuple[float, float] = (0.0, 0.0),
) -> DetuningGrid:
    """Ion-detuning lattice for maps: delta_o rows, delta_mu columns.

    Samples the per-ion response rather than integrating it, so every node
    carries the same weight.  RESOLVED specs cluster both axes on the ions
    resonant with the drives.
    """
    d_o, d_mu = float(center[0]), float(center[1])
    fwhm_o = TWO_PI * spec.fwhm_opt
    fwhm_mu = TWO_PI * spec.fwhm_spin
    if spec.quadrature is Quadrature.RESOLVED:
        x_o, _ = clustered_axis(spec.span_opt * fwhm_o, spec.n_opt, spec.resolve_width)
        x_mu, _ = clustered_axis(spec.span_spin * fwhm_mu, spec.n_spin, spec.resolve_width)
    else:
        x_o, _ = uniform_axis(fwhm_o, spec.n_opt, spec.span_opt, spec.shape)
        x_mu, _ = uniform_axis(fwhm_mu, spec.n_spin, spec.span_spin, spec.shape)
    count = x_o.size * x_mu.size
    return DetuningGrid(
        offsets_o=np.repeat(x_o, x_mu.size) + d_o,
        offsets_mu=np.tile(x_mu, x_o.size) + d_mu,
        weights=np.full(count, 1.0 / count),
        n_eff=n_eff,
        shape=(x_o.size, x_mu.size),
        row_axis=x_o,
        col_axis=x_mu,
        row_name="delta_o",
        col_name="delta_mu",
        center=(d_o, d_mu),
    )


# ---------------------------------------------------------------------------
# Ensemble response
# ---------------------------------------------------------------------------

def _check_node_invariants(rho_raw: np.ndarray, delta_o: np.ndarray, delta_mu: np.ndarray) -> None:
    trace = rho_raw[:, 0, 0] + rho_raw[:, 1, 1] + rho_raw[:, 2, 2]
    herm = np.max(np.abs(rho_raw - np.conj(np.swapaxes(rho_raw, 1, 2))), axis=(1, 2))
    min_eig = np.linalg.eigvalsh(hermitize(rho_raw))[:, 0]
    bad = (np.abs(trace - 1.0) > _TRACE_TOL) | (herm > _HERMITIAN_TOL) | (min_eig < -_POSITIVITY_TOL)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DensityInvariantError(
            f"node density matrix invalid: trace={trace[k]:.12g}, "
            f"hermiticity error={herm[k]:.3e}, min eigenvalue={min_eig[k]:.3e}",
            node_index=k,
            node=(float(delta_o[k]), float(delta_mu[k])),
        )


def ensemble_response(
    grid: DetuningGrid,
    params: AtomParams,
    fields: FieldState,
    center: tuple[float, float] | None = None,
    with_susceptibility: bool = False,
    check_invariants: bool = True,
) -> EnsembleResponse:
    """Solve every grid node at the given fields and reduce the polarisations.

    ``center`` overrides the drive detunings recorded on the grid.  With
    ``with_susceptibility`` the linear responses d(pol)/d(amp) of all
    three modes are solved alongside, reusing the same systems.
    """
    delta_o, delta_mu = grid.ion_detunings(center)
    delta_s = delta_o + delta_mu
    liouvillians = (
        base_liouvillian(params, fields)[np.newaxis]
        + delta_mu[:, np.newaxis, np.newaxis] * K_MU
        + delta_s[:, np.newaxis, np.newaxis] * K_S
    )
    perturbations = None
    if with_susceptibility:
        perturbations = [
            commutator_superop(params.g_mu * transition(1, 0)),
            commutator_superop(params.g_s * transition(2, 0)),
            commutator_superop(params.g_p * transition(2, 1)),
        ]
    try:
        rho_vec, responses = solve_stationary(liouvillians, perturbations)
    except SingularSystemError as exc:
        if exc.node_index is None:
            raise
        k = exc.node_index
        raise SingularSystemError(
            "ensemble steady state failed", node_index=k, node=(float(delta_o[k]), float(delta_mu[k]))
        ) from exc

    rho_raw = rho_vec.reshape(-1, 3, 3)
    if check_invariants:
        _check_node_invariants(rho_raw, delta_o, delta_mu)
    rho = hermitize(rho_raw)

    w = grid.weights
    n_eff = grid.n_eff
    pol_mu = n_eff * params.g_mu * np.sum(w * rho[:, 1, 0])
    pol_s = n_eff * params.g_s * np.sum(w * rho[:, 2, 0])
    pol_p = n_eff * params.g_p * np.sum(w * rho[:, 2, 1])

    chi_mu = chi_s = chi_p = 0j
    if responses is not None:
        chi_mu = n_eff * params.g_mu * np.sum(w * responses[:, _IDX_21, 0])
        chi_s = n_eff * params.g_s * np.sum(w * responses[:, _IDX_31, 1])
        chi_p = n_eff * params.g_p * np.sum(w * responses[:, _IDX_32, 2])

    return EnsembleResponse(
        pol_mu=complex(pol_mu),
        pol_s=complex(pol_s),
        pol_p=complex(pol_p),
        rho_grid=rho,
        popdiff_grid=np.real(rho[:, 0, 0] - rho[:, 2, 2]),
        delta_o=delta_o,
        delta_mu=delta_mu,
        grid=grid,
        chi_mu=complex(chi_mu),
        chi_s=complex(chi_s),
        chi_p=complex(chi_p),
    )


def population_difference_map(resp: EnsembleResponse) -> Map2D:
    """rho11 - rho33 of every node laid out on the grid shape."""
    shape = resp.grid.shape
    return Map2D(
        values=resp.popdiff_grid.reshape(shape),
        row_axis=resp.grid.row_axis,
        col_axis=resp.grid.col_axis,
        row_name=resp.grid.row_name,
        col_name=resp.grid.col_name,
        delta_o=resp.delta_o.reshape(shape),
        delta_mu=resp.delta_mu.reshape(shape),
    )


def signal_absorption_rate(resp: EnsembleResponse, params: AtomParams, grid: DetuningGrid | None = None) -> float:
    """Rate (rad/s) at which the ions reabsorb signal photons.

    kappa_abs = 2 N g_s^2 sum_k w_k (rho11 - rho33)_k gamma / (gamma^2 + delta_s,k^2)
    with gamma = 1/T2_opt.
    """
    grid = resp.grid if grid is None else grid
    gamma = params.coherence_opt
    lorentz = gamma / (gamma * gamma + resp.delta_s ** 2)
    return float(2.0 * grid.n_eff * params.g_s ** 2 * np.sum(grid.weights * resp.popdiff_grid * lorentz))

