"""Classical cavity modes and the self-consistent field solver.

All kappa values are energy decay rates in rad/s: an empty cavity's
amplitude decays at kappa/2 and port ``j`` emits kappa_j * |amp|**2
photons per second.  Drive amplitudes are sqrt(photons/s).

Cavity equation used everywhere:

    d(amp)/dt = -(i*delta_c + kappa/2) * amp - i*pol + sqrt(kappa1) * drive

Usage:
    from src.cavity import fixed_point_solve

    solution = fixed_point_solve(system, SolverNumerics())
    print(solution.eta)
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from .ensemble import build_detuning_grid, ensemble_response
from .models import (
    PLANCK,
    CavityParams,
    ConvergenceError,
    DetuningGrid,
    DivergenceError,
    DriveInputs,
    FieldState,
    SolverNumerics,
    SteadyStateSolution,
    TransducerSystem,
    UndefinedInputError,
)

logger = logging.getLogger(__name__)

# Relative updates are measured against max(|amp|, this floor).
AMPLITUDE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Unit conversions
# ---------------------------------------------------------------------------

def dbm_to_watts(p_dbm: float) -> float:
    """10^((p - 30)/10); -inf dBm is zero power."""
    if p_dbm == -math.inf:
        return 0.0
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def input_photon_flux(power: float, frequency: float) -> float:
    """Photons per second carried by ``power`` watts at ``frequency`` Hz."""
    if not frequency > 0.0:
        raise ValueError(f"frequency must be > 0 Hz, got {frequency!r}")
    return power / (PLANCK * frequency)


# ---------------------------------------------------------------------------
# Input-output relations
# ---------------------------------------------------------------------------

def cavity_steady_amplitude(cav: CavityParams, drive_amp: complex, pol: complex) -> complex:
    """Stationary amplitude for a given ensemble polarisation."""
    return (math.sqrt(cav.kappa1) * drive_amp - 1j * pol) / (1j * cav.delta_c + 0.5 * cav.kappa_total)


def loaded_cavity_amplitude(
    cav: CavityParams,
    drive_amp: complex,
    pol: complex,
    chi: complex,
    amp_old: complex,
) -> complex:
    """Stationary amplitude with the ensemble's linear response folded in.

    Linearising pol(amp) ~ pol + chi*(amp - amp_old) around the current
    amplitude and solving the cavity equation exactly.  Coincides with
    cavity_steady_amplitude at a fixed point.
    """
    denom = 1j * cav.delta_c + 0.5 * cav.kappa_total + 1j * chi
    return (math.sqrt(cav.kappa1) * drive_amp - 1j * (pol - chi * amp_old)) / denom


def pump_amplitude(p_opt: float, opt_cavity: CavityParams, f_opt: float) -> complex:
    """Resonant empty-cavity pump amplitude; |amp|^2 = 4 kappa1 Phi / kappa^2."""
    drive = math.sqrt(input_photon_flux(p_opt, f_opt))
    return cavity_steady_amplitude(replace(opt_cavity, delta_c=0.0), drive, 0j)


def pump_rabi(p_opt: float, opt_cavity: CavityParams, g_p: float, f_opt: float) -> complex:
    """Pump Rabi frequency g_p * sqrt(n_p) for the empty resonant cavity."""
    return g_p * pump_amplitude(p_opt, opt_cavity, f_opt)


def reflection_coefficient(cav: CavityParams, delta: float | None = None) -> complex:
    """Empty-cavity field reflection at port 1; ``delta`` defaults to cav.delta_c."""
    delta = cav.delta_c if delta is None else delta
    return 1.0 - cav.kappa1 / (1j * delta + 0.5 * cav.kappa_total)


def loaded_reflection(cav: CavityParams, drive_amp: complex, amp: complex) -> complex:
    """Port-1 reflection with the ions present: 1 - sqrt(kappa1)*amp/drive."""
    if drive_amp == 0:
        raise UndefinedInputError("reflection is undefined without an input drive")
    return 1.0 - math.sqrt(cav.kappa1) * amp / drive_amp


def conversion_efficiency(fields: FieldState, opt_cavity: CavityParams, drive: DriveInputs) -> float:
    """Signal photons out of the optical port per input microwave photon."""
    flux = input_photon_flux(dbm_to_watts(drive.p_mw_dbm), drive.f_mw)
    if flux <= 0.0:
        raise UndefinedInputError("conversion efficiency is undefined at zero microwave input")
    return opt_cavity.kappa1 * abs(fields.a) ** 2 / flux


# ---------------------------------------------------------------------------
# Self-consistent solver
# ---------------------------------------------------------------------------

def _relative_update(new: complex, old: complex) -> float:
    scale = max(abs(new), abs(old), AMPLITUDE_FLOOR)
    return abs(new - old) / scale


def fixed_point_solve(
    system: TransducerSystem,
    numerics: SolverNumerics | None = None,
    grid: DetuningGrid | None = None,
) -> SteadyStateSolution:
    """Iterate ensemble response and cavity amplitudes to a joint steady state.

    Each iteration solves every grid node at the current fields, maps the
    resulting polarisations to new cavity amplitudes and applies the damped
    update x <- (1 - damping) x + damping x_new.  Converges when the largest
    relative change of the undamped map is below ``numerics.tol``.

    Raises ConvergenceError after ``max_iter`` iterations and DivergenceError
    when an amplitude exceeds ``divergence_limit`` or turns non-finite.
    """
    numerics = numerics or SolverNumerics()
    atom, drive = system.atom, system.drive
    mw_cav, opt_cav = system.mw_cavity, system.opt_cavity
    pump_cav = replace(opt_cav, delta_c=0.0)
    center = (drive.delta_o, drive.delta_mu)
    if grid is None:
        grid = build_detuning_grid(system.inhomogeneity, system.n_eff, center)

    mw_flux = input_photon_flux(dbm_to_watts(drive.p_mw_dbm), drive.f_mw)
    d_mw = math.sqrt(mw_flux)
    d_pump = math.sqrt(input_photon_flux(drive.p_opt, drive.f_opt))
    loaded = numerics.loaded_update
    alpha = numerics.damping

    b = cavity_steady_amplitude(mw_cav, d_mw, 0j)
    a = 0j
    c = cavity_steady_amplitude(pump_cav, d_pump, 0j)
    residual = math.inf

    def respond(a_: complex, b_: complex, c_: complex):
        fields = FieldState(a=a_, b=b_, omega_o=atom.g_p * c_)
        return ensemble_response(
            grid, atom, fields, center=center,
            with_susceptibility=loaded, check_invariants=numerics.check_invariants,
        )

    for iteration in range(1, numerics.max_iter + 1):
        resp = respond(a, b, c)
        if loaded:
            b_new = loaded_cavity_amplitude(mw_cav, d_mw, resp.pol_mu, resp.chi_mu, b)
            a_new = loaded_cavity_amplitude(opt_cav, 0j, resp.pol_s, resp.chi_s, a)
        else:
            b_new = cavity_steady_amplitude(mw_cav, d_mw, resp.pol_mu)
            a_new = cavity_steady_amplitude(opt_cav, 0j, resp.pol_s)
        c_new = c
        if numerics.self_consistent_pump:
            if loaded:
                c_new = loaded_cavity_amplitude(pump_cav, d_pump, resp.pol_p, resp.chi_p, c)
            else:
                c_new = cavity_steady_amplitude(pump_cav, d_pump, resp.pol_p)

        residual = max(_relative_update(a_new, a), _relative_update(b_new, b), _relative_update(c_new, c))
        a = (1.0 - alpha) * a + alpha * a_new
        b = (1.0 - alpha) * b + alpha * b_new
        c = (1.0 - alpha) * c + alpha * c_new

        biggest = max(abs(a), abs(b), abs(c))
        if not np.isfinite(biggest) or biggest > numerics.divergence_limit:
            raise DivergenceError("cavity amplitude diverged", residual=residual, iterations=iteration)
        logger.debug("iteration %d: residual %.3e, |a|=%.4e, |b|=%.4e", iteration, residual, abs(a), abs(b))
        if residual < numerics.tol:
            break
    else:
        raise ConvergenceError(
            "fixed-point iteration did not converge; the operating point may be multistable",
            residual=residual,
            iterations=numerics.max_iter,
        )

    fields = FieldState(a=a, b=b, omega_o=atom.g_p * c)
    response = respond(a, b, c)
    try:
        eta = conversion_efficiency(fields, opt_cav, drive)
    except UndefinedInputError:
        eta = 0.0
    logger.debug("converged after %d iterations: eta=%.6e", iteration, eta)
    return SteadyStateSolution(
        fields=fields,
        response=response,
        eta=eta,
        iterations=iteration,
        residual=residual,
        converged=True,
        mw_flux=mw_flux,
        pump_amplitude=c,
    )
