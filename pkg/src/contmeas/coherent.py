"""Gaussian fixed points of the monitored linear system: variances, overlaps, Wigner kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, PhysicalParams, Potential, WaveFunction


@dataclass(frozen=True)
class CoherentParams:
    sigma_q2: float
    sigma_pq2: float
    sigma_p2: float
    epsilon: float
    omega_complex: complex
    m: float
    gamma: float
    hbar: float
    omega0: float
    c1_residual: float
    c2_residual: float


def _defining_residuals(sq2, spq2, eps, params, omega0):
    # B = (1 - 2i spq2/hb) / (2 sq2); stationarity reads
    #   -hb^2 B^2/(2m) + m w0^2/2 + i hb g B - i hb kappa = 0
    #   hb^2 B/(2m) - i hb g/2 - 2 kappa sq2 spq2 + i hb kappa sq2 = eps
    hb, m, g, kap = params.hbar, params.m, params.gamma, params.kappa
    B = (1 - 2j * spq2 / hb) / (2 * sq2)
    t1 = (-(hb**2) / (2 * m) * B**2, m * omega0**2 / 2, 1j * hb * g * B, -1j * hb * kap)
    r1 = abs(sum(t1)) / max(sum(abs(x) for x in t1), 1e-300)
    t2 = (hb**2 / (2 * m) * B, -1j * hb * g / 2, -2 * kap * sq2 * spq2, 1j * hb * kap * sq2)
    r2 = abs(sum(t2) - eps) / max(sum(abs(x) for x in t2), abs(eps), 1e-300)
    return r1, r2


def coherent_params(params: PhysicalParams, omega0: float) -> CoherentParams:
    """Stationary packet shape for V quadratic in q with frequency omega0."""
    hb, m, g, kap = params.hbar, params.m, params.gamma, params.kappa
    kT = params.kT
    if omega0 > 0 and kT / (hb * omega0) < 0.1:
        raise ValueError(
            f"kT/(hbar*omega0) = {kT / (hb * omega0):.3g} < 0.1: "
            "outside the validity regime of the stationary-packet solution"
        )
    if g == 0:
        if omega0 <= 0:
            raise ValueError("free particle with gamma = 0 has no stationary packet")
        sq2 = hb / (2 * m * omega0)
        spq2 = 0.0
        eps = hb * omega0 / 2
        omega = complex(omega0, 0.0)
    else:
        # branch with Re > 0, Im < 0: decaying forward in time.  The variances
        # follow from omega by exact identities, which avoids the cancellation
        # in the radical forms at small gamma.
        omega = complex(np.sqrt(complex(omega0**2 - g**2, -2 * hb * kap / m)))
        sq2 = hb / (2 * m * omega.real)
        spq2 = hb * (-omega.imag - g) / (2 * omega.real)
        eps = float(hb**2 / (4 * m * sq2) - 2 * kap * sq2 * spq2)
    sp2 = (hb**2 / 4 + spq2**2) / sq2
    r1, r2 = _defining_residuals(sq2, spq2, eps, params, omega0)
    if max(r1, r2) > 1e-10:
        raise AssertionError(f"defining-equation residuals {r1:.2e}, {r2:.2e}")
    return CoherentParams(sq2, spq2, float(sp2), eps, omega, m, g, hb, omega0, r1, r2)


def coherent_wavefunction(cp: CoherentParams, p_prime: float, q_prime: float,
                          grid: Grid) -> WaveFunction:
    if grid.hbar != cp.hbar:
        raise ValueError("grid.hbar differs from cp.hbar")
    sig = np.sqrt(cp.sigma_q2)
    if q_prime - 6 * sig < grid.q_min or q_prime + 6 * sig > grid.q_max:
        raise ValueError("grid does not cover q' +- 6 sigma_q: support clipped")
    q = grid.q
    hb = cp.hbar
    psi = (2 * np.pi * cp.sigma_q2) ** -0.25 * np.exp(
        -(1 - 2j * cp.sigma_pq2 / hb) / (4 * cp.sigma_q2) * (q - q_prime) ** 2
        + 1j * p_prime * (q - q_prime) / hb
    )
    return WaveFunction(grid, psi)


def overlap_exponent(cp: CoherentParams, dp, dq):
    """C(dp, dq): the real decay exponent of the overlap."""
    sq2, spq2, hb = cp.sigma_q2, cp.sigma_pq2, cp.hbar
    return sq2 / (2 * hb**2) * (dp - spq2 / sq2 * dq) ** 2 + dq**2 / (8 * sq2)


def coherent_overlap(cp: CoherentParams, p1, q1, p2, q2) -> complex:
    C = overlap_exponent(cp, p1 - p2, q1 - q2)
    return np.exp(-C + 1j * (p1 + p2) * (q1 - q2) / (2 * cp.hbar))


def coherent_wigner(cp: CoherentParams, p_prime, q_prime, p, q):
    """Phase-space Gaussian kernel; peak 1/(pi hbar), delta-concentrating as hbar -> 0."""
    return np.exp(-4 * overlap_exponent(cp, p - p_prime, q - q_prime)) / (np.pi * cp.hbar)


def action_increment(cp: CoherentParams, p, q, dp, dq, dt, pot: Potential, t=0.0):
    """dphi over one Ito step; p, q are pre-step values, dq the realized increment."""
    if pot.kind != "linear":
        raise ValueError("action increment defined for linear potentials only")
    del dp  # the momentum increment does not enter
    mu_part = cp.epsilon + p**2 / (2 * cp.m) + pot.value(q, t) + cp.gamma / 2 * p * q
    return mu_part * dt - p * dq
