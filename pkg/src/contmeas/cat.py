"""Closed-form Wigner evolution of a free-particle two-packet superposition
under continuous position measurement with friction.

The evolved Wigner function is a weighted sum of two drifting Gaussians plus
a midpoint-Gaussian interference carrier multiplied by a damped cosine.  The
quadratic coefficients cxx, cxy, cyy interpolate from the packet's initial
spreads to the classical Ornstein-Uhlenbeck spreads of the friction-diffusion
flow; the interference weight exp(-C + Sigma(t)) starts at 1 and relaxes to
exp(-C) > 0, so the long-time state never reaches the classical half-half
mixture exactly.  The hbar -> 0 limit of the full expression, however, does:
C diverges faster than Sigma, killing the cross term.

Free particle only (no restoring force): the drift maps below integrate the
damped free motion, so a harmonic term would need a different coefficient set.
"""

from dataclasses import dataclass, replace

import numpy as np

from .core import PhysicalParams
from .coherent import CoherentParams, coherent_params, overlap_exponent


@dataclass(frozen=True)
class CatSpec:
    """Two-packet superposition N(|p1 q1> + |p2 q2>) prepared at t_prime."""

    p1: float
    q1: float
    p2: float
    q2: float
    params: PhysicalParams
    cp: CoherentParams
    t_prime: float = 0.0

    @property
    def overlap_c(self) -> float:
        return float(overlap_exponent(self.cp, self.p1 - self.p2,
                                      self.q1 - self.q2))

    @property
    def phase0(self) -> float:
        # constant part of the cross-term phase
        return (self.p1 + self.p2) * (self.q1 - self.q2) / (2 * self.params.hbar)

    @property
    def norm2(self) -> float:
        # N^2; the cross overlap carries a phase so the cosine enters
        return 1.0 / (2.0 * (1.0 + np.exp(-self.overlap_c) * np.cos(self.phase0)))


def cat_spec(params: PhysicalParams, p1: float, q1: float,
             p2: float, q2: float, t_prime: float = 0.0) -> CatSpec:
    if params.gamma <= 0:
        raise ValueError("closed form requires gamma > 0")
    cp = coherent_params(params, 0.0)
    return CatSpec(p1, q1, p2, q2, params, cp, t_prime)


@dataclass(frozen=True)
class CatCoefficients:
    """Time-slice of the quadratic form, linear terms and cross descriptors."""

    cxx: float
    cxy: float
    cyy: float
    cx: float
    cy: float
    sigma: float
    upsilon: float
    phi: float

    @property
    def det(self) -> float:
        return 4 * self.cxx * self.cyy - self.cxy**2


def _quad_coefficients(spec: CatSpec, dt: float):
    p = spec.params
    hb, m, g, kT = p.hbar, p.m, p.gamma, p.kT
    sq2, spq2 = spec.cp.sigma_q2, spec.cp.sigma_pq2
    e = np.exp(-g * dt)
    a = (hb / (m * g * sq2)) * (0.25 + spq2**2 / hb**2)
    cxx = hb * m * g * (0.5 * a * e * e + 0.5 * (kT / (hb * g)) * (1 - e * e))
    cxy = hb * (a * (1 - e) * e + (spq2 / hb) * e
                + (kT / (hb * g)) * (1 - 2 * e + e * e))
    cyy = (hb / (m * g)) * (
        0.5 * (m * g * sq2 / hb)
        * (1 + (spq2 / (m * g * sq2)) * (1 - e)) ** 2
        + 0.125 * (hb / (m * g * sq2)) * (1 - e) ** 2
        + (kT / (hb * g)) * (g * dt - 1.5 + 2 * e - 0.5 * e * e)
        + (hb * g / (16 * kT)) * g * dt
    )
    return cxx, cxy, cyy


def _classical_quad_coefficients(spec: CatSpec, dt: float):
    p = spec.params
    m, g, kT = p.m, p.gamma, p.kT
    e = np.exp(-g * dt)
    cxx = 0.5 * m * kT * (1 - e * e)
    cxy = (kT / g) * (1 - 2 * e + e * e)
    cyy = (kT / (m * g * g)) * (g * dt - 1.5 + 2 * e - 0.5 * e * e)
    return cxx, cxy, cyy


def _check_time(spec: CatSpec, t: float) -> float:
    dt = t - spec.t_prime
    if dt < 0:
        raise ValueError("t before the preparation time")
    return dt


def cat_coefficients(spec: CatSpec, t: float) -> CatCoefficients:
    """All coefficients at time t for the packet-difference labels.

    The linear terms carry the opposite sign of the naive transcription:
    only then do the descriptors reduce to sigma(t') = C, upsilon(t') =
    dq/hbar, phi(t') = -dp/hbar, which the t = t' Wigner form requires.
    """
    dt = _check_time(spec, t)
    p = spec.params
    hb, m, g = p.hbar, p.m, p.gamma
    sq2, spq2 = spec.cp.sigma_q2, spec.cp.sigma_pq2
    dp_ = spec.p1 - spec.p2
    dq_ = spec.q1 - spec.q2
    e = np.exp(-g * dt)
    cxx, cxy, cyy = _quad_coefficients(spec, dt)
    det = 4 * cxx * cyy - cxy**2
    if det <= 0:
        raise RuntimeError(f"coefficient determinant {det:.3e} not positive")
    b = (hb / sq2) * (0.25 + spq2**2 / hb**2)
    cx = -(dp_ * (spq2 / hb) * e - dq_ * b * e)
    cy = -(dp_ * (sq2 / hb) * (1 + (hb / (m * g * sq2)) * (spq2 / hb) * (1 - e))
           - dq_ * ((hb / (m * g * sq2)) * (0.25 + spq2**2 / hb**2) * (1 - e)
                    + spq2 / hb))
    sigma = (cxx * cy**2 - cxy * cx * cy + cyy * cx**2) / det
    upsilon = (2 * cyy * cx - cxy * cy) / det
    phi = (2 * cxx * cy - cxy * cx) / det
    return CatCoefficients(cxx, cxy, cyy, cx, cy, sigma, upsilon, phi)


def _gauss(cxx, cxy, cyy, X, Y):
    det = 4 * cxx * cyy - cxy**2
    if det <= 0:
        raise RuntimeError(f"coefficient determinant {det:.3e} not positive")
    # scaled variables keep the quadratic form finite for delta-like spreads
    s = np.sqrt(det)
    Xs = X / s
    Ys = Y / s
    return np.exp(-cxx * Xs * Xs + cxy * Xs * Ys - cyy * Ys * Ys) / (2 * np.pi * s)


def _drifted(spec: CatSpec, p_prime, q_prime, p, q, dt):
    par = spec.params
    e = np.exp(-par.gamma * dt)
    X = q - q_prime - p_prime * (1 - e) / (par.m * par.gamma)
    Y = p - p_prime * e
    return X, Y


def cat_gaussian_component(spec: CatSpec, p_prime: float, q_prime: float,
                           p, q, t: float, classical: bool = False):
    """Evolved single-packet Wigner kernel centred on the damped trajectory.

    Means drift as (p' e^{-g dt}, q' + p'(1-e^{-g dt})/mg); variances are
    Var(p) = 2 cxx, Var(q) = 2 cyy, Cov = cxy.  With classical=True the
    coefficient trio is the zero-spread friction-diffusion Green function,
    which requires t > t_prime.
    """
    dt = _check_time(spec, t)
    if classical:
        if dt <= 0:
            raise ValueError("classical kernel is a delta at t = t_prime")
        cxx, cxy, cyy = _classical_quad_coefficients(spec, dt)
    else:
        cxx, cxy, cyy = _quad_coefficients(spec, dt)
    X, Y = _drifted(spec, p_prime, q_prime, p, q, dt)
    return _gauss(cxx, cxy, cyy, X, Y)


def interference_weight(spec: CatSpec, t: float) -> float:
    """exp(-C + Sigma(t)): 1 at t_prime, exp(-C) as t -> infinity."""
    co = cat_coefficients(spec, t)
    return float(np.exp(-spec.overlap_c + co.sigma))


def cat_wigner(spec: CatSpec, p, q, t: float):
    """Two drifting Gaussians plus the damped-cosine interference term."""
    dt = _check_time(spec, t)
    co = cat_coefficients(spec, t)
    w1 = cat_gaussian_component(spec, spec.p1, spec.q1, p, q, t)
    w2 = cat_gaussian_component(spec, spec.p2, spec.q2, p, q, t)
    pm = 0.5 * (spec.p1 + spec.p2)
    qm = 0.5 * (spec.q1 + spec.q2)
    wm = cat_gaussian_component(spec, pm, qm, p, q, t)
    X, Y = _drifted(spec, pm, qm, p, q, dt)
    arg = spec.phase0 + co.upsilon * Y + co.phi * X
    cross = wm * np.exp(-spec.overlap_c + co.sigma) * 2 * np.cos(arg)
    return spec.norm2 * (w1 + w2 + cross)


def cat_classical_limit(spec: CatSpec, p, q, t: float):
    """Half-half mixture of the zero-spread classical kernels."""
    w1 = cat_gaussian_component(spec, spec.p1, spec.q1, p, q, t, classical=True)
    w2 = cat_gaussian_component(spec, spec.p2, spec.q2, p, q, t, classical=True)
    return 0.5 * (w1 + w2)


def hbar_interference_scan(params: PhysicalParams, p1: float, q1: float,
                           p2: float, q2: float, t: float,
                           hbars=(1.0, 0.5, 0.25, 0.125)):
    """(hbar, C, Sigma(t), weight) rows; the weight must fall as hbar does."""
    rows = []
    for hb in hbars:
        spec = cat_spec(replace(params, hbar=hb), p1, q1, p2, q2)
        co = cat_coefficients(spec, t)
        rows.append((hb, spec.overlap_c, float(co.sigma),
                     interference_weight(spec, t)))
    return rows
