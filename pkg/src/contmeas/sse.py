"""Selective continuous position measurement: nonlinear norm-preserving
stochastic Schrodinger dynamics on a grid.

One real Wiener increment per step drives the measurement operator
A = sqrt(kappa) q + i sqrt(gamma/8mkT) p with kappa = 2 m gamma kT / hbar^2.
The step is a palindromic Strang split of exactified factors,

  V(dt/2) . kin(dt/2) . S(dt) . kin(dt/2) . V(dt/2),

where kin is the kinetic term plus the friction anticommutator at twice the
generator's coefficient, p^2/2m + (gamma/2)(qp+pq), applied as an exact
metaplectic three-shear (position phase, momentum phase, position phase),
and S collects the stochastic factors:

  position-diagonal  exp[ sqrt(kappa) (q-<q>) dw - kappa (q-<q>)^2 dt ],
  momentum-diagonal  exp[ i b (p-<p>) dw + (i gamma/hbar) <q> (p-<p>) dt
       + (i gamma/2hbar) <q><p> dt ],

followed by explicit renormalization.  Composing separate exponentials for
the two noise quadratures generates a spurious Ito cross drift
+(i/hbar)(gamma/2) [(q-<q>)(p-<p>)+(p-<p>)(q-<q>)]/2 per step; the friction
surplus in kin together with the shifted linear terms cancels it exactly, so
the step drift matches the norm-preserving measurement equation at O(dt)
(means follow the expectation-value Langevin pair, widths relax at the
doubled friction rate).  The symmetric arrangement keeps the remaining
splitting bias of stationary second moments at O(dt^2).

Per-step norm corrections fluctuate at O(kappa sigma_q^2 dt) with O(dt^2)
mean for localized states; runs abort when the localization fraction
kappa sigma_q^2 dt exceeds 0.05 (collapse unresolved), when a single
correction exceeds 0.75, or when the running mean of corrections, measured
in units of their fluctuation scale, reaches order one (systematic drift).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coherent import coherent_params
from .core import (
    DensityMatrix,
    Grid,
    NoiseSource,
    PhysicalParams,
    Potential,
    WaveFunction,
    wiener_increments,
)

__all__ = [
    "SseState",
    "SseTrajectory",
    "SseEnsemble",
    "ConvergenceReport",
    "make_sse_state",
    "default_dt",
    "sse_step",
    "sse_dissipationless_step",
    "sse_run",
    "sse_ensemble",
    "ensemble_density",
    "expectation_sde_check",
    "convergence_diagnostics",
]

_EMA_ALPHA = 1.0 / 64.0
_EMA_WARMUP = 64


@dataclass
class SseState:
    """One stochastic trajectory state.

    expectations holds (<q>, <p>, var_q, cov_pq, var_p); a is the complex
    measurement-operator mean sqrt(kappa)<q> + i b <p>, recomputed each step;
    phi is the accumulated action of the co-moving-packet phase convention
    (global phase factor exp(-i phi / hbar) for linear potentials).
    renorm_last is the last pre-renormalization norm minus one; renorm_ema
    averages those corrections in units of their per-step fluctuation scale
    sqrt(2) kappa var_q dt.
    """

    psi: WaveFunction
    t: float
    a: complex
    expectations: tuple
    phi: float = 0.0
    renorm_last: float = 0.0
    renorm_ema: float = 0.0
    n_steps: int = 0


def _batch_moments(psis: np.ndarray, grid: Grid, psis_k: np.ndarray | None = None):
    """Moments of one or many wavefunctions (rows).  Returns arrays shaped
    like psis[..., 0]: (mq, mp, vq, cpq, vp) plus the transform used."""
    dq = grid.dq
    q = grid.q
    p_fft = grid.hbar * grid.k_fft
    prob = np.abs(psis) ** 2
    n2 = prob.sum(axis=-1) * dq
    mq = (prob @ q) * dq / n2
    vq = (prob @ (q * q)) * dq / n2 - mq**2
    if psis_k is None:
        psis_k = np.fft.fft(psis, axis=-1)
    probk = np.abs(psis_k) ** 2
    nk = probk.sum(axis=-1)
    mp = (probk @ p_fft) / nk
    vp = (probk @ (p_fft * p_fft)) / nk - mp**2
    p_psi = np.fft.ifft(psis_k * p_fft, axis=-1)
    cross = np.real(np.sum(np.conj(psis) * grid.q * p_psi, axis=-1)) * dq / n2
    cpq = cross - mq * mp
    return mq, mp, vq, cpq, vp, psis_k


def make_sse_state(psi: WaveFunction, params: PhysicalParams, t: float = 0.0,
                   phi: float = 0.0) -> SseState:
    if abs(psi.grid.hbar - params.hbar) > 1e-12 * params.hbar:
        raise ValueError("grid hbar differs from params hbar")
    values = psi.normalized().values
    mq, mp, vq, cpq, vp, _ = _batch_moments(values, psi.grid)
    a = params.meas_a * float(mq) + 1j * params.meas_b * float(mp)
    return SseState(
        psi=WaveFunction(psi.grid, values), t=t, a=a,
        expectations=(float(mq), float(mp), float(vq), float(cpq), float(vp)),
        phi=phi,
    )


def _kin_phases(grid: Grid, params: PhysicalParams, dt: float, gamma: float):
    """Quadratic phases of the exact flow of p^2/2m + (gamma/4)(qp+pq).

    Classical matrix [[A, B], [0, D]] with A = e^{g dt/2}, D = 1/A,
    B = A(1-e^{-g dt})/(m g); decomposed into momentum-shear(y1= (D-1)/B),
    position-shear(B), momentum-shear(y2 = (A-1)/B), applied y2 first.
    """
    m, hb = params.m, grid.hbar
    if gamma == 0.0:
        A = D = 1.0
        B = dt / m
        y1 = y2 = 0.0
    else:
        A = np.exp(gamma * dt / 2.0)
        D = 1.0 / A
        B = A * (-np.expm1(-gamma * dt)) / (m * gamma)
        y1 = (D - 1.0) / B
        y2 = (A - 1.0) / B
    q2 = grid.q**2
    ph_first = np.exp(0.5j * y2 * q2 / hb)
    ph_k = np.exp(-0.5j * B * hb * grid.k_fft**2)
    ph_last = np.exp(0.5j * y1 * q2 / hb)
    return ph_first, ph_k, ph_last


def _advance(psis, mq, mp, grid: Grid, params: PhysicalParams,
             pot: Potential | None, t, dt, dw, kin, dissipationless: bool):
    """One Ito step of a (B, n_q) batch: Strang halves of the deterministic
    flow (potential phase + kinetic/friction three-shear) around the centered
    stochastic factors.  Returns new psis (normalized), the
    pre-renormalization norms, and the new moments."""
    hb = grid.hbar
    q = grid.q
    sq_k = np.sqrt(params.kappa)
    dw = np.atleast_1d(np.asarray(dw, dtype=float))[:, None]
    mqc = np.atleast_1d(mq)[:, None]
    mpc = np.atleast_1d(mp)[:, None]

    ph_first, ph_k, ph_last = kin   # phases of the half-step dt/2
    pre_a, post_a, pre_b, post_b = ph_first, ph_last, ph_first, ph_last
    if not dissipationless and pot is not None:
        # palindromic: V(dt/2) kin(dt/2) S(dt) kin(dt/2) V(dt/2)
        v_half = np.exp(-(0.5j / hb) * pot.value(q, t + 0.5 * dt) * dt)
        pre_a = ph_first * v_half
        post_b = ph_last * v_half

    def deterministic_half(arr, pre, post):
        arr = arr * pre
        arr_k = np.fft.fft(arr, axis=-1)
        arr_k *= ph_k
        arr = np.fft.ifft(arr_k, axis=-1)
        return arr * post

    psis = deterministic_half(psis, pre_a, post_a)

    qt = q[None, :] - mqc
    psis = psis * np.exp(sq_k * qt * dw - params.kappa * qt * qt * dt)

    if not dissipationless:
        p_fft = hb * grid.k_fft
        ptil = p_fft[None, :] - mpc
        psis_k = np.fft.fft(psis, axis=-1)
        psis_k *= np.exp(
            1j * params.meas_b * ptil * dw
            + (1j * params.gamma / hb) * mqc * ptil * dt
            + (0.5j * params.gamma / hb) * mqc * mpc * dt
        )
        psis = np.fft.ifft(psis_k, axis=-1)

    psis = deterministic_half(psis, pre_b, post_b)

    norms = np.sqrt(np.sum(np.abs(psis) ** 2, axis=-1) * grid.dq)
    psis = psis / norms[..., None]
    mq2, mp2, vq2, cpq2, vp2, _ = _batch_moments(psis, grid)
    return psis, norms, (mq2, mp2, vq2, cpq2, vp2)


def _epsilon_for(params: PhysicalParams, pot: Potential | None) -> float:
    omega0 = pot.omega0 if (pot is not None and pot.kind == "linear") else 0.0
    try:
        return coherent_params(params, omega0).epsilon
    except (ValueError, ZeroDivisionError):
        return 0.0


def _norm_guard(state_steps, norm, ema, dt, loc):
    """loc = kappa * var_q * dt, the per-step localization fraction.  Norm
    corrections fluctuate at that scale (times a chi-square of the
    increment), so both the jump threshold and the running-mean test must be
    read against it rather than against fixed small numbers, or legitimately
    delocalized states would abort."""
    drift = abs(norm - 1.0)
    if not np.isfinite(norm) or drift > 0.75:
        raise RuntimeError(
            f"norm changed by {drift:.2e} in one step: dt = {dt:.3g} too large")
    if loc > 0.05:
        raise RuntimeError(
            f"collapse dynamics unresolved: kappa var_q dt = {loc:.2e} > 0.05, "
            f"dt = {dt:.3g} too large for this state")
    if state_steps >= _EMA_WARMUP and abs(ema) > 1.0:
        raise RuntimeError(
            f"systematic norm drift (running mean {ema:+.2f} of corrections "
            f"in units of their fluctuation scale): dt = {dt:.3g} too large")


def _step(state: SseState, params: PhysicalParams, pot: Potential | None,
          dt, dw, dissipationless: bool) -> SseState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(dw):
        raise ValueError("dw must be finite")
    grid = state.psi.grid
    mq, mp = state.expectations[0], state.expectations[1]
    gamma = 0.0 if dissipationless else params.gamma
    kin = _kin_phases(grid, params, 0.5 * dt, 2.0 * gamma)
    vals = state.psi.values[None, :]
    psis, norms, mom = _advance(vals, np.array([mq]), np.array([mp]), grid,
                                params, pot, state.t, dt, np.array([float(dw)]),
                                kin, dissipationless)
    norm = float(norms[0])
    loc = params.kappa * state.expectations[2] * dt
    z = (norm - 1.0) / (np.sqrt(2.0) * loc) if loc > 0 else 0.0
    ema = (1.0 - _EMA_ALPHA) * state.renorm_ema + _EMA_ALPHA * z
    _norm_guard(state.n_steps + 1, norm, ema, dt, loc)

    mq2, mp2, vq2, cpq2, vp2 = (float(x[0]) for x in mom)
    eps = _epsilon_for(params, pot) if not dissipationless else 0.0
    if pot is not None and not dissipationless:
        v_here = 0.5 * (pot.value(mq, state.t) + pot.value(mq2, state.t + dt))
    else:
        v_here = 0.0
    # trapezoid on the dt terms; the -p dq term stays pre-point (Ito)
    dphi = (eps + 0.25 * (mp**2 + mp2**2) / params.m + v_here
            + 0.25 * gamma * (mp * mq + mp2 * mq2)) * dt - mp * (mq2 - mq)
    a = params.meas_a * mq2 + 1j * params.meas_b * mp2
    return SseState(
        psi=WaveFunction(grid, psis[0]), t=state.t + dt, a=a,
        expectations=(mq2, mp2, vq2, cpq2, vp2), phi=state.phi + dphi,
        renorm_last=norm - 1.0, renorm_ema=ema, n_steps=state.n_steps + 1,
    )


def sse_step(state: SseState, params: PhysicalParams, pot: Potential,
             dt: float, dw: float) -> SseState:
    """One Ito Euler step of the selective measurement equation."""
    return _step(state, params, pot, dt, dw, dissipationless=False)


def sse_dissipationless_step(state: SseState, params: PhysicalParams,
                             dt: float, dw: float) -> SseState:
    """Free-particle position measurement only: drift -kappa (q-<q>)^2 and
    diffusion sqrt(kappa) (q-<q>) dw in the exactified factor, no friction,
    no momentum readout."""
    return _step(state, params, None, dt, dw, dissipationless=True)


def default_dt(state: SseState, params: PhysicalParams,
               pot: Potential | None = None) -> float:
    """1/(50 max rate); rates: omega0, gamma, measurement rate 4 kappa
    sigma_q^2, and the state's kinetic frequency <p^2>/(2 m hbar)."""
    mq, mp, vq, cpq, vp = state.expectations
    rates = [params.gamma, 4.0 * params.kappa * vq,
             (vp + mp * mp) / (2.0 * params.m * params.hbar)]
    if pot is not None and pot.kind == "linear" and pot.omega0 > 0:
        rates.append(pot.omega0)
    return 1.0 / (50.0 * max(rates))


@dataclass
class SseTrajectory:
    """Recorded single-trajectory series (one entry per step boundary)."""

    times: np.ndarray
    mean_q: np.ndarray
    mean_p: np.ndarray
    var_q: np.ndarray
    cov_pq: np.ndarray
    var_p: np.ndarray
    phi: np.ndarray
    dV: np.ndarray          # <dV/dq> at each step start
    dw: np.ndarray          # increments used, length n_steps
    renorm_max: float
    renorm_mean: float
    final: SseState


def sse_run(params: PhysicalParams, pot: Potential | None, psi0: WaveFunction,
            dt: float, n_steps: int, seed: int, stream_id: int = 0,
            dissipationless: bool = False) -> SseTrajectory:
    dw = wiener_increments(NoiseSource(seed, stream_id), n_steps, dt)
    state = make_sse_state(psi0, params)
    n = n_steps + 1
    cols = [np.empty(n) for _ in range(7)]
    dV = np.empty(n)
    renorm_max = 0.0
    renorm_sum = 0.0
    for k in range(n):
        mq, mp, vq, cpq, vp = state.expectations
        for c, val in zip(cols, (state.t, mq, mp, vq, cpq, vp, state.phi)):
            c[k] = val
        if pot is not None and not dissipationless:
            prob = np.abs(state.psi.values) ** 2
            dV[k] = float(np.sum(prob * pot.grad(state.psi.grid.q, state.t))
                          * state.psi.grid.dq)
        else:
            dV[k] = 0.0
        if k == n_steps:
            break
        if dissipationless:
            state = sse_dissipationless_step(state, params, dt, dw[k])
        else:
            state = sse_step(state, params, pot, dt, dw[k])
        renorm_max = max(renorm_max, abs(state.renorm_last))
        renorm_sum += state.renorm_last
    return SseTrajectory(times=cols[0], mean_q=cols[1], mean_p=cols[2],
                         var_q=cols[3], cov_pq=cols[4], var_p=cols[5],
                         phi=cols[6], dV=dV, dw=dw, renorm_max=renorm_max,
                         renorm_mean=renorm_sum / max(n_steps, 1), final=state)


@dataclass
class SseEnsemble:
    times: np.ndarray       # recorded times, shape (n_rec,)
    mean_q: np.ndarray      # (n_rec, n_traj)
    mean_p: np.ndarray
    var_q: np.ndarray
    var_p: np.ndarray
    psis: np.ndarray        # final states, (n_traj, n_q)
    grid: Grid
    n_traj: int


def sse_ensemble(params: PhysicalParams, pot: Potential | None,
                 psi0: WaveFunction, dt: float, n_steps: int, n_traj: int,
                 seed: int, record_every: int = 1, base_stream: int = 0,
                 dissipationless: bool = False) -> SseEnsemble:
    """Batch of independent trajectories; trajectory k uses noise stream
    base_stream + k, matching a sequence of sse_run calls."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    grid = psi0.grid
    psi0n = psi0.normalized().values
    psis = np.tile(psi0n, (n_traj, 1))
    dws = np.empty((n_traj, n_steps))
    for k in range(n_traj):
        dws[k] = wiener_increments(NoiseSource(seed, base_stream + k), n_steps, dt)
    gamma = 0.0 if dissipationless else params.gamma
    kin = _kin_phases(grid, params, 0.5 * dt, 2.0 * gamma)
    mq, mp, vq, cpq, vp, _ = _batch_moments(psis, grid)
    rec_idx = list(range(0, n_steps + 1, record_every))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    recs = {i: j for j, i in enumerate(rec_idx)}
    out = {name: np.empty((len(rec_idx), n_traj)) for name in
           ("mean_q", "mean_p", "var_q", "var_p")}
    times = np.empty(len(rec_idx))
    ema = np.zeros(n_traj)
    t = 0.0
    for k in range(n_steps + 1):
        if k in recs:
            j = recs[k]
            times[j] = t
            out["mean_q"][j], out["mean_p"][j] = mq, mp
            out["var_q"][j], out["var_p"][j] = vq, vp
        if k == n_steps:
            break
        locs = params.kappa * vq * dt
        psis, norms, (mq, mp, vq, cpq, vp) = _advance(
            psis, mq, mp, grid, params, pot, t, dt, dws[:, k], kin,
            dissipationless)
        z = np.divide(norms - 1.0, np.sqrt(2.0) * locs,
                      out=np.zeros(n_traj), where=locs > 0)
        ema = (1.0 - _EMA_ALPHA) * ema + _EMA_ALPHA * z
        worst = int(np.argmax(np.abs(norms - 1.0)))
        _norm_guard(k + 1, norms[worst],
                    ema[int(np.argmax(np.abs(ema)))], dt, float(np.max(locs)))
        t += dt
    return SseEnsemble(times=times, mean_q=out["mean_q"], mean_p=out["mean_p"],
                       var_q=out["var_q"], var_p=out["var_p"], psis=psis,
                       grid=grid, n_traj=n_traj)


def ensemble_density(params: PhysicalParams, pot: Potential | None,
                     psi0: WaveFunction, dt: float, n_steps: int,
                     n_traj: int, seed: int) -> DensityMatrix:
    """Mean projector over independent trajectories at the final time."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    ens = sse_ensemble(params, pot, psi0, dt, n_steps, n_traj, seed,
                       record_every=max(n_steps, 1))
    rho = np.einsum("ti,tj->ij", ens.psis, np.conj(ens.psis)) / n_traj
    return DensityMatrix(psi0.grid, rho)


@dataclass
class SdeCheckReport:
    residual_q: float       # RMS residual / RMS increment, position equation
    residual_p: float
    rms_dq: float
    rms_dp: float
    flagged: bool


def expectation_sde_check(traj: SseTrajectory, params: PhysicalParams,
                          dt: float) -> SdeCheckReport:
    """Compare realized increments of <q>, <p> against the closed
    expectation-value SDE:

      d<q> = (<p>/m) dt + [2 sqrt(kappa) sigma_q^2 - gamma/(2 sqrt(kappa))] dw
      d<p> = -[gamma <p> + <dV/dq>] dt + 2 sqrt(kappa) sigma_pq^2 dw
    """
    sq_k = np.sqrt(params.kappa)
    noise_q = (2.0 * sq_k * traj.var_q[:-1] - params.hbar * params.meas_b
               if params.kappa > 0 else np.zeros(len(traj.dw)))
    noise_p = 2.0 * sq_k * traj.cov_pq[:-1]
    pred_dq = traj.mean_p[:-1] / params.m * dt + noise_q * traj.dw
    pred_dp = -(params.gamma * traj.mean_p[:-1] + traj.dV[:-1]) * dt \
        + noise_p * traj.dw
    got_dq = np.diff(traj.mean_q)
    got_dp = np.diff(traj.mean_p)
    rms_dq = float(np.sqrt(np.mean(got_dq**2)))
    rms_dp = float(np.sqrt(np.mean(got_dp**2)))
    res_q = float(np.sqrt(np.mean((got_dq - pred_dq) ** 2))) / max(rms_dq, 1e-300)
    res_p = float(np.sqrt(np.mean((got_dp - pred_dp) ** 2))) / max(rms_dp, 1e-300)
    return SdeCheckReport(residual_q=res_q, residual_p=res_p,
                          rms_dq=rms_dq, rms_dp=rms_dp,
                          flagged=(res_q > 10 * dt or res_p > 10 * dt))


@dataclass
class ConvergenceReport:
    times: np.ndarray
    gap_q: np.ndarray
    gap_pq: np.ndarray
    target_rate: float      # 2 |Im omega|
    fitted_rate: float | None
    flagged: bool
    message: str = ""

    @property
    def fitted_im_omega(self):
        return None if self.fitted_rate is None else 0.5 * self.fitted_rate


def convergence_diagnostics(traj: SseTrajectory, params: PhysicalParams,
                            omega0: float) -> ConvergenceReport:
    """Decay of the variance gaps toward the stationary packet values.

    The gap |sigma_q^2(t) - sigma_q^2(inf)| decays as e^{2 Im(omega) t} times
    an oscillation at 2 Re(omega); the rate is fitted on the log of the local
    maxima of the gap (falling back to all points if too few peaks).
    """
    cp = coherent_params(params, omega0)
    gq = np.abs(traj.var_q - cp.sigma_q2)
    gpq = np.abs(traj.cov_pq - cp.sigma_pq2)
    target = 2.0 * abs(cp.omega_complex.imag)
    t = traj.times

    n = len(gq)
    quarter = max(n // 4, 1)
    if np.mean(gq[-quarter:]) > 0.25 * np.mean(gq[:quarter]):
        return ConvergenceReport(t, gq, gpq, target, None, True,
                                 "variance gap not decaying")

    # converged runs sit on a discretization floor; fit only peaks clear of it
    plateau = float(np.median(gq[-max(n // 10, 1):]))
    floor = max(10.0 * plateau, gq.max() * 1e-8, 1e-13)
    interior = np.arange(1, n - 1)
    peaks = interior[(gq[interior] >= gq[interior - 1])
                     & (gq[interior] >= gq[interior + 1])
                     & (gq[interior] > floor)]
    if peaks.size >= 3:
        tt, yy = t[peaks], np.log(gq[peaks])
    else:
        mask = gq > floor
        if np.count_nonzero(mask) < 3:
            return ConvergenceReport(t, gq, gpq, target, None, True,
                                     "gap already at floor; nothing to fit")
        tt, yy = t[mask], np.log(gq[mask])
    slope = np.polyfit(tt, yy, 1)[0]
    if slope >= 0:
        return ConvergenceReport(t, gq, gpq, target, None, True,
                                 "variance gap not decaying")
    return ConvergenceReport(t, gq, gpq, target, float(-slope), False)
