"""Langevin trajectories, finite-bath Newton dynamics, and a Fokker-Planck grid solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import NoiseSource, PhysicalParams, Potential, eval_force, wiener_increments
from .spectral import czt_scaled_resample


@dataclass
class ClassicalTrajectory:
    times: np.ndarray
    p: np.ndarray
    q: np.ndarray
    stream_id: int = 0


@dataclass
class PhaseSpaceDensity:
    p: np.ndarray
    q: np.ndarray
    values: np.ndarray  # W[p_index, q_index]
    t: float = 0.0

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    def mass(self) -> float:
        return float(self.values.sum() * self.dp * self.dq)

    def clipped(self, rel_tol=1e-12) -> "PhaseSpaceDensity":
        vmax = self.values.max()
        vmin = self.values.min()
        if vmin < -rel_tol * vmax:
            warnings.warn(f"negative density {vmin:.3e} (max {vmax:.3e})", stacklevel=2)
        return PhaseSpaceDensity(self.p, self.q, np.clip(self.values, 0.0, None), self.t)


def gaussian_density(p_axis, q_axis, mean_p=0.0, mean_q=0.0, var_p=1.0, var_q=1.0,
                     t=0.0) -> PhaseSpaceDensity:
    P, Q = np.meshgrid(p_axis, q_axis, indexing="ij")
    W = np.exp(-((P - mean_p) ** 2) / (2 * var_p) - (Q - mean_q) ** 2 / (2 * var_q))
    W /= 2 * np.pi * np.sqrt(var_p * var_q)
    return PhaseSpaceDensity(np.asarray(p_axis, float), np.asarray(q_axis, float), W, t)


def _check_dt(params: PhysicalParams, dt: float):
    fastest = params.tau if params.gamma == 0 else min(params.tau, 1.0 / params.gamma)
    if dt > fastest / 50:
        raise ValueError(
            f"dt = {dt} too coarse: need dt <= min(tau, 1/gamma)/50 = {fastest / 50:.3g}"
        )


def langevin_run(params: PhysicalParams, pot: Potential, p0, q0, dt, n_steps,
                 src: NoiseSource) -> ClassicalTrajectory:
    """Euler-Maruyama for dp = -(gamma p + dV) dt + sqrt(2 m gamma kT) dw, dq = p/m dt."""
    _check_dt(params, dt)
    g, m = params.gamma, params.m
    amp = np.sqrt(2 * m * g * params.kT)
    dw = wiener_increments(src, n_steps, dt)
    p = np.empty(n_steps + 1)
    q = np.empty(n_steps + 1)
    p[0], q[0] = p0, q0
    t = 0.0
    for k in range(n_steps):
        force = eval_force(pot, q[k], t)
        p[k + 1] = p[k] - (g * p[k] + force) * dt + amp * dw[k]
        q[k + 1] = q[k] + p[k] / m * dt
        t += dt
        if not (np.isfinite(p[k + 1]) and np.isfinite(q[k + 1])):
            raise FloatingPointError(
                f"non-finite state at step {k + 1}: p={p[k + 1]}, q={q[k + 1]}"
            )
    times = dt * np.arange(n_steps + 1)
    return ClassicalTrajectory(times, p, q, src.stream_id)


@dataclass
class EnsembleMoments:
    times: np.ndarray
    mean_q: np.ndarray
    var_q: np.ndarray
    mean_p: np.ndarray
    var_p: np.ndarray
    n_traj: int
    final_p: np.ndarray = None
    final_q: np.ndarray = None


def langevin_ensemble(params: PhysicalParams, pot: Potential, p0, q0, dt, n_steps,
                      n_traj, seed, base_stream=0) -> EnsembleMoments:
    """Vectorized ensemble; column k reproduces langevin_run with stream_id base+k."""
    _check_dt(params, dt)
    g, m = params.gamma, params.m
    amp = np.sqrt(2 * m * g * params.kT)
    dw = np.empty((n_traj, n_steps))
    for k in range(n_traj):
        dw[k] = wiener_increments(NoiseSource(seed, base_stream + k), n_steps, dt)
    p = np.broadcast_to(np.asarray(p0, dtype=float), (n_traj,)).copy()
    q = np.broadcast_to(np.asarray(q0, dtype=float), (n_traj,)).copy()
    out = EnsembleMoments(
        dt * np.arange(n_steps + 1), *(np.empty(n_steps + 1) for _ in range(4)), n_traj
    )
    t = 0.0
    for k in range(n_steps + 1):
        out.mean_q[k], out.var_q[k] = q.mean(), q.var()
        out.mean_p[k], out.var_p[k] = p.mean(), p.var()
        if k == n_steps:
            break
        force = eval_force(pot, q, t)
        p, q = p - (g * p + force) * dt + amp * dw[:, k], q + p / m * dt
        t += dt
        if k % 64 == 0 and not np.all(np.isfinite(p)):
            raise FloatingPointError(f"non-finite ensemble state near step {k}")
    out.final_p, out.final_q = p, q
    return out


def finite_bath_run(params: PhysicalParams, pot: Potential, p0, q0, bath, dt,
                    n_steps) -> ClassicalTrajectory:
    """Deterministic Newton dynamics of system + oscillators.

    Strang split: exact oscillator rotation about frozen q (with the exact
    accumulated momentum impulse) around a free system drift.
    """
    if dt * params.Omega > 0.1:
        raise ValueError(
            f"dt*Omega = {dt * params.Omega:.3g} > 0.1: need dt <= {0.1 / params.Omega:.3g}"
        )
    m = params.m
    omg = np.asarray(bath.omegas, float)
    Mb = bath.M
    Q = np.array(bath.Q, float)
    P = np.array(bath.P, float)
    half = dt / 2
    cth, sth = np.cos(omg * half), np.sin(omg * half)
    p, q = float(p0), float(q0)
    ps = np.empty(n_steps + 1)
    qs = np.empty(n_steps + 1)
    ps[0], qs[0] = p, q
    t = 0.0

    def bath_half(p, q, t):
        # exact flow of V(q) + sum[P^2/2M + M w^2 (Q-q)^2/2] for time dt/2 at frozen q
        nonlocal Q, P
        X = Q - q
        impulse = np.sum(Mb * omg * X * sth + P * (1 - cth))
        Xn = X * cth + P / (Mb * omg) * sth
        P[:] = -Mb * omg * X * sth + P * cth
        Q = Xn + q
        return p + impulse - eval_force(pot, q, t) * half

    for k in range(n_steps):
        p = bath_half(p, q, t)
        q = q + p / m * dt
        t += dt
        p = bath_half(p, q, t)
        ps[k + 1], qs[k + 1] = p, q
    traj = ClassicalTrajectory(dt * np.arange(n_steps + 1), ps, qs)
    traj.bath_Q, traj.bath_P = Q, P
    return traj


def total_energy(params: PhysicalParams, pot: Potential, p, q, bath, Q=None, P=None,
                 t=0.0) -> float:
    Q = bath.Q if Q is None else Q
    P = bath.P if P is None else P
    omg = np.asarray(bath.omegas, float)
    sys = p**2 / (2 * params.m) + pot.value(q, t)
    osc = np.sum(P**2 / (2 * bath.M) + 0.5 * bath.M * omg**2 * (Q - q) ** 2)
    return float(sys + osc)


def fokker_planck_solve(params: PhysicalParams, pot: Potential, W0: PhaseSpaceDensity,
                        dt, n_steps, margin=0.1, leak_tol=1e-4) -> PhaseSpaceDensity:
    """Strang split: q-advection and force kick as spectral shifts, friction-diffusion
    by its exact Gaussian transition kernel (scaled resample + convolution)."""
    g, m, kT = params.gamma, params.m, params.kT
    p_ax, q_ax = W0.p, W0.q
    dp_, dq_ = W0.dp, W0.dq
    n_p, n_q = len(p_ax), len(q_ax)
    kq = 2 * np.pi * np.fft.fftfreq(n_q, dq_)
    kp = 2 * np.pi * np.fft.fftfreq(n_p, dp_)
    adv_half = np.exp(-1j * np.outer(p_ax / m * (dt / 2), kq))
    c = np.exp(-g * dt)
    s2 = m * kT * (1 - c * c)
    ou_kernel = np.exp(-0.5 * s2 * kp**2)
    W = W0.values.astype(float).copy()
    t = W0.t
    mass0 = W.sum() * dp_ * dq_
    n_margin_p = max(1, int(margin * n_p))
    n_margin_q = max(1, int(margin * n_q))

    def leak_check(W):
        tot = np.abs(W).sum()
        edge = (np.abs(W[:n_margin_p]).sum() + np.abs(W[-n_margin_p:]).sum()
                + np.abs(W[:, :n_margin_q]).sum() + np.abs(W[:, -n_margin_q:]).sum())
        if edge / max(tot, 1e-300) > leak_tol:
            raise RuntimeError(
                f"boundary mass fraction {edge / tot:.2e} > {leak_tol}: expand the grid"
            )

    static = pot.kind == "linear" and not (callable(pot.v0) or callable(pot.v1))
    kick_static = (
        np.exp(-1j * np.outer(kp, -eval_force(pot, q_ax, 0.0) * (dt / 2)))
        if static else None
    )

    for k in range(n_steps):
        # advection half step
        W = np.fft.ifft(np.fft.fft(W, axis=1) * adv_half, axis=1).real
        # force kick half step (exact p-shift per q column)
        if static:
            kick = kick_static
        else:
            dpq = -eval_force(pot, q_ax, t + dt / 2) * (dt / 2)
            kick = np.exp(-1j * np.outer(kp, dpq))
        W = np.fft.ifft(np.fft.fft(W, axis=0) * kick, axis=0).real
        # exact friction-diffusion kernel
        if g > 0:
            W = czt_scaled_resample(W, 1.0 / c, p_ax[0], dp_, axis=0).real / c
            W = np.fft.ifft(np.fft.fft(W, axis=0) * ou_kernel[:, None], axis=0).real
        W = np.fft.ifft(np.fft.fft(W, axis=0) * kick, axis=0).real
        W = np.fft.ifft(np.fft.fft(W, axis=1) * adv_half, axis=1).real
        t += dt
        if k % 50 == 0:
            leak_check(W)
    leak_check(W)
    mass = W.sum() * dp_ * dq_
    drift_rate = abs(mass - mass0) / max(dt * n_steps, 1e-300)
    if drift_rate > 1e-6:
        raise RuntimeError(f"mass drift {drift_rate:.2e} per unit time")
    return PhaseSpaceDensity(p_ax, q_ax, W, t).clipped()


def classical_moments(W: PhaseSpaceDensity):
    """(mean_q, var_q, mean_p, var_p) by grid quadrature."""
    wq = W.values.sum(axis=0) * W.dp * W.dq
    wp = W.values.sum(axis=1) * W.dq * W.dp
    mean_q = float((wq * W.q).sum())
    var_q = float((wq * W.q**2).sum() - mean_q**2)
    mean_p = float((wp * W.p).sum())
    var_p = float((wp * W.p**2).sum() - mean_p**2)
    return mean_q, var_q, mean_p, var_p
