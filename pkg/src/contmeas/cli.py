"""Experiment orchestration: config parsing, scenario dispatch, artifact
persistence and comparison reports.

Configs are TOML or JSON with sections [params], [potential], [grid], [run],
[initial], [scenario].  Artifacts land in <out>/<scenario>-<hash12>/ where
the hash covers the resolved config plus scenario and seed, so runs are
content-addressed and never overwrite a different configuration.  Formats:
time series as CSV with a header row and shortest-roundtrip float fields
(so reruns are byte-identical), scalar reports as JSON (sorted keys), grids
as the raw float64 dump of core.write_grid_dump.  manifest.json records the
config, its hash, and a sha256 per artifact.

Exit codes: 0 ok, 1 tolerance failure, 2 error.  CONTMEAS_THREADS caps the
worker threads used to run ensemble chunks; chunking follows the noise
stream layout, so results match the sequential run stream for stream.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .cat import cat_classical_limit, cat_spec, cat_wigner, hbar_interference_scan
from .classical import (EnsembleMoments, classical_moments, fokker_planck_solve,
                        gaussian_density, langevin_ensemble)
from .coherent import coherent_params, coherent_wavefunction
from .core import (Grid, PhysicalParams, Potential, WaveFunction, load_config,
                   params_from_config, potential_from_config, pure_density,
                   validate_regime, write_grid_dump)
from .lindblad import (LindbladConfig, gaussian_density_matrix, lindblad_run,
                       wigner_eom_residual)
from .meter import (NoiseSource, gamma_window_integral, kernels,
                    lambda_ratio_estimate, pointer_run, sample_bath,
                    sample_pointer_bath, synthesize_noise)
from .sse import SseEnsemble, sse_ensemble, sse_run


# --- config ---

@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int
    strict: bool
    out_dir: Path
    raw: dict

    @property
    def params(self) -> PhysicalParams:
        return params_from_config(self.raw)

    @property
    def potential(self) -> Potential | None:
        if "potential" not in self.raw:
            return None
        return potential_from_config(self.raw, m=self.params.m)

    @property
    def run(self) -> dict:
        return self.raw.get("run", {})

    @property
    def initial(self) -> dict:
        return self.raw.get("initial", {})

    @property
    def extra(self) -> dict:
        return self.raw.get("scenario", {})

    def grid(self) -> Grid:
        g = self.raw.get("grid", {})
        return Grid(g.get("q_min", -12.8), g.get("q_max", 12.8),
                    g.get("n", 128), hbar=self.params.hbar)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def canonical(self) -> str:
        payload = {"scenario": self.scenario, "seed": self.seed,
                   "config": self.raw}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def experiment_config(path, scenario: str, seed: int | None = None,
                      out: str = "runs", strict: bool = False,
                      overrides: dict | None = None) -> ExperimentConfig:
    raw = load_config(path)
    if overrides:
        raw.setdefault("run", {}).update(overrides)
    if seed is None:
        seed = int(raw.get("seed", 0))
    return ExperimentConfig(scenario, seed, strict, Path(out), raw)


# --- artifact writers ---

def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, names, cols):
    cols = [np.asarray(c) for c in cols]
    with open(path, "w", newline="\n") as f:
        f.write(",".join(names) + "\n")
        for row in zip(*cols):
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, obj):
    with open(path, "w", newline="\n") as f:
        f.write(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --- worker pool ---

def worker_count() -> int:
    env = os.environ.get("CONTMEAS_THREADS")
    if env is None or env == "":
        return 1
    n = int(env)
    if n < 1:
        raise ValueError("CONTMEAS_THREADS must be >= 1")
    return n


def _chunk_ranges(n: int, k: int):
    k = min(k, n)
    base, rem = divmod(n, k)
    out, start = [], 0
    for i in range(k):
        count = base + (1 if i < rem else 0)
        out.append((start, count))
        start += count
    return out


# --- moment series + comparison ---

@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    mean_q: np.ndarray
    var_q: np.ndarray
    mean_p: np.ndarray
    var_p: np.ndarray


def sse_moment_series(ens: SseEnsemble):
    """Ensemble-mean series plus Monte-Carlo bands (std error per checkpoint).

    The variance column is the mixture variance mean(var_i) + var(mean_i),
    which is what the nonselective solvers evolve.
    """
    n = ens.n_traj
    mq = ens.mean_q.mean(axis=1)
    mp = ens.mean_p.mean(axis=1)
    dev_q = ens.mean_q - mq[:, None]
    dev_p = ens.mean_p - mp[:, None]
    vq = ens.var_q.mean(axis=1) + (dev_q**2).mean(axis=1)
    vp = ens.var_p.mean(axis=1) + (dev_p**2).mean(axis=1)
    bands = {
        "mean_q": ens.mean_q.std(axis=1) / np.sqrt(n),
        "mean_p": ens.mean_p.std(axis=1) / np.sqrt(n),
        "var_q": (ens.var_q + dev_q**2).std(axis=1) / np.sqrt(n),
        "var_p": (ens.var_p + dev_p**2).std(axis=1) / np.sqrt(n),
    }
    return MomentSeries(ens.times, mq, vq, mp, vp), bands


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    max_abs: float
    kind: str
    tol: float
    allowed: float
    passed: bool

    @property
    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: max|dev| {self.max_abs:.3e} vs "
                f"{self.kind} tolerance {self.tol:g} (allowed {self.allowed:.3e})")


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def lines(self):
        return [r.line for r in self.rows]

    def to_dict(self):
        return {"passed": self.passed, "rows": [asdict(r) for r in self.rows]}


def compare(run_a, run_b, tol_spec: dict, bands: dict | None = None
            ) -> ComparisonReport:
    """Per-observable max deviation between two recorded runs.

    tol_spec maps observable name -> (kind, tol) with kind one of "abs",
    "rel" (relative to the first run's max magnitude) and "band" (tol times
    the per-checkpoint Monte-Carlo sigma from ``bands``).  Both runs must
    expose ``times`` and the named attributes on a shared time axis.
    """
    ta = np.asarray(run_a.times, dtype=float)
    tb = np.asarray(run_b.times, dtype=float)
    span = max(float(ta[-1] - ta[0]), 1.0) if ta.size else 1.0
    if ta.shape != tb.shape or np.max(np.abs(ta - tb)) > 1e-9 * span:
        raise ValueError(
            "time axes differ; resample one run onto the other's checkpoints")
    rows = []
    for name, (kind, tol) in tol_spec.items():
        a = np.asarray(getattr(run_a, name), dtype=float)
        b = np.asarray(getattr(run_b, name), dtype=float)
        delta = np.abs(a - b)
        max_abs = float(delta.max())
        if kind == "abs":
            allowed = tol
            passed = max_abs <= allowed
        elif kind == "rel":
            allowed = tol * max(float(np.max(np.abs(a))), 1e-300)
            passed = max_abs <= allowed
        elif kind == "band":
            sig = np.asarray(bands[name], dtype=float)
            floor = 1e-300
            z = delta / np.maximum(tol * sig, floor)
            passed = bool(np.max(z) <= 1.0)
            allowed = float(np.max(tol * sig))
        else:
            raise ValueError(f"unknown comparison kind {kind!r}")
        rows.append(ComparisonRow(name, max_abs, kind, tol, float(allowed),
                                  bool(passed)))
    return ComparisonReport(tuple(rows))


# --- initial state builders ---

def _gaussian_packet(grid: Grid, mean_q, mean_p, var_q) -> WaveFunction:
    q = grid.q
    psi = np.exp(-((q - mean_q) ** 2) / (4.0 * var_q)
                 + 1j * mean_p * q / grid.hbar)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dq)
    return WaveFunction(grid, psi)


def _initial_wavefunction(cfg: ExperimentConfig, grid: Grid) -> WaveFunction:
    init = cfg.initial
    kind = init.get("kind", "coherent")
    if kind == "coherent":
        pot = cfg.potential
        omega0 = pot.omega0 if pot is not None else 0.0
        cp = coherent_params(cfg.params, omega0)
        return coherent_wavefunction(cp, init.get("p", 0.0), init.get("q", 0.0),
                                     grid)
    if kind == "gaussian":
        return _gaussian_packet(grid, init.get("mean_q", 0.0),
                                init.get("mean_p", 0.0),
                                init.get("var_q", 1.0))
    raise ValueError(f"unknown initial kind {kind!r} for a wavefunction")


def _initial_density(cfg: ExperimentConfig, grid: Grid):
    init = cfg.initial
    kind = init.get("kind", "coherent")
    if kind == "gaussian":
        return gaussian_density_matrix(grid, init.get("mean_q", 0.0),
                                       init.get("mean_p", 0.0),
                                       init.get("var_q", 1.0),
                                       init.get("var_p", 1.0))
    if kind == "cat":
        spec = cat_spec(cfg.params, init["p1"], init["q1"], init["p2"],
                        init["q2"])
        a = coherent_wavefunction(spec.cp, spec.p1, spec.q1, grid).values
        b = coherent_wavefunction(spec.cp, spec.p2, spec.q2, grid).values
        v = a + b
        v /= np.sqrt(np.sum(np.abs(v) ** 2) * grid.dq)
        return pure_density(WaveFunction(grid, v))
    return pure_density(_initial_wavefunction(cfg, grid))


def _free_potential(m: float) -> Potential:
    return Potential.linear(0.0, 0.0, 0.0, m)


def _thin_indices(n_rows: int, every: int):
    idx = list(range(0, n_rows, max(every, 1)))
    if idx[-1] != n_rows - 1:
        idx.append(n_rows - 1)
    return np.asarray(idx)


# --- scenarios ---

def _run_langevin(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    pot = cfg.potential or _free_potential(params.m)
    run = cfg.run
    dt = run.get("dt", 1e-3)
    n_steps = int(run.get("n_steps", 1000))
    n_traj = int(run.get("n_traj", 1000))
    p0 = cfg.initial.get("p", 0.0)
    q0 = cfg.initial.get("q", 0.0)
    workers = worker_count()
    chunks = _chunk_ranges(n_traj, workers)
    if len(chunks) == 1:
        ens = langevin_ensemble(params, pot, p0, q0, dt, n_steps, n_traj,
                                cfg.seed)
    else:
        def job(c):
            start, count = c
            return langevin_ensemble(params, pot, p0, q0, dt, n_steps, count,
                                     cfg.seed, base_stream=start)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
        ens = _combine_moments(parts)
    idx = _thin_indices(ens.times.size, int(run.get("record_every", 10)))
    write_csv(outdir / "moments.csv",
              ["t", "mean_q", "var_q", "mean_p", "var_p"],
              [ens.times[idx], ens.mean_q[idx], ens.var_q[idx],
               ens.mean_p[idx], ens.var_p[idx]])
    summary = {"n_traj": n_traj, "final_var_p": float(ens.var_p[-1]),
               "stationary_var_p_target": params.m * params.kT}
    return 0, summary


def _combine_moments(parts) -> EnsembleMoments:
    ns = np.array([p.n_traj for p in parts], dtype=float)
    N = ns.sum()
    def mix(attr_mean, attr_var):
        means = np.stack([getattr(p, attr_mean) for p in parts])
        varis = np.stack([getattr(p, attr_var) for p in parts])
        m = (ns[:, None] * means).sum(axis=0) / N
        v = (ns[:, None] * (varis + means**2)).sum(axis=0) / N - m**2
        return m, v
    mq, vq = mix("mean_q", "var_q")
    mp, vp = mix("mean_p", "var_p")
    return EnsembleMoments(parts[0].times, mq, vq, mp, vp, int(N),
                           np.concatenate([p.final_p for p in parts]),
                           np.concatenate([p.final_q for p in parts]))


def _run_fp(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    pot = cfg.potential or _free_potential(params.m)
    run, init, extra = cfg.run, cfg.initial, cfg.extra
    g = cfg.raw.get("grid", {})
    q_ax = np.linspace(g.get("q_min", -12.8), g.get("q_max", 12.8),
                       int(g.get("n", 256)), endpoint=False)
    p_half = extra.get("p_half", 4.0 * np.sqrt(params.m * params.kT))
    p_ax = np.linspace(-p_half, p_half, int(extra.get("n_p", 256)),
                       endpoint=False)
    W = gaussian_density(p_ax, q_ax, init.get("mean_p", 0.0),
                         init.get("mean_q", 0.0), init.get("var_p", 1.0),
                         init.get("var_q", 1.0))
    dt = run.get("dt", 2e-3)
    n_steps = int(run.get("n_steps", 500))
    n_rec = int(run.get("n_rec", 10))
    if n_steps % n_rec:
        raise ValueError("n_rec must divide n_steps")
    seg = n_steps // n_rec
    times = [0.0]
    rows = [classical_moments(W)]
    for _ in range(n_rec):
        W = fokker_planck_solve(params, pot, W, dt, seg)
        times.append(W.t)
        rows.append(classical_moments(W))
    mq, vq, mp, vp = (np.array([r[i] for r in rows]) for i in range(4))
    write_csv(outdir / "moments.csv",
              ["t", "mean_q", "var_q", "mean_p", "var_p"],
              [np.array(times), mq, vq, mp, vp])
    grid = Grid(float(q_ax[0]), float(q_ax[0] + len(q_ax) * (q_ax[1] - q_ax[0])),
                len(q_ax), hbar=params.hbar)
    write_grid_dump(outdir / "density.bin", W.values, grid)
    summary = {"p_axis": {"min": float(p_ax[0]), "max": float(p_ax[-1]),
                          "n": len(p_ax)},
               "final_time": float(W.t)}
    return 0, summary


def _run_sse(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    pot = cfg.potential
    grid = cfg.grid()
    run = cfg.run
    dt = run.get("dt", 1e-3)
    n_steps = int(run.get("n_steps", 1000))
    n_traj = int(run.get("n_traj", 1))
    record_every = int(run.get("record_every", 10))
    dissipationless = bool(run.get("dissipationless", False))
    psi0 = _initial_wavefunction(cfg, grid)
    if n_traj == 1:
        traj = sse_run(params, pot, psi0, dt, n_steps, cfg.seed,
                       dissipationless=dissipationless)
        idx = _thin_indices(traj.times.size, record_every)
        write_csv(outdir / "moments.csv",
                  ["t", "mean_q", "var_q", "mean_p", "var_p"],
                  [traj.times[idx], traj.mean_q[idx], traj.var_q[idx],
                   traj.mean_p[idx], traj.var_p[idx]])
        summary = {"renorm_max": traj.renorm_max,
                   "renorm_mean": traj.renorm_mean,
                   "final_phase": float(traj.phi[-1])}
        return 0, summary
    ens = _sse_chunked(params, pot, psi0, dt, n_steps, n_traj, cfg.seed,
                       record_every, dissipationless)
    series, bands = sse_moment_series(ens)
    write_csv(outdir / "moments.csv",
              ["t", "mean_q", "var_q", "mean_p", "var_p"],
              [series.times, series.mean_q, series.var_q, series.mean_p,
               series.var_p])
    write_json(outdir / "mc_bands.json",
               {k: v for k, v in bands.items()})
    return 0, {"n_traj": n_traj}


def _sse_chunked(params, pot, psi0, dt, n_steps, n_traj, seed, record_every,
                 dissipationless) -> SseEnsemble:
    workers = worker_count()
    chunks = _chunk_ranges(n_traj, workers)
    if len(chunks) == 1:
        return sse_ensemble(params, pot, psi0, dt, n_steps, n_traj, seed,
                            record_every=record_every,
                            dissipationless=dissipationless)
    def job(c):
        start, count = c
        return sse_ensemble(params, pot, psi0, dt, n_steps, count, seed,
                            record_every=record_every, base_stream=start,
                            dissipationless=dissipationless)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(job, chunks))
    return SseEnsemble(
        times=parts[0].times,
        mean_q=np.concatenate([p.mean_q for p in parts], axis=1),
        mean_p=np.concatenate([p.mean_p for p in parts], axis=1),
        var_q=np.concatenate([p.var_q for p in parts], axis=1),
        var_p=np.concatenate([p.var_p for p in parts], axis=1),
        psis=np.concatenate([p.psis for p in parts], axis=0),
        grid=parts[0].grid, n_traj=n_traj)


def _run_lindblad(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    pot = cfg.potential
    grid = cfg.grid()
    run = cfg.run
    lb = LindbladConfig(
        include_dissipation=not bool(run.get("dissipationless", False)),
        dt=run.get("dt", 1e-3), n_steps=int(run.get("n_steps", 1000)))
    rho0 = _initial_density(cfg, grid)
    res = lindblad_run(rho0, params, pot, lb,
                       record_every=int(run.get("record_every", 10)),
                       check_every=int(run.get("check_every", 50)),
                       wigner_every=int(run.get("wigner_every", 0)))
    write_csv(outdir / "moments.csv",
              ["t", "mean_q", "var_q", "mean_p", "var_p"],
              [res.times, res.mean_q, res.var_q, res.mean_p, res.var_p])
    write_csv(outdir / "diagnostics.csv",
              ["t", "trace", "purity"],
              [res.times, res.trace, res.purity])
    for k, W in enumerate(res.snapshots):
        write_grid_dump(outdir / f"wigner_{k:04d}.bin", W.values, grid)
    summary = {
        "trace_dev_max": float(np.max(np.abs(res.trace - 1.0))),
        "min_eig_min": float(np.min(res.min_eig)) if res.min_eig.size else None,
        "purity_first": float(res.purity[0]),
        "purity_last": float(res.purity[-1]),
        "purity_increased": bool(res.purity_increased),
        "snapshot_times": [float(W.t) for W in res.snapshots],
    }
    return 0, summary


def _run_coherent(cfg: ExperimentConfig, outdir: Path):
    pot = cfg.potential
    omega0 = cfg.extra.get("omega0", pot.omega0 if pot is not None else 0.0)
    cp = coherent_params(cfg.params, omega0)
    payload = {k: (v.real, v.imag) if isinstance(v, complex) else v
               for k, v in asdict(cp).items()}
    payload["omega0"] = omega0
    write_json(outdir / "coherent.json", payload)
    return 0, {"sigma_q2": cp.sigma_q2, "sigma_pq2": cp.sigma_pq2,
               "sigma_p2": cp.sigma_p2}


def _run_meter(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    extra = cfg.extra
    mode = extra.get("mode", "kernels")
    if mode == "kernels":
        t_max = extra.get("t_max", 1.0)
        n = int(extra.get("n", 2001))
        t = np.linspace(0.0, t_max, n)
        gam, lam1, lam2 = kernels(params, t)
        write_csv(outdir / "kernels.csv",
                  ["t", "memory_kernel", "decoherence_leading",
                   "decoherence_next"],
                  [t, gam, lam1, lam2])
        u = 9.0 * np.pi / params.Omega
        summary = {
            "window_integral_9pi": gamma_window_integral(params, u),
            "window_integral_10pi": gamma_window_integral(
                params, 10.0 * np.pi / params.Omega),
            "markov_weight": 2.0 * params.m * params.gamma,
            "next_order_ratio_estimate": lambda_ratio_estimate(params),
        }
        return 0, summary
    if mode == "noise":
        n_modes = int(extra.get("n_modes", 1024))
        n_real = int(extra.get("n_real", 200))
        omega_min = extra.get("omega_min", 0.05)
        u_max = extra.get("u_max", 9.0 * np.pi / params.Omega)
        n_u = int(extra.get("n_u", 201))
        lags = np.linspace(0.0, u_max, n_u)
        acc = np.zeros(n_u)
        for r in range(n_real):
            bath = sample_bath(params, n_modes, omega_min, 0.0,
                               NoiseSource(cfg.seed, r))
            pi = synthesize_noise(bath, params, lags)
            acc += pi[0] * pi
        acov = acc / n_real
        write_csv(outdir / "autocovariance.csv", ["u", "autocov"],
                  [lags, acov])
        # two-sided integral of an even function
        integral = 2.0 * np.trapezoid(acov, lags)
        summary = {"integral": float(integral),
                   "fluctuation_dissipation_target":
                       2.0 * params.m * params.gamma * params.kT,
                   "n_real": n_real, "n_modes": n_modes}
        return 0, summary
    if mode == "pointer":
        n_modes = int(extra.get("n_modes", 1024))
        lam = extra.get("lam", 10.0)
        q0 = cfg.initial.get("q", 0.5)
        dt = cfg.run.get("dt", 0.01)
        n_steps = int(cfg.run.get("n_steps", 200))
        times = dt * np.arange(n_steps + 1)
        bath = sample_pointer_bath(params, n_modes, q0,
                                   NoiseSource(cfg.seed, 0))
        out = pointer_run(bath, (times, np.full(times.size, q0)), params, lam)
        write_csv(outdir / "pointer.csv", ["t", "R", "var_R"],
                  [out.times, out.R, out.var_R])
        summary = {"mean_R": out.mean_R, "var_R_final": out.var_R_final,
                   "ell2": out.ell2, "n_band": out.n_band, "q0": q0}
        return 0, summary
    raise ValueError(f"unknown meter mode {mode!r}")


def _run_cat(cfg: ExperimentConfig, outdir: Path):
    params = cfg.params
    init = cfg.initial
    extra = cfg.extra
    spec = cat_spec(params, init.get("p1", 0.0), init.get("q1", 1.0),
                    init.get("p2", 0.0), init.get("q2", -1.0))
    t = extra.get("t", 1.0)
    if t <= 0:
        raise ValueError("cat slice needs t > 0 (classical column is a delta"
                         " at t = 0)")
    p_half = extra.get("p_half", 8.0)
    q_half = extra.get("q_half", 8.0)
    n_p = int(extra.get("n_p", 101))
    n_q = int(extra.get("n_q", 101))
    p = np.linspace(-p_half, p_half, n_p)
    q = np.linspace(-q_half, q_half, n_q)
    P, Q = np.meshgrid(p, q, indexing="ij")
    W = cat_wigner(spec, P, Q, t)
    Wcl = cat_classical_limit(spec, P, Q, t)
    from .cat import interference_weight
    w = interference_weight(spec, t)
    write_csv(outdir / "wigner_slice.csv",
              ["p", "q", "W", "W_cl", "interference_weight"],
              [P.ravel(), Q.ravel(), W.ravel(), Wcl.ravel(),
               np.full(P.size, w)])
    hbars = tuple(extra.get("hbars", (1.0, 0.5, 0.25, 0.125)))
    rows = hbar_interference_scan(params, spec.p1, spec.q1, spec.p2, spec.q2,
                                  t, hbars)
    write_csv(outdir / "hbar_scan.csv",
              ["hbar", "overlap_exponent", "recovery", "weight"],
              [np.array([r[i] for r in rows]) for i in range(4)])
    summary = {"t": t, "overlap_exponent": spec.overlap_c,
               "interference_weight": w,
               "weights_monotone": all(b[3] < a[3]
                                       for a, b in zip(rows, rows[1:]))}
    return 0, summary


def _run_correspondence(cfg: ExperimentConfig, outdir: Path):
    """hbar sweep: quantum moments vs classical Fokker-Planck, interference
    weights, and the residual against the classical phase-space operator.
    All three families must shrink as hbar does."""
    params0 = cfg.params
    pot = cfg.potential or _free_potential(params0.m)
    run, init, extra = cfg.run, cfg.initial, cfg.extra
    levels = extra.get("levels",
                       [{"hbar": 1.0, "n": 128}, {"hbar": 0.5, "n": 128},
                        {"hbar": 0.25, "n": 256}])
    q_half = extra.get("q_half", 10.0)
    dt = run.get("dt", 1e-3)
    n_steps = int(run.get("n_steps", 1000))
    n_rec = int(extra.get("n_rec", 5))
    vq0 = init.get("var_q", 2.0)
    vp0 = init.get("var_p", 2.0)
    record_every = n_steps // n_rec

    # classical reference on its own grid, same checkpoints
    p_half = extra.get("p_half", 4.0 * np.sqrt(params0.m * params0.kT))
    p_ax = np.linspace(-p_half, p_half, 256, endpoint=False)
    q_ax = np.linspace(-q_half, q_half, 256, endpoint=False)
    Wc = gaussian_density(p_ax, q_ax, 0.0, 0.0, vp0, vq0)
    fp_dt = run.get("fp_dt", 2e-3)
    fp_per_rec = round(record_every * dt / fp_dt)
    cl_rows = [classical_moments(Wc)]
    for _ in range(n_rec):
        Wc = fokker_planck_solve(params0, pot, Wc, fp_dt, fp_per_rec)
        cl_rows.append(classical_moments(Wc))
    cl_vq = np.array([r[1] for r in cl_rows])

    deviations, residuals = [], []
    for lv in levels:
        hb = lv["hbar"]
        params = PhysicalParams(m=params0.m, gamma=params0.gamma, T=params0.T,
                                kB=params0.kB, hbar=hb, M=params0.M,
                                Omega=params0.Omega, tau=params0.tau)
        grid = Grid(-q_half, q_half, int(lv["n"]), hbar=hb)
        rho0 = gaussian_density_matrix(grid, 0.0, 0.0, vq0, vp0)
        res = lindblad_run(rho0, params, pot,
                           LindbladConfig(dt=dt, n_steps=n_steps),
                           record_every=record_every,
                           check_every=max(record_every, 1))
        deviations.append(float(np.max(np.abs(res.var_q - cl_vq))))
        tail = lindblad_run(res.rho_final, params, pot,
                            LindbladConfig(dt=dt, n_steps=8),
                            record_every=8, check_every=8, wigner_every=2,
                            t0=res.times[-1])
        residuals.append(wigner_eom_residual(tail.snapshots, params, pot,
                                             classical=True))

    pair = extra.get("cat_pair", {})
    rows = hbar_interference_scan(
        params0, pair.get("p1", 0.0), pair.get("q1", 1.0),
        pair.get("p2", 0.0), pair.get("q2", -1.0),
        extra.get("cat_t", 1.0), tuple(lv["hbar"] for lv in levels))
    weights = [r[3] for r in rows]

    def monotone(xs):
        return all(b < a for a, b in zip(xs, xs[1:]))

    checks = [
        ("moment_deviation_vs_classical", deviations),
        ("cat_interference_weight", weights),
        ("classical_operator_residual", residuals),
    ]
    report = {"hbars": [lv["hbar"] for lv in levels]}
    passed = True
    for name, xs in checks:
        ok = monotone(xs)
        passed = passed and ok
        report[name] = {"values": xs, "monotone_decreasing": ok,
                        "criterion": "strict decrease across the hbar sweep"}
    report["passed"] = passed
    write_json(outdir / "report.json", report)
    return (0 if passed else 1), report


SCENARIOS = {
    "langevin": _run_langevin,
    "fp": _run_fp,
    "sse": _run_sse,
    "lindblad": _run_lindblad,
    "coherent": _run_coherent,
    "meter": _run_meter,
    "cat": _run_cat,
    "correspondence": _run_correspondence,
}


def run_scenario(cfg: ExperimentConfig):
    """Execute one scenario, write its artifacts and manifest, and return
    (exit_code, output directory)."""
    if cfg.scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {cfg.scenario!r}; choose from "
                         + ", ".join(sorted(SCENARIOS)))
    rep = validate_regime(cfg.params, emit=False)
    if cfg.strict and not rep.ok:
        raise RuntimeError("regime check failed under --strict: "
                           + "; ".join(rep.messages))
    outdir = cfg.out_dir / f"{cfg.scenario}-{cfg.config_hash[:12]}"
    outdir.mkdir(parents=True, exist_ok=True)
    code, summary = SCENARIOS[cfg.scenario](cfg, outdir)
    artifacts = {}
    for f in sorted(outdir.iterdir()):
        if f.name != "manifest.json" and f.is_file():
            artifacts[f.name] = _sha256_file(f)
    write_json(outdir / "manifest.json", {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config_sha256": cfg.config_hash,
        "config": cfg.raw,
        "regime_warnings": list(rep.messages),
        "artifacts": artifacts,
        "summary": summary,
        "exit_code": code,
    })
    return code, outdir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contmeas",
        description="continuous position measurement scenarios")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in sorted(SCENARIOS):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--strict", action="store_true")
        if name in ("sse", "lindblad"):
            sp.add_argument("--dissipationless", action="store_true")
    args = parser.parse_args(argv)
    overrides = {}
    if getattr(args, "dissipationless", False):
        overrides["dissipationless"] = True
    try:
        cfg = experiment_config(args.config, args.scenario, seed=args.seed,
                                out=args.out, strict=args.strict,
                                overrides=overrides or None)
        code, outdir = run_scenario(cfg)
    except Exception as exc:  # noqa: BLE001 - map any failure to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(outdir)
    return code


if __name__ == "__main__":
    sys.exit(main())
