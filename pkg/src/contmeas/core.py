"""Shared parameter sets, potentials, grids, state containers, noise sources."""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ImportError:  # py < 3.11
    import tomli as tomllib

MAGIC_REAL = b"CMGRID0R"
MAGIC_CPLX = b"CMGRID0C"


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    gamma: float = 0.5
    T: float = 10.0
    kB: float = 1.0
    hbar: float = 1.0
    M: float = 1.0
    Omega: float = 100.0
    tau: float = 1.0

    def __post_init__(self):
        for name in ("m", "T", "kB", "hbar", "M", "Omega", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.gamma < 0:  # gamma = 0 allowed: decoupled / unitary limits
            raise ValueError("gamma must be >= 0")

    @property
    def kT(self) -> float:
        return self.kB * self.T

    @property
    def kappa(self) -> float:
        # kappa = 2 m gamma kB T / hbar^2
        return 2.0 * self.m * self.gamma * self.kT / self.hbar**2

    @property
    def meas_a(self) -> float:
        # position coefficient of the measurement operator, sqrt(kappa)
        return np.sqrt(self.kappa)

    @property
    def meas_b(self) -> float:
        # momentum coefficient; hbar * meas_a * meas_b = gamma / 2
        return np.sqrt(self.gamma / (8.0 * self.m * self.kT))


@dataclass(frozen=True)
class RegimeReport:
    hbar_Omega_over_kT: float
    inv_Omega_tau: float
    hbar_over_kT_tau: float
    warn_flags: tuple
    messages: tuple

    @property
    def ratios(self):
        return (self.hbar_Omega_over_kT, self.inv_Omega_tau, self.hbar_over_kT_tau)

    @property
    def ok(self) -> bool:
        return not any(self.warn_flags)


def validate_regime(params: PhysicalParams, emit=True) -> RegimeReport:
    """Report the three separation-of-scales ratios; warn (never reject) above 0.1."""
    ratios = (
        params.hbar * params.Omega / params.kT,
        1.0 / (params.Omega * params.tau),
        params.hbar / (params.kT * params.tau),
    )
    names = ("hbar*Omega/kT", "1/(Omega*tau)", "hbar/(kT*tau)")
    flags = tuple(r > 0.1 for r in ratios)
    msgs = tuple(
        f"regime ratio {n} = {r:.3g} > 0.1" for n, r, f in zip(names, ratios, flags) if f
    )
    if emit:
        for msg in msgs:
            warnings.warn(msg, stacklevel=2)
    return RegimeReport(*ratios, flags, msgs)


def _at(v, t):
    return v(t) if callable(v) else v


@dataclass(frozen=True)
class Potential:
    """V(q,t). kind 'linear': v0(t) + v1(t) q + m omega0^2 q^2 / 2; kind 'nonlinear': user V, dV."""

    kind: str = "linear"
    v0: object = 0.0
    v1: object = 0.0
    omega0: float = 0.0
    m: float = 1.0
    V: object = None
    dV: object = None

    @classmethod
    def linear(cls, v0=0.0, v1=0.0, omega0=0.0, m=1.0):
        return cls(kind="linear", v0=v0, v1=v1, omega0=omega0, m=m)

    @classmethod
    def nonlinear(cls, V, dV, check_points=(-1.3, -0.4, 0.6, 1.7), t_check=0.0):
        pot = cls(kind="nonlinear", V=V, dV=dV)
        # analytic derivative must match central differences, rel 1e-6
        h = 1e-5
        for q in check_points:
            fd = (V(q + h, t_check) - V(q - h, t_check)) / (2 * h)
            an = dV(q, t_check)
            scale = max(abs(an), abs(fd), 1.0)
            if abs(an - fd) > 1e-6 * scale:
                raise ValueError(
                    f"dV mismatch at q={q}: analytic {an}, finite-diff {fd}"
                )
        return pot

    def value(self, q, t=0.0):
        if self.kind == "linear":
            return _at(self.v0, t) + _at(self.v1, t) * q + 0.5 * self.m * self.omega0**2 * q**2
        return self.V(q, t)

    def grad(self, q, t=0.0):
        if self.kind == "linear":
            return _at(self.v1, t) + self.m * self.omega0**2 * q
        return self.dV(q, t)


def eval_force(pot: Potential, q, t=0.0):
    """d/dq of V(q,t); the Langevin drift uses -(gamma p + eval_force)."""
    return pot.grad(q, t)


@dataclass(frozen=True)
class Grid:
    q_min: float
    q_max: float
    n_q: int
    hbar: float = 1.0

    def __post_init__(self):
        n = self.n_q
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("n_q must be a power of two, >= 16")
        if self.q_max <= self.q_min:
            raise ValueError("empty grid")

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.n_q)

    @property
    def dp(self) -> float:
        # conjugate spacing: dp * n_q * dq = 2 pi hbar
        return 2.0 * np.pi * self.hbar / (self.n_q * self.dq)

    @property
    def p(self) -> np.ndarray:
        return self.dp * (np.arange(self.n_q) - self.n_q // 2)

    @property
    def k_fft(self) -> np.ndarray:
        # wavenumbers in FFT order, p = hbar k
        return 2.0 * np.pi * np.fft.fftfreq(self.n_q, self.dq)


@dataclass
class WaveFunction:
    grid: Grid
    values: np.ndarray

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dq)

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.values / np.sqrt(self.norm2()))

    def check(self, tol=1e-8):
        if abs(self.norm2() - 1.0) > tol:
            raise ValueError(f"norm^2 = {self.norm2()} outside 1 +- {tol}")


def wavefunction_moments(psi: WaveFunction):
    """(<q>, <p>, sigma_q^2, sigma_pq^2, sigma_p^2) by grid quadrature."""
    g = psi.grid
    v = psi.values
    w = np.abs(v) ** 2 * g.dq
    nrm = w.sum()
    q = g.q
    mq = float((w * q).sum() / nrm)
    vq = float((w * (q - mq) ** 2).sum() / nrm)
    pv = np.fft.ifft(g.hbar * g.k_fft * np.fft.fft(v))  # p-hat psi
    mp = float(np.real(np.sum(np.conj(v) * pv)) * g.dq / nrm)
    vp = float(np.sum(np.abs(pv) ** 2) * g.dq / nrm - mp**2)
    # Re<q p> - <q><p> equals the symmetrized covariance
    cpq = float(np.real(np.sum(np.conj(v) * (q - mq) * pv)) * g.dq / nrm)
    return mq, mp, vq, cpq, vp


@dataclass
class DensityMatrix:
    grid: Grid
    values: np.ndarray  # rho(q1, q2), n_q x n_q

    def trace(self) -> float:
        return float(np.real(np.trace(self.values)) * self.grid.dq)

    def hermiticity_error(self) -> float:
        num = np.max(np.abs(self.values - self.values.conj().T))
        den = max(np.max(np.abs(self.values)), 1e-300)
        return float(num / den)

    def min_eigenvalue(self) -> float:
        # operator eigenvalues: kernel matrix times dq
        h = 0.5 * (self.values + self.values.conj().T)
        return float(np.linalg.eigvalsh(h * self.grid.dq)[0])

    def check(self, trace_tol=1e-6, herm_tol=1e-10, eig_floor=-1e-6):
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"trace = {self.trace()}")
        if self.hermiticity_error() > herm_tol:
            raise ValueError(f"hermiticity error = {self.hermiticity_error()}")
        ev = self.min_eigenvalue()
        if ev < eig_floor:
            raise ValueError(f"min eigenvalue = {ev}")
        return self


def pure_density(psi: WaveFunction) -> DensityMatrix:
    v = psi.values
    return DensityMatrix(psi.grid, np.outer(v, v.conj()))


@dataclass
class WignerGrid:
    q: np.ndarray
    p: np.ndarray
    values: np.ndarray  # W[p_index, q_index]
    t: float = 0.0

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def integral(self) -> float:
        return float(self.values.sum() * self.dq * self.dp)

    def marginal_q(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dp

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dq


@dataclass
class NoiseSource:
    """Counter-based stream: (seed, stream_id) fixes the sequence bit-exactly."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        key = np.array([self.seed & (2**64 - 1), self.stream_id & (2**64 - 1)],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def counter(self) -> int:
        return int(self._gen.bit_generator.state["state"]["counter"][0])

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)


def wiener_increments(src: NoiseSource, n: int, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if n == 0:
        return np.empty(0)
    return np.sqrt(dt) * src.normal(n)


# --- config / dump plumbing ---

def load_config(path) -> dict:
    text = open(path, "rb").read()
    name = str(path)
    if name.endswith(".toml"):
        return tomllib.loads(text.decode())
    return json.loads(text.decode())


def params_from_config(cfg: dict) -> PhysicalParams:
    keys = ("m", "gamma", "T", "kB", "hbar", "M", "Omega", "tau")
    sub = cfg.get("params", cfg)
    return PhysicalParams(**{k: sub[k] for k in keys if k in sub})


def potential_from_config(cfg: dict, m=1.0) -> Potential:
    sub = cfg.get("potential", cfg)
    return Potential.linear(
        v0=sub.get("v0", 0.0), v1=sub.get("v1", 0.0),
        omega0=sub.get("omega0", 0.0), m=sub.get("m", m),
    )


def write_grid_dump(path, values: np.ndarray, grid: Grid):
    """32-byte header (magic, n_q, dq, q_min), then little-endian row-major payload."""
    arr = np.ascontiguousarray(values)
    if np.iscomplexobj(arr):
        magic, dtype = MAGIC_CPLX, "<c16"
    else:
        magic, dtype = MAGIC_REAL, "<f8"
    with open(path, "wb") as f:
        f.write(struct.pack("<8sQdd", magic, grid.n_q, grid.dq, grid.q_min))
        f.write(arr.astype(dtype).tobytes("C"))


def read_grid_dump(path):
    """Returns (values, n_q, dq, q_min)."""
    with open(path, "rb") as f:
        magic, n_q, dq, q_min = struct.unpack("<8sQdd", f.read(32))
        payload = f.read()
    if magic == MAGIC_CPLX:
        flat = np.frombuffer(payload, dtype="<c16")
    elif magic == MAGIC_REAL:
        flat = np.frombuffer(payload, dtype="<f8")
    else:
        raise ValueError(f"bad magic {magic!r}")
    if flat.size % n_q:
        raise ValueError("payload not a multiple of n_q")
    return flat.reshape(-1, int(n_q)).squeeze(), int(n_q), dq, q_min
