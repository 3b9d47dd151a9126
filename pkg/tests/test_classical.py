import numpy as np
import pytest

from contmeas.classical import (
    ClassicalTrajectory,
    PhaseSpaceDensity,
    classical_moments,
    finite_bath_run,
    fokker_planck_solve,
    gaussian_density,
    langevin_ensemble,
    langevin_run,
    total_energy,
)
from contmeas.core import NoiseSource, PhysicalParams, Potential

FREE = Potential.linear()


class TestLangevin:
    def test_deterministic_free_motion(self):
        p = PhysicalParams(m=2.0, gamma=0.0, T=10, tau=1.0)
        tr = langevin_run(p, FREE, 1.5, 0.2, 0.01, 100, NoiseSource(0))
        assert len(tr.times) == 101
        np.testing.assert_allclose(tr.p, 1.5)
        np.testing.assert_allclose(tr.q[-1], 0.2 + 1.5 * 1.0 / 2.0, atol=1e-9)

    def test_dt_guard(self):
        p = PhysicalParams(gamma=0.5, tau=1.0)
        with pytest.raises(ValueError):
            langevin_run(p, FREE, 0, 0, 0.05, 10, NoiseSource(0))

    def test_ou_mean_decay(self):
        # mean p(t=2) -> p0 e^{-gamma t} = e^{-1}
        p = PhysicalParams(m=1, gamma=0.5, T=10, tau=1.0)
        ens = langevin_ensemble(p, FREE, 1.0, 0.0, 0.02, 100, 4000, seed=11)
        mc_sigma = np.sqrt(ens.var_p[-1] / ens.n_traj)
        assert abs(ens.mean_p[-1] - np.exp(-1)) < 3 * mc_sigma

    def test_ou_stationary_variance(self):
        # Var p -> m kB T within 3% at t >> 1/gamma
        p = PhysicalParams(m=1, gamma=0.5, T=10, tau=1.0)
        ens = langevin_ensemble(p, FREE, 0.0, 0.0, 0.02, 500, 10**4, seed=7)
        assert ens.var_p[-1] == pytest.approx(p.m * p.kT, rel=0.03)

    def test_ensemble_matches_single_runs(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10, tau=1.0)
        ens = langevin_ensemble(p, FREE, 0.3, -0.2, 0.02, 50, 3, seed=5)
        for k in range(3):
            tr = langevin_run(p, FREE, 0.3, -0.2, 0.02, 50, NoiseSource(5, k))
            assert tr.p[-1] == pytest.approx(
                ens.final_p[k], rel=1e-12), f"stream {k}"

    def test_nan_abort(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10, tau=1.0)
        pot = Potential.nonlinear(lambda q, t: -q**4, lambda q, t: -4 * q**3)
        with pytest.raises(FloatingPointError):
            langevin_run(p, pot, 0.0, 3.0, 0.01, 2000, NoiseSource(1))


class TestFiniteBath:
    def _bath(self, params, N, seed=0, omega_min=None):
        from contmeas.meter import sample_bath
        omega_min = omega_min or params.Omega / 1e4
        return sample_bath(params, N, omega_min, 0.0, NoiseSource(seed, 900))

    def test_dt_guard(self):
        p = PhysicalParams(Omega=100)
        bath = self._bath(p, 16)
        with pytest.raises(ValueError):
            finite_bath_run(p, FREE, 0, 0, bath, 0.01, 10)

    def test_zero_coupling_is_symplectic_oscillator(self):
        from types import SimpleNamespace
        p = PhysicalParams(m=1, gamma=0.5, Omega=100)
        bath = SimpleNamespace(omegas=np.empty(0), Q=np.empty(0), P=np.empty(0),
                               M=1.0, q_ref=0.0)
        pot = Potential.linear(omega0=1.0, m=1.0)
        tr = finite_bath_run(p, pot, 0.0, 1.0, bath, 1e-3, 2000)
        # q(t) = cos(t) for the bare oscillator
        np.testing.assert_allclose(tr.q[-1], np.cos(2.0), atol=1e-5)

    def test_equilibrium_initial_condition_is_static(self):
        from types import SimpleNamespace
        p = PhysicalParams(m=1, gamma=0.5, Omega=100)
        omg = np.linspace(5.0, 100.0, 64)
        bath = SimpleNamespace(omegas=omg, Q=np.full(64, 0.7), P=np.zeros(64),
                               M=1.0, q_ref=0.7)
        tr = finite_bath_run(p, FREE, 0.0, 0.7, bath, 1e-3, 500)
        np.testing.assert_allclose(tr.q, 0.7, atol=1e-12)

    def test_energy_conservation(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10, Omega=50)
        bath = self._bath(p, 256, seed=3)
        e0 = total_energy(p, FREE, 0.5, 0.0, bath)
        tr = finite_bath_run(p, FREE, 0.5, 0.0, bath, 1e-3, 5000)
        e1 = total_energy(p, FREE, tr.p[-1], tr.q[-1], bath, tr.bath_Q, tr.bath_P)
        assert abs(e1 - e0) / abs(e0) < 1e-4


class TestFokkerPlanck:
    def _axes(self, pmax=20, qmax=20, n=128):
        return (np.linspace(-pmax, pmax, n, endpoint=False),
                np.linspace(-qmax, qmax, n, endpoint=False))

    def test_gibbs_stationarity(self):
        # exp(-H/kT) stays put over 5/gamma within 1e-4 in L1
        p = PhysicalParams(m=1, gamma=0.5, T=10)
        pot = Potential.linear(omega0=1.0, m=1.0)
        pax, qax = self._axes(24, 24, 128)
        W0 = gaussian_density(pax, qax, var_p=p.m * p.kT, var_q=p.kT / (p.m * 1.0**2))
        W = fokker_planck_solve(p, pot, W0, 0.01, 1000)
        l1 = np.abs(W.values - W0.values).sum() * W.dp * W.dq
        assert l1 < 1e-4

    def test_ou_mean_relaxation(self):
        # V=0: means follow (p0 e^{-gt}, q0 + p0 (1 - e^{-gt})/(m g))
        p = PhysicalParams(m=1, gamma=0.5, T=10)
        pax, qax = self._axes(24, 28, 128)
        W0 = gaussian_density(pax, qax, mean_p=2.0, mean_q=-1.0, var_p=1.0, var_q=0.5)
        t = 2.0
        W = fokker_planck_solve(p, FREE, W0, 0.01, 200)
        mq, vq, mp, vp = classical_moments(W)
        c = np.exp(-p.gamma * t)
        assert mp == pytest.approx(2.0 * c, abs=2e-3)
        assert mq == pytest.approx(-1.0 + 2.0 * (1 - c) / (p.m * p.gamma), abs=2e-3)

    def test_liouville_free_streaming(self):
        # gamma=0, V=0: Var q grows by (Var_p0/m^2) t^2
        p = PhysicalParams(m=2.0, gamma=0.0, T=10)
        pax, qax = self._axes(12, 30, 128)
        W0 = gaussian_density(pax, qax, var_p=4.0, var_q=1.0)
        t = 3.0
        W = fokker_planck_solve(p, FREE, W0, 0.015, 200)
        mq, vq, mp, vp = classical_moments(W)
        assert vq == pytest.approx(1.0 + 4.0 / 4.0 * t**2, rel=1e-6)
        # final clip of spectral-ringing negatives perturbs vp at ~1e-7
        assert vp == pytest.approx(4.0, rel=1e-6)

    def test_mass_conservation(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10)
        pax, qax = self._axes(24, 24, 128)
        W0 = gaussian_density(pax, qax, var_p=10.0, var_q=2.0)
        W = fokker_planck_solve(p, FREE, W0, 0.01, 100)
        assert W.mass() == pytest.approx(1.0, abs=1e-6)

    def test_leakage_abort(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10)
        pax, qax = self._axes(6, 6, 64)  # too small for kT = 10
        W0 = gaussian_density(pax, qax, var_p=4.0, var_q=1.0)
        with pytest.raises(RuntimeError, match="expand"):
            fokker_planck_solve(p, FREE, W0, 0.01, 500)


class TestMoments:
    def test_symmetric_gaussian(self):
        pax = np.linspace(-10, 10, 128, endpoint=False)
        qax = np.linspace(-10, 10, 128, endpoint=False)
        W = gaussian_density(pax, qax, var_p=2.0, var_q=0.25)
        mq, vq, mp, vp = classical_moments(W)
        # endpoint=False axes are slightly asymmetric, biasing means at ~1e-11
        assert (mq, mp) == pytest.approx((0.0, 0.0), abs=1e-9)
        assert vq == pytest.approx(0.25, abs=1e-6)
        assert vp == pytest.approx(2.0, abs=1e-6)

    def test_langevin_vs_fp(self):
        # trajectory / density equivalence within 3 MC sigma, shared Gaussian
        # initial density (a point initial is unresolvable on the W grid)
        p = PhysicalParams(m=1, gamma=0.5, T=10, tau=1.0)
        pot = Potential.linear(omega0=1.0, m=1.0)
        ic = NoiseSource(99, 7777)
        p0 = 1.0 + ic.normal(4000)
        q0 = 1.5 + ic.normal(4000)
        ens = langevin_ensemble(p, pot, p0, q0, 0.02, 150, 4000, seed=21)
        pax = np.linspace(-24, 24, 128, endpoint=False)
        qax = np.linspace(-24, 24, 128, endpoint=False)
        W0 = gaussian_density(pax, qax, mean_p=1.0, mean_q=1.5, var_p=1.0, var_q=1.0)
        W = fokker_planck_solve(p, pot, W0, 0.01, 300)
        mq, vq, mp, vp = classical_moments(W)
        for got, ref, var in (
            (ens.mean_q[-1], mq, vq), (ens.mean_p[-1], mp, vp),
        ):
            assert abs(got - ref) < 3 * np.sqrt(var / ens.n_traj) + 5e-3
        assert ens.var_q[-1] == pytest.approx(vq, rel=3 * np.sqrt(2 / ens.n_traj) + 0.02)
        assert ens.var_p[-1] == pytest.approx(vp, rel=3 * np.sqrt(2 / ens.n_traj) + 0.02)

    def test_clipping_warns_on_real_negativity(self):
        pax = np.linspace(-5, 5, 32, endpoint=False)
        qax = np.linspace(-5, 5, 32, endpoint=False)
        W = gaussian_density(pax, qax)
        W.values[3, 3] = -0.1
        with pytest.warns(UserWarning):
            W.clipped()
