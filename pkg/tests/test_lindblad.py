import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contmeas.coherent import (
    coherent_params,
    coherent_wavefunction,
    coherent_wigner,
    overlap_exponent,
)
from contmeas.core import (
    DensityMatrix,
    Grid,
    PhysicalParams,
    Potential,
    WaveFunction,
    pure_density,
)
from contmeas.lindblad import (
    LindbladConfig,
    gaussian_density_matrix,
    lindblad_run,
    lindblad_step,
    u_axis,
    von_neumann_limit_check,
    wigner_eom_residual,
    wigner_moments,
    wigner_transform,
)

DESK = PhysicalParams(m=1.0, gamma=0.5, T=10.0)
UNIT = PhysicalParams(m=1.0, gamma=0.0, T=10.0)
G128 = Grid(-12.8, 12.8, 128)
G256 = Grid(-19.2, 19.2, 256)

# stationary second moments of the monitored damped oscillator (omega0 = 1);
# the r-diffusion shifts them off m kB T by the gamma/16mkT terms
VAR_P_STAT = 10.00625
VAR_Q_STAT = 10.0078125

# frozen moment-flow reference: solve_ivp (rtol 1e-12) of
#   d mq = mp/m,  d mp = -m w0^2 mq - g mp,  d vq = 2 c/m + g hb^2/(8 m kT),
#   d c = vp/m - m w0^2 vq - g c,  d vp = -2 m w0^2 c - 2 g vp + 2 m g kT
# from (1, 0, 1.5, 0, 2) at desk params, w0 = 1, t = 2
ODE_T2 = {"mq": -0.070644550919, "mp": -0.585000213597,
          "vq": 7.225153762330, "vp": 6.040172936959}


def banded_hermitian(grid, seed):
    rng = np.random.default_rng(seed)
    n = grid.n_q
    vals = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    vals = vals + vals.conj().T
    i1, i2 = np.indices((n, n))
    vals[np.abs(i1 - i2) >= n // 2] = 0.0
    return DensityMatrix(grid, vals)


@pytest.fixture(scope="module")
def free_run():
    cp = coherent_params(DESK, 0.0)
    rho0 = pure_density(coherent_wavefunction(cp, 2.0, -1.0, G128))
    cfg = LindbladConfig(dt=1e-3, n_steps=500)
    return lindblad_run(rho0, DESK, None, cfg, record_every=25, check_every=50)


@pytest.fixture(scope="module")
def thermal_run():
    rho0 = gaussian_density_matrix(G128, 0.0, 0.0, 10.0, 10.0)
    pot = Potential.linear(omega0=1.0, m=1.0)
    cfg = LindbladConfig(dt=2.5e-3, n_steps=2000)
    with warnings.catch_warnings():
        # thermal momentum tails sit at ~4e-6 of peak on this grid
        warnings.filterwarnings("ignore", message="Wigner support touches")
        return lindblad_run(rho0, DESK, pot, cfg, record_every=200, check_every=50)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LindbladConfig(dt=0.0)
        with pytest.raises(ValueError):
            LindbladConfig(n_steps=-1)

    def test_initial_trace_checked(self):
        rho = gaussian_density_matrix(G128, 0.0, 0.0, 1.0, 1.0)
        rho.values = 1.5 * rho.values
        with pytest.raises(ValueError, match="initial trace"):
            lindblad_run(rho, DESK, None, LindbladConfig(n_steps=1))


class TestLayout:
    @given(seed=st.integers(0, 1000))
    @settings(max_examples=10, deadline=None)
    def test_roundtrip_gaussian_mixture(self, seed):
        # center-coordinate samples on the odd q1+q2 sublattice are
        # interpolated, so the roundtrip is exact for kernels whose
        # center-frequency content fits under the grid Nyquist
        from contmeas.lindblad import dm_to_ru, ru_to_dm

        # ranges keep every component's position and separation tails
        # below 1e-12 at the box edge; wider states ring against the
        # periodic interpolant at the truncation
        grid = Grid(-6.4, 6.4, 64)
        rng = np.random.default_rng(seed)
        vals = np.zeros((grid.n_q, grid.n_q), dtype=complex)
        for w in rng.dirichlet(np.ones(3)):
            part = gaussian_density_matrix(
                grid, rng.uniform(-1, 1), rng.uniform(-2, 2),
                rng.uniform(0.25, 0.4), rng.uniform(1.4, 3.0),
            )
            vals += w * part.values
        rho = DensityMatrix(grid, vals)
        back = ru_to_dm(dm_to_ru(rho), grid)
        assert np.max(np.abs(back.values - rho.values)) < 1e-10 * np.max(
            np.abs(rho.values)
        )

    def test_roundtrip_chirped_packet(self):
        # the correlated packet oscillates in the center coordinate at
        # 2 |Im B| |u|; the margin to Nyquist decides the accuracy, so the
        # same state converts at ~3e-6 on dq = 0.2 and exactly on dq = 0.1
        from contmeas.lindblad import dm_to_ru, ru_to_dm

        cp = coherent_params(DESK, 0.0)
        for n_q, tol in ((64, 1e-5), (128, 1e-11)):
            grid = Grid(-6.4, 6.4, n_q)
            rho = pure_density(coherent_wavefunction(cp, -2.9, 1.25, grid))
            back = ru_to_dm(dm_to_ru(rho), grid)
            assert np.max(np.abs(back.values - rho.values)) < tol * np.max(
                np.abs(rho.values)
            )

    def test_covariance_after_conversion(self):
        from contmeas.lindblad import _hermiticity_ru, dm_to_ru

        ru = dm_to_ru(banded_hermitian(Grid(-6.4, 6.4, 64), 7))
        assert _hermiticity_ru(ru) < 1e-14

    def test_u_axis(self):
        u = u_axis(G128)
        assert u[G128.n_q // 2] == 0.0
        assert u[1] - u[0] == pytest.approx(G128.dq, rel=1e-15)


class TestUnitaryLimit:
    def test_harmonic_ground_state_stationary(self):
        cp = coherent_params(UNIT, 1.0)
        rho0 = pure_density(coherent_wavefunction(cp, 0.0, 0.0, G128))
        cfg = LindbladConfig(dt=2e-3, n_steps=500)
        res = lindblad_run(rho0, UNIT, Potential.linear(omega0=1.0, m=1.0),
                           cfg, record_every=100, check_every=100)
        drift = np.max(np.abs(res.rho_final.values - rho0.values))
        assert drift / np.max(np.abs(rho0.values)) < 1e-6
        assert res.var_q[-1] == pytest.approx(0.5, rel=1e-6)
        assert res.purity[-1] == pytest.approx(1.0, rel=1e-8)


class TestFreeDamped:
    def test_means_follow_damped_newton(self, free_run):
        t, g = free_run.times, DESK.gamma
        q_exact = -1.0 + (2.0 / g) * (1.0 - np.exp(-g * t))
        p_exact = 2.0 * np.exp(-g * t)
        assert np.max(np.abs(free_run.mean_q - q_exact)) < 1e-5
        assert np.max(np.abs(free_run.mean_p - p_exact)) < 1e-5

    def test_trace_and_positivity(self, free_run):
        assert np.max(np.abs(free_run.trace - 1.0)) < 1e-10
        assert np.min(free_run.min_eig) > -1e-8
        assert free_run.rho_final.min_eigenvalue() > -1e-8

    def test_purity_decreases_from_pure(self, free_run):
        assert free_run.purity[0] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(free_run.purity) < 0)
        assert not free_run.purity_increased

    def test_momentum_conserved_without_dissipation(self):
        cp = coherent_params(DESK, 0.0)
        rho0 = pure_density(coherent_wavefunction(cp, 2.0, -1.0, G128))
        cfg = LindbladConfig(include_dissipation=False, dt=1e-3, n_steps=200)
        res = lindblad_run(rho0, DESK, None, cfg, record_every=50,
                           check_every=100)
        assert np.max(np.abs(res.mean_p - 2.0)) < 1e-6 * 2.0


class TestMomentFlow:
    def test_harmonic_against_ode_reference(self):
        rho0 = gaussian_density_matrix(G128, 1.0, 0.0, 1.5, 2.0)
        pot = Potential.linear(omega0=1.0, m=1.0)
        cfg = LindbladConfig(dt=2e-3, n_steps=1000)
        res = lindblad_run(rho0, DESK, pot, cfg, record_every=250,
                           check_every=50)
        assert res.mean_q[-1] == pytest.approx(ODE_T2["mq"], abs=5e-5)
        assert res.mean_p[-1] == pytest.approx(ODE_T2["mp"], abs=5e-5)
        assert res.var_q[-1] == pytest.approx(ODE_T2["vq"], rel=5e-3)
        assert res.var_p[-1] == pytest.approx(ODE_T2["vp"], rel=5e-3)

    def test_stationary_thermal_variances(self, thermal_run):
        assert thermal_run.var_p[-1] == pytest.approx(VAR_P_STAT, rel=5e-3)
        assert thermal_run.var_q[-1] == pytest.approx(VAR_Q_STAT, rel=1e-2)
        assert not thermal_run.purity_increased

    def test_gaussian_purity_identity(self, thermal_run):
        # purity of a Gaussian state is hbar / (2 sqrt(det cov))
        vq, vp = thermal_run.var_q[-1], thermal_run.var_p[-1]
        assert thermal_run.purity[-1] == pytest.approx(
            1.0 / (2.0 * np.sqrt(vq * vp)), rel=1e-2
        )


class TestLocalization:
    def test_ridge_decay_rate(self):
        # short-time suppression of off-diagonal kernel magnitude:
        # ln |rho_t / rho_0| = -(kappa/2) (q1-q2)^2 t plus O(t^2) transport
        rho = gaussian_density_matrix(G128, 0.0, 0.0, 4.0, 2.0)
        rho0 = rho.values.copy()
        cfg = LindbladConfig(include_dissipation=False, dt=1e-4, n_steps=0)
        t_total = 10 * cfg.dt
        for k in range(10):
            rho = lindblad_step(rho, DESK, None, cfg, t=k * cfg.dt)
        q = G128.q
        u = q[:, None] - q[None, :]
        r = 0.5 * (q[:, None] + q[None, :])
        mask = np.abs(rho0) > 1e-3 * np.max(np.abs(rho0))
        y = np.log(np.abs(rho.values[mask]) / np.abs(rho0[mask]))
        design = np.stack(
            [u[mask] ** 2, r[mask] ** 2, np.ones(mask.sum())], axis=1
        )
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
        target = 0.5 * DESK.kappa * t_total
        assert -coef[0] == pytest.approx(target, rel=0.05)

    def test_step_matches_run(self):
        # chirp-free state: the per-call layout roundtrip is then exact
        # and the comparison isolates the stepping
        rho = gaussian_density_matrix(G128, 0.5, 1.0, 1.0, 1.0)
        cfg = LindbladConfig(dt=1e-3, n_steps=2)
        res = lindblad_run(rho, DESK, None, cfg, record_every=2, check_every=2)
        stepped = lindblad_step(rho, DESK, None, cfg, t=0.0)
        stepped = lindblad_step(stepped, DESK, None, cfg, t=cfg.dt)
        assert np.max(np.abs(stepped.values - res.rho_final.values)) < 1e-10
        assert stepped.hermiticity_error() < 1e-12
        assert stepped.trace() == pytest.approx(1.0, abs=1e-12)


class TestGuards:
    def test_positivity_abort(self):
        cp = coherent_params(DESK, 0.0)
        r1 = pure_density(coherent_wavefunction(cp, 0.0, -3.0, G128))
        r2 = pure_density(coherent_wavefunction(cp, 0.0, 3.0, G128))
        bad = DensityMatrix(G128, 1.3 * r1.values - 0.3 * r2.values)
        with pytest.raises(RuntimeError, match="positivity lost"):
            lindblad_run(bad, DESK, None, LindbladConfig(n_steps=1))

    def test_purity_rise_flagged_not_fatal(self):
        # states mixed beyond the stationary width legitimately purify
        rho0 = gaussian_density_matrix(G128, 0.0, 0.0, 36.0, 8.0)
        pot = Potential.linear(omega0=1.0, m=1.0)
        cfg = LindbladConfig(dt=2.5e-3, n_steps=200)
        with pytest.warns(UserWarning, match="purity increased"):
            res = lindblad_run(rho0, DESK, pot, cfg, record_every=100,
                               check_every=20)
        assert res.purity_increased


class TestWigner:
    def test_coherent_packet_oracle(self):
        cp = coherent_params(DESK, 0.0)
        W = wigner_transform(pure_density(coherent_wavefunction(cp, 1.0, 0.8, G256)))
        P, Q = np.meshgrid(W.p, W.q, indexing="ij")
        ref = coherent_wigner(cp, 1.0, 0.8, P, Q)
        assert np.max(np.abs(W.values - ref)) < 1e-6 * np.max(ref)

    def test_normalization_and_moments(self):
        cp = coherent_params(DESK, 0.0)
        W = wigner_transform(pure_density(coherent_wavefunction(cp, 1.0, 0.8, G256)))
        assert np.sum(W.values) * W.dq * W.dp == pytest.approx(1.0, abs=1e-9)
        mq, vq, mp, vp = wigner_moments(W)
        assert mq == pytest.approx(0.8, abs=1e-9)
        assert mp == pytest.approx(1.0, abs=1e-9)
        assert vq == pytest.approx(cp.sigma_q2, rel=1e-9)
        assert vp == pytest.approx(cp.sigma_p2, rel=1e-9)

    def test_superposition_interference(self):
        # mirror pair: the cross term is an unsuppressed midpoint Gaussian
        # times cos(2 (p' q - q' p)/hbar); only the weight carries the overlap
        cp = coherent_params(DESK, 0.0)
        a, pm = 0.8, 1.0
        psi1 = coherent_wavefunction(cp, pm, a, G256).values
        psi2 = coherent_wavefunction(cp, -pm, -a, G256).values
        ov = np.sum(np.conj(psi1) * psi2) * G256.dq
        assert abs(ov.imag) < 1e-12
        assert ov.real == pytest.approx(
            np.exp(-overlap_exponent(cp, 2 * pm, 2 * a)), rel=1e-9
        )
        n2 = 1.0 / (2.0 * (1.0 + ov.real))
        psi = WaveFunction(G256, np.sqrt(n2) * (psi1 + psi2))
        W = wigner_transform(pure_density(psi))
        P, Q = np.meshgrid(W.p, W.q, indexing="ij")
        ref = n2 * (
            coherent_wigner(cp, pm, a, P, Q)
            + coherent_wigner(cp, -pm, -a, P, Q)
            + 2.0 * coherent_wigner(cp, 0.0, 0.0, P, Q)
            * np.cos(2.0 * (pm * Q - a * P) / G256.hbar)
        )
        assert np.max(np.abs(W.values - ref)) < 1e-6 * np.max(np.abs(ref))
        # interference makes the quasidistribution go negative
        assert W.values.min() < -0.1 / (np.pi * G256.hbar)

    def test_momentum_boundary_warning(self):
        rho = gaussian_density_matrix(G128, 0.0, 0.0, 4.0, 60.0)
        with pytest.warns(UserWarning, match="momentum boundary"):
            wigner_transform(rho)

    def test_non_hermitian_rejected(self):
        rho = gaussian_density_matrix(G128, 0.0, 0.0, 1.0, 1.0)
        rho.values[10, 90] += 0.2
        with pytest.raises(ValueError, match="not Hermitian"):
            wigner_transform(rho)


class TestEquationOfMotion:
    def test_quadratic_residual_small(self):
        rho0 = gaussian_density_matrix(G128, 1.0, 0.0, 1.5, 2.0)
        pot = Potential.linear(omega0=1.0, m=1.0)
        cfg = LindbladConfig(dt=1e-3, n_steps=60)
        res = lindblad_run(rho0, DESK, pot, cfg, record_every=10,
                           check_every=30, wigner_every=10)
        assert len(res.snapshots) == 7
        assert wigner_eom_residual(res.snapshots, DESK, pot) < 5e-3

    def test_quartic_needs_hbar2_term(self):
        lam = 0.05
        pot = Potential.nonlinear(lambda q, t: lam * q**4,
                                  lambda q, t: 4 * lam * q**3)
        rho0 = gaussian_density_matrix(G128, 0.5, 0.0, 2.0, 2.0)
        cfg = LindbladConfig(dt=5e-4, n_steps=60)
        res = lindblad_run(rho0, DESK, pot, cfg, record_every=10,
                           check_every=30, wigner_every=10)
        coeffs = [0.0, 0.0, 0.0, 0.0, lam]
        full = wigner_eom_residual(res.snapshots, DESK, pot, poly_coeffs=coeffs)
        ablated = wigner_eom_residual(res.snapshots, DESK, pot,
                                      poly_coeffs=coeffs, include_hbar2=False)
        assert full < 2e-3
        assert ablated > 10 * full

    def test_nonlinear_requires_coeffs(self):
        pot = Potential.nonlinear(lambda q, t: np.cosh(q), lambda q, t: np.sinh(q))
        rho0 = gaussian_density_matrix(G128, 0.0, 0.0, 1.0, 1.0)
        cfg = LindbladConfig(dt=5e-4, n_steps=20)
        res = lindblad_run(rho0, DESK, pot, cfg, record_every=10,
                           check_every=20, wigner_every=10)
        with pytest.raises(ValueError, match="unsupported"):
            wigner_eom_residual(res.snapshots, DESK, pot)
        with pytest.raises(ValueError, match="unsupported"):
            wigner_eom_residual(res.snapshots, DESK, pot,
                                poly_coeffs=[0.0, 0.0, 1.0])


class TestCollapseLimit:
    def test_suppression_coefficient_approaches_target(self):
        # Gaussian initial data admits a closed-form fit bias from the
        # kinetic shear: (vp tau + kappa tau^2/2)^2 over
        # (2 vq + 2 vp tau^2 + 2 kappa tau^3/3), relative to kappa tau/2.
        # It falls like 1/gamma at fixed gamma/T, so the fitted coefficient
        # converges onto kappa tau / 2 from below.
        grid = Grid(-10.24, 10.24, 512)
        vq, vp = 12.5, 1.0
        rho0 = gaussian_density_matrix(grid, 0.0, 0.0, vq, vp)
        seq = [PhysicalParams(m=1.0, gamma=g, T=20.0 * g) for g in (4.0, 8.0)]
        rep = von_neumann_limit_check(rho0, seq)
        for prm, rel in zip(seq, rep.rel_errors):
            tau = 1.0 / prm.gamma
            bias = (vp * tau + 0.5 * prm.kappa * tau**2) ** 2 / (
                2 * vq + 2 * vp * tau**2 + 2 * prm.kappa * tau**3 / 3
            )
            assert rel == pytest.approx(bias / (0.5 * prm.kappa * tau), abs=0.01)
        assert rep.rel_errors[1] < rep.rel_errors[0]
        assert rep.rel_errors[1] < 0.1
        assert all(f < t for f, t in zip(rep.fitted, rep.targets))
        assert max(rep.mean_q_drift) < 0.01
        assert max(rep.diag_change) < 0.15

    def test_gamma_over_t_must_be_fixed(self):
        rho0 = gaussian_density_matrix(Grid(-10.24, 10.24, 512), 0.0, 0.0,
                                       12.5, 1.0)
        seq = [PhysicalParams(m=1.0, gamma=4.0, T=80.0),
               PhysicalParams(m=1.0, gamma=8.0, T=80.0)]
        with pytest.raises(ValueError, match="gamma/T"):
            von_neumann_limit_check(rho0, seq)
