import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contmeas.core import (
    DensityMatrix,
    Grid,
    NoiseSource,
    PhysicalParams,
    Potential,
    WaveFunction,
    eval_force,
    load_config,
    params_from_config,
    pure_density,
    read_grid_dump,
    validate_regime,
    wavefunction_moments,
    wiener_increments,
    write_grid_dump,
)


def gaussian_packet(grid, q0, p0, sq2, spq2):
    # correlated Gaussian: Var q = sq2, Cov(q,p) = spq2, Var p = (hb^2/4 + spq2^2)/sq2
    hb = grid.hbar
    x = grid.q
    psi = (2 * np.pi * sq2) ** -0.25 * np.exp(
        -(x - q0) ** 2 * (1 - 2j * spq2 / hb) / (4 * sq2) + 1j * p0 * (x - q0) / hb
    )
    return WaveFunction(grid, psi)


class TestParams:
    def test_kappa_desk(self):
        p = PhysicalParams(m=1, gamma=0.5, T=10, hbar=1)
        assert p.kappa == 10.0

    @given(
        m=st.floats(0.01, 100), g=st.floats(0.001, 100),
        T=st.floats(0.01, 1000), hb=st.floats(0.01, 10),
    )
    @settings(max_examples=50, deadline=None)
    def test_kappa_identity(self, m, g, T, hb):
        p = PhysicalParams(m=m, gamma=g, T=T, hbar=hb)
        assert p.kappa == pytest.approx(2 * m * g * T / hb**2, rel=1e-14)
        # hbar a b = gamma / 2
        assert p.hbar * p.meas_a * p.meas_b == pytest.approx(g / 2, rel=1e-12)

    def test_positivity(self):
        with pytest.raises(ValueError):
            PhysicalParams(m=-1)
        with pytest.raises(ValueError):
            PhysicalParams(T=0)
        PhysicalParams(gamma=0.0)  # decoupled limit is legal


class TestRegime:
    def test_desk_warn(self):
        p = PhysicalParams(hbar=1, T=10, kB=1, Omega=100, tau=1)
        with pytest.warns(UserWarning):
            rep = validate_regime(p)
        assert rep.ratios == pytest.approx((10, 0.01, 0.1))
        assert rep.warn_flags == (True, False, False)  # 0.1 is not > 0.1

    def test_pass_case(self):
        p = PhysicalParams(hbar=1, T=1000, kB=1, Omega=100, tau=1)
        rep = validate_regime(p, emit=False)
        assert rep.ratios == pytest.approx((0.1, 0.01, 0.001))
        assert rep.ok

    def test_hbar_to_zero(self):
        p = PhysicalParams(hbar=1e-6, T=10, Omega=100, tau=1)
        assert validate_regime(p, emit=False).ok


class TestPotential:
    def test_linear_force(self):
        pot = Potential.linear(v0=0, v1=0, omega0=1, m=1)
        assert eval_force(pot, 2.0) == 2.0
        pot = Potential.linear(v1=3.0)
        assert eval_force(pot, -17.3) == 3.0

    def test_time_dependent_coeffs(self):
        pot = Potential.linear(v0=lambda t: t, v1=lambda t: 2 * t)
        assert pot.value(1.0, t=3.0) == 3.0 + 6.0
        assert eval_force(pot, 5.0, t=3.0) == 6.0

    def test_nonlinear_quartic(self):
        pot = Potential.nonlinear(lambda q, t: q**4, lambda q, t: 4 * q**3)
        assert eval_force(pot, 1.5) == pytest.approx(13.5)

    def test_nonlinear_bad_derivative(self):
        with pytest.raises(ValueError):
            Potential.nonlinear(lambda q, t: q**4, lambda q, t: 3 * q**3)


class TestGrid:
    def test_conjugate_spacing(self):
        g = Grid(-8.0, 8.0, 256, hbar=0.5)
        assert g.dp * g.n_q * g.dq == pytest.approx(2 * np.pi * 0.5, rel=1e-14)

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(-1, 1, 48)
        with pytest.raises(ValueError):
            Grid(-1, 1, 8)
        with pytest.raises(ValueError):
            Grid(1, -1, 32)

    @given(k=st.integers(4, 10))
    @settings(max_examples=7, deadline=None)
    def test_axes_shapes(self, k):
        g = Grid(-5, 5, 2**k)
        assert len(g.q) == len(g.p) == g.n_q
        assert g.p[g.n_q // 2] == 0.0


class TestWaveFunction:
    def test_moments_against_gaussian(self):
        g = Grid(-10, 10, 512)
        sq2, spq2 = 0.3, 0.25
        psi = gaussian_packet(g, 0.7, -1.1, sq2, spq2)
        assert psi.norm2() == pytest.approx(1.0, abs=1e-9)
        mq, mp, vq, cpq, vp = wavefunction_moments(psi)
        assert mq == pytest.approx(0.7, abs=1e-8)
        assert mp == pytest.approx(-1.1, abs=1e-8)
        assert vq == pytest.approx(sq2, rel=1e-8)
        assert cpq == pytest.approx(spq2, rel=1e-7)
        assert vp == pytest.approx((0.25 + spq2**2) / sq2, rel=1e-7)

    def test_norm_check(self):
        g = Grid(-10, 10, 64)
        psi = WaveFunction(g, np.ones(64, complex))
        with pytest.raises(ValueError):
            psi.check()
        psi.normalized().check()


class TestDensityMatrix:
    def test_pure_state(self):
        g = Grid(-10, 10, 128)
        rho = pure_density(gaussian_packet(g, 0.0, 0.0, 0.2, 0.1))
        rho.check()
        assert rho.trace() == pytest.approx(1.0, abs=1e-9)
        assert rho.min_eigenvalue() >= -1e-12
        # largest eigenvalue 1 for a pure state
        ev = np.linalg.eigvalsh(0.5 * (rho.values + rho.values.conj().T) * g.dq)
        assert ev[-1] == pytest.approx(1.0, abs=1e-9)

    def test_check_rejects_bad_trace(self):
        g = Grid(-10, 10, 128)
        rho = pure_density(gaussian_packet(g, 0.0, 0.0, 0.2, 0.1))
        rho.values *= 1.01
        with pytest.raises(ValueError):
            rho.check()


class TestNoise:
    def test_determinism(self):
        a = wiener_increments(NoiseSource(42, 7), 1000, 0.01)
        b = wiener_increments(NoiseSource(42, 7), 1000, 0.01)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = wiener_increments(NoiseSource(42, 0), 10**5, 0.01)
        b = wiener_increments(NoiseSource(42, 1), 10**5, 0.01)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.01

    def test_moments(self):
        dw = wiener_increments(NoiseSource(3), 10**6, 0.01)
        assert abs(dw.mean()) < 3e-4  # 3 sigma CLT band
        assert dw.var() == pytest.approx(0.01, rel=0.01)

    def test_empty_and_bad_dt(self):
        src = NoiseSource(1)
        assert wiener_increments(src, 0, 0.1).size == 0
        with pytest.raises(ValueError):
            wiener_increments(src, 5, -0.1)

    def test_counter_advances(self):
        src = NoiseSource(5)
        c0 = src.counter
        src.normal(100)
        assert src.counter > c0


class TestIO:
    def test_dump_roundtrip_real(self, tmp_path):
        g = Grid(-4, 4, 32)
        vals = np.sin(g.q)
        path = tmp_path / "w.bin"
        write_grid_dump(path, vals, g)
        assert path.stat().st_size == 32 + 32 * 8
        back, n_q, dq, q_min = read_grid_dump(path)
        assert n_q == 32 and dq == g.dq and q_min == -4.0
        np.testing.assert_array_equal(back, vals)

    def test_dump_roundtrip_complex(self, tmp_path):
        g = Grid(-4, 4, 64)
        vals = np.exp(1j * g.q)[None, :] * np.array([1.0, 2.0])[:, None]
        path = tmp_path / "psi.bin"
        write_grid_dump(path, vals, g)
        back, n_q, _, _ = read_grid_dump(path)
        assert back.shape == (2, 64)
        np.testing.assert_array_equal(back, vals)

    def test_config_json_toml(self, tmp_path):
        j = tmp_path / "c.json"
        j.write_text('{"params": {"m": 2.0, "gamma": 0.25, "T": 5.0}}')
        p = params_from_config(load_config(j))
        assert (p.m, p.gamma, p.T) == (2.0, 0.25, 5.0)
        t = tmp_path / "c.toml"
        t.write_text("[params]\nm = 2.0\ngamma = 0.25\nT = 5.0\n")
        p2 = params_from_config(load_config(t))
        assert p2 == p
