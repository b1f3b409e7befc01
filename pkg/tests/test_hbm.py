"""Fourier machinery and AFT force coefficients.

Expected values come from closed-form trigonometric expansions
(cos^3 = (3 cos + cos 3)/4) and, for the friction macroslip check, from a
dense trapezoid quadrature of the inner product that is independent of the
FFT path.
"""

import numpy as np
import pytest

from slowmodes import (
    AliasingError,
    CoulombTanh,
    CubicSpring,
    DahlFriction,
    MechanicalModel,
    NonlinearElement,
    UnilateralSpring,
)
from slowmodes.errors import DahlPeriodicityError
from slowmodes.hbm import (
    HarmonicConfig,
    HarmonicSet,
    aft_force_coefficients,
    dahl_periodic_samples,
    default_sample_count,
    fourier_coefficient,
    harmonic_coefficients,
    synthesize_periodic,
)


def one_dof_model(*laws):
    return MechanicalModel(
        mass=[[1.0]], stiffness=[[1.0]],
        elements=[NonlinearElement(law=law, input_dof=0) for law in laws],
    )


class TestHarmonicConfig:
    def test_default_sample_rule(self):
        assert default_sample_count(1) == 64
        assert default_sample_count(7) == 64
        assert default_sample_count(15) == 128

    def test_sample_count_validation(self):
        with pytest.raises(Exception):
            HarmonicConfig(3, 15)          # not a power of two
        with pytest.raises(Exception):
            HarmonicConfig(7, 16)          # below 4*(Nh+1)

    def test_static_harmonic_must_be_real(self):
        with pytest.raises(Exception):
            HarmonicSet(np.array([[1.0 + 1.0j], [1.0 + 0.0j]]))


class TestSynthesis:
    def test_single_cosine(self):
        cfg = HarmonicConfig(1, 64)
        h = HarmonicSet(np.array([[0.0], [1.0]], dtype=complex))
        u, v = synthesize_periodic(h, 1.0, 1.0, cfg)
        tau = cfg.sample_phases
        np.testing.assert_allclose(u[:, 0], np.cos(tau), atol=1e-14)
        np.testing.assert_allclose(v[:, 0], -np.sin(tau), atol=1e-14)

    def test_zero_amplitude(self):
        cfg = HarmonicConfig(3)
        h = HarmonicSet(np.ones((4, 2), dtype=complex))
        u, v = synthesize_periodic(h, 0.0, 2.0, cfg)
        assert not np.any(u) and not np.any(v)

    def test_static_offset(self):
        cfg = HarmonicConfig(1, 64)
        h = HarmonicSet(np.array([[0.7], [0.0]], dtype=complex))
        u, v = synthesize_periodic(h, 2.0, 3.0, cfg)
        np.testing.assert_allclose(u, 1.4, atol=1e-14)
        np.testing.assert_allclose(v, 0.0, atol=1e-14)


class TestFourierCoefficient:
    def test_cosine_gives_one(self):
        tau = 2.0 * np.pi * np.arange(64) / 64
        assert fourier_coefficient(np.cos(tau), 1) == pytest.approx(1.0 + 0.0j)

    def test_cos_cubed_expansion(self):
        tau = 2.0 * np.pi * np.arange(64) / 64
        samples = np.cos(tau) ** 3
        assert fourier_coefficient(samples, 1) == pytest.approx(0.75, abs=1e-13)
        assert fourier_coefficient(samples, 3) == pytest.approx(0.25, abs=1e-13)

    def test_constant(self):
        assert fourier_coefficient(np.full(64, 5.0), 0) == pytest.approx(5.0)

    def test_sine_sign_convention(self):
        tau = 2.0 * np.pi * np.arange(64) / 64
        c = fourier_coefficient(np.sin(tau), 1)
        # Re(c e^{i tau}) with c = i reproduces -sin; sin itself carries c = -i
        assert c == pytest.approx(-1.0j, abs=1e-13)

    def test_aliasing_guard(self):
        with pytest.raises(AliasingError):
            fourier_coefficient(np.zeros(64), 32)

    def test_matches_fft_path(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(128, 2))
        spec = harmonic_coefficients(samples, 9)
        for n in range(10):
            for d in range(2):
                assert spec[n, d] == pytest.approx(
                    fourier_coefficient(samples[:, d], n), abs=1e-12)


class TestAftCubic:
    def test_closed_form_first_and_third(self):
        # K u + kappa u^3 with u = a cos tau: F1 = a + 3/4 kappa a^3, F3 = kappa a^3/4
        kappa, a = 0.3, 0.8
        model = one_dof_model(CubicSpring(coefficient=kappa))
        cfg = HarmonicConfig(3, 64)
        h = HarmonicSet(np.array([[0.0], [1.0], [0.0], [0.0]], dtype=complex))
        forces = aft_force_coefficients(model, h, a, 1.3, cfg)
        assert forces[1, 0] == pytest.approx(a + 0.75 * kappa * a**3, abs=1e-12)
        assert forces[3, 0] == pytest.approx(0.25 * kappa * a**3, abs=1e-12)
        assert forces[0, 0] == pytest.approx(0.0, abs=1e-13)
        assert forces[2, 0] == pytest.approx(0.0, abs=1e-13)

    def test_rest_gives_zero(self):
        model = MechanicalModel(
            mass=np.eye(2), stiffness=np.eye(2),
            elements=[
                NonlinearElement(law=CubicSpring(coefficient=1.0), input_dof=0),
                NonlinearElement(law=CoulombTanh(limit_force=1.0, smoothing=0.1),
                                 input_dof=1),
                NonlinearElement(law=UnilateralSpring(stiffness=2.0, preload=0.0),
                                 input_dof=0),
                NonlinearElement(law=DahlFriction(stiffness=10.0, limit_force=1.0),
                                 input_dof=1),
            ],
        )
        cfg = HarmonicConfig(3, 64)
        h = HarmonicSet(np.zeros((4, 2), dtype=complex))
        forces = aft_force_coefficients(model, h, 0.0, 1.0, cfg)
        np.testing.assert_allclose(forces, 0.0, atol=1e-14)

    def test_sample_doubling_agrees(self):
        kappa = 0.4
        model = one_dof_model(CubicSpring(coefficient=kappa))
        h = HarmonicSet(np.array([[0.0], [1.0], [0.1 + 0.05j], [0.02]],
                                 dtype=complex))
        f64 = aft_force_coefficients(model, h, 0.9, 1.0, HarmonicConfig(3, 64))
        f128 = aft_force_coefficients(model, h, 0.9, 1.0, HarmonicConfig(3, 128))
        np.testing.assert_allclose(f64, f128, atol=1e-10)

    def test_odd_nonlinearity_has_no_even_harmonics(self):
        model = one_dof_model(CubicSpring(coefficient=0.5),
                              CoulombTanh(limit_force=1.0, smoothing=0.05))
        cfg = HarmonicConfig(6, 64)
        psi = np.zeros((7, 1), dtype=complex)
        psi[1, 0] = 1.0
        psi[3, 0] = 0.1 - 0.04j
        psi[5, 0] = 0.02j
        forces = aft_force_coefficients(model, HarmonicSet(psi), 0.7, 1.1, cfg)
        np.testing.assert_allclose(forces[0::2], 0.0, atol=1e-12)

    def test_conservative_elements_do_no_work_on_real_shapes(self):
        model = one_dof_model(CubicSpring(coefficient=0.5),
                              UnilateralSpring(stiffness=3.0, preload=0.2))
        cfg = HarmonicConfig(5, 128)
        psi = np.zeros((6, 1), dtype=complex)
        psi[0, 0] = -0.05
        psi[1, 0] = 1.0
        psi[2, 0] = 0.03
        psi[3, 0] = 0.08
        forces = aft_force_coefficients(model, HarmonicSet(psi), 0.6, 1.0, cfg)
        work = np.imag(np.conj(psi[1]) @ forces[1])
        assert abs(work) < 1e-10


class TestAftCoulombMacroslip:
    def test_macroslip_fundamental_vs_quadrature(self):
        # strongly slipping: a*omega >> smoothing; near-square force wave with
        # Im(F1) -> 4 R / pi
        r_lim, eps = 2.0, 0.01
        model = one_dof_model(CoulombTanh(limit_force=r_lim, smoothing=eps))
        a, omega = 1.0, 1.0
        cfg = HarmonicConfig(7, 1024)
        psi = np.zeros((8, 1), dtype=complex)
        psi[1, 0] = 1.0
        forces = aft_force_coefficients(model, HarmonicSet(psi), a, omega, cfg)
        f1_element = forces[1, 0] - a * 1.0   # subtract the K u part

        # independent oracle: 1e4-point trapezoid quadrature of the inner product
        tau = np.linspace(0.0, 2.0 * np.pi, 10_001)
        v = -a * omega * np.sin(tau)
        f = r_lim * np.tanh(v / eps)
        oracle = 2.0 * np.trapezoid(f * np.exp(-1j * tau), tau) / (2.0 * np.pi)
        assert f1_element.real == pytest.approx(oracle.real, abs=2e-6)
        assert f1_element.imag == pytest.approx(oracle.imag, rel=1e-6)
        assert f1_element.imag == pytest.approx(4.0 * r_lim / np.pi, rel=2e-3)


class TestParseval:
    def test_round_trip_recovers_harmonics(self):
        rng = np.random.default_rng(11)
        nh, n_dof, a = 5, 3, 1.7
        psi = rng.normal(size=(nh + 1, n_dof)) + 1j * rng.normal(size=(nh + 1, n_dof))
        psi[0] = psi[0].real
        cfg = HarmonicConfig(nh, 64)
        h = HarmonicSet(psi)
        u, _ = synthesize_periodic(h, a, 1.0, cfg)
        spec = harmonic_coefficients(u, nh)
        np.testing.assert_allclose(spec, a * h.coefficients, atol=1e-12)


class TestDahlAft:
    def test_small_amplitude_is_elastic(self):
        # microscopic motion: f ~ stiffness * u, negligible hysteresis
        law = DahlFriction(stiffness=1e6, limit_force=100.0, shape=1.0)
        model = MechanicalModel(
            mass=[[1.0]], stiffness=[[0.0]],
            elements=[NonlinearElement(law=law, input_dof=0)],
        )
        cfg = HarmonicConfig(3, 64)
        h = HarmonicSet(np.array([[0.0], [1.0], [0.0], [0.0]], dtype=complex))
        a = 1e-9
        forces = aft_force_coefficients(model, h, a, 500.0, cfg)
        assert forces[1, 0].real == pytest.approx(1e6 * a, rel=1e-5)
        assert abs(forces[1, 0].imag) < 0.05 * abs(forces[1, 0].real)

    def test_strong_slip_saturates(self):
        law = DahlFriction(stiffness=1e6, limit_force=100.0, shape=1.0)
        vel = np.array([0.0, 1j * 500.0 * 0.01])   # tip velocity harmonic
        samples = dahl_periodic_samples(law, vel, 500.0, 64)
        assert np.max(np.abs(samples)) <= 100.0
        assert np.max(np.abs(samples)) > 95.0

    def test_periodicity_of_fixed_point(self):
        law = DahlFriction(stiffness=1e5, limit_force=10.0, shape=1.0)
        vel = np.array([0.0, 0.2j, 0.0, 0.05j])
        samples = dahl_periodic_samples(law, vel, 2.0, 128)
        # re-march one period from the fixed-point start: ends where it began
        from scipy.integrate import solve_ivp

        orders = np.arange(len(vel))
        def v_of_t(t):
            return float(np.real(np.exp(1j * orders * 2.0 * t) @ vel))
        sol = solve_ivp(lambda t, y: [law.force_rate(y[0], v_of_t(t))],
                        (0.0, np.pi), [samples[0]], rtol=1e-10, atol=1e-12)
        assert sol.y[0, -1] == pytest.approx(samples[0], abs=1e-5 * law.limit_force)

    def test_nonunit_shape_marches(self):
        law = DahlFriction(stiffness=1e5, limit_force=10.0, shape=2.0)
        vel = np.array([0.0, 0.3j])
        samples = dahl_periodic_samples(law, vel, 2.0, 64)
        assert np.max(np.abs(samples)) <= 10.0

    def test_march_reports_nonconvergence(self):
        # pathological: a crawling drift with a soft hysteresis never settles
        # within the cycle cap
        law = DahlFriction(stiffness=1e-6, limit_force=10.0, shape=2.0)
        vel = np.array([1e-4 + 0.0j, 1e-5j])
        with pytest.raises(DahlPeriodicityError):
            dahl_periodic_samples(law, vel, 2.0, 64, max_cycles=2,
                                  settle_rtol=1e-12)
