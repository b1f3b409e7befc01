"""Element force laws, force assembly, linearization and model files."""

import json

import numpy as np
import pytest
import scipy.linalg as sla

from slowmodes import (
    ConfigError,
    ConstantFrequency,
    CoulombTanh,
    CubicSpring,
    DahlFriction,
    ForcingSpec,
    LinearSweep,
    MechanicalModel,
    NonlinearElement,
    UnilateralSpring,
    eval_nonlinear_force,
    load_model,
    save_model,
)
from slowmodes.model import model_to_dict

from conftest import cubic_chain_model, duffing_model, friction_chain_model


class TestElementForces:
    def test_cubic(self):
        el = NonlinearElement(law=CubicSpring(coefficient=0.5), input_dof=0)
        force, aux = eval_nonlinear_force(el, 2.0, 0.0)
        assert force == pytest.approx(4.0)
        assert aux is None

    def test_coulomb_zero_velocity(self):
        el = NonlinearElement(law=CoulombTanh(limit_force=3.0, smoothing=0.1),
                              input_dof=0)
        force, _ = eval_nonlinear_force(el, 1.0, 0.0)
        assert force == 0.0

    def test_unilateral_liftoff(self):
        el = NonlinearElement(
            law=UnilateralSpring(stiffness=70.0, preload=1.0 / 70.0), input_dof=0)
        force, _ = eval_nonlinear_force(el, -0.01, 0.0)
        assert force == pytest.approx(-1.0 / 70.0)

    def test_unilateral_contact_branch(self):
        law = UnilateralSpring(stiffness=70.0, preload=1.0 / 70.0)
        el = NonlinearElement(law=law, input_dof=0)
        force, _ = eval_nonlinear_force(el, 1e-4, 0.0)
        assert force == pytest.approx(70.0 * 1e-4)

    def test_unilateral_continuous_at_liftoff(self):
        law = UnilateralSpring(stiffness=70.0, preload=1.0 / 70.0)
        u_c = -law.preload / law.stiffness
        left = law.force(u_c - 1e-12, 0.0)
        right = law.force(u_c + 1e-12, 0.0)
        assert left == pytest.approx(right, abs=1e-9)

    def test_dahl_rate(self):
        el = NonlinearElement(
            law=DahlFriction(stiffness=1e6, limit_force=100.0, shape=1.0),
            input_dof=0)
        force, rate = eval_nonlinear_force(el, 0.0, 0.001, state=0.0)
        assert force == 0.0
        assert rate == pytest.approx(1000.0)

    def test_dahl_requires_state(self):
        el = NonlinearElement(
            law=DahlFriction(stiffness=1e6, limit_force=100.0), input_dof=0)
        with pytest.raises(ConfigError):
            eval_nonlinear_force(el, 0.0, 0.1)

    def test_dahl_invalid_state(self):
        el = NonlinearElement(
            law=DahlFriction(stiffness=1e6, limit_force=100.0), input_dof=0)
        with pytest.raises(ConfigError):
            eval_nonlinear_force(el, 0.0, 0.1, state=150.0)

    def test_coulomb_odd_and_bounded(self):
        law = CoulombTanh(limit_force=2.5, smoothing=0.05)
        v = np.linspace(-50.0, 50.0, 401)
        f = law.force(0.0, v)
        np.testing.assert_allclose(f, -law.force(0.0, -v), atol=1e-14)
        assert np.all(np.abs(f) <= 2.5)


class TestAssembly:
    def test_linear_chain_row(self):
        model = cubic_chain_model(kappa=0.0)
        f = model.assemble_force_vector(np.array([1.0, 0.0]), np.zeros(2))
        np.testing.assert_allclose(f, [2.0, -1.0])

    def test_cubic_adds_to_first_dof(self):
        model = cubic_chain_model(kappa=0.5)
        f = model.assemble_force_vector(np.array([1.0, 0.0]), np.zeros(2))
        np.testing.assert_allclose(f, [2.5, -1.0])

    def test_equilibrium_is_zero(self):
        model = MechanicalModel(
            mass=np.eye(2), stiffness=np.array([[2.0, -1.0], [-1.0, 2.0]]),
            elements=[
                NonlinearElement(law=CubicSpring(coefficient=1.0), input_dof=0),
                NonlinearElement(law=CoulombTanh(limit_force=1.0, smoothing=0.1),
                                 input_dof=1),
                NonlinearElement(
                    law=DahlFriction(stiffness=1e4, limit_force=5.0), input_dof=0),
            ],
        )
        f = model.assemble_force_vector(np.zeros(2), np.zeros(2),
                                        dahl_states=[0.0])
        np.testing.assert_allclose(f, 0.0, atol=1e-15)

    def test_cubic_homogeneity_degree_three(self):
        model = MechanicalModel(
            mass=np.eye(2), stiffness=np.zeros((2, 2)),
            elements=[NonlinearElement(law=CubicSpring(coefficient=0.7),
                                       input_dof=1)],
        )
        rng = np.random.default_rng(7)
        for _ in range(20):
            u = rng.normal(size=2)
            s = rng.uniform(0.1, 3.0)
            f1 = model.assemble_force_vector(s * u, np.zeros(2))
            f0 = model.assemble_force_vector(u, np.zeros(2))
            np.testing.assert_allclose(f1, s**3 * f0, rtol=1e-12, atol=1e-14)

    def test_force_map_scatters(self):
        model = MechanicalModel(
            mass=np.eye(2), stiffness=np.zeros((2, 2)),
            elements=[NonlinearElement(law=CubicSpring(coefficient=1.0),
                                       input_dof=0, force_map=(1.0, -1.0))],
        )
        f = model.assemble_force_vector(np.array([2.0, 0.0]), np.zeros(2))
        np.testing.assert_allclose(f, [8.0, -8.0])


class TestLinearModes:
    def test_unit_chain(self):
        model = cubic_chain_model(kappa=0.0)
        omega, phi = model.linear_modes()
        np.testing.assert_allclose(omega, [1.0, np.sqrt(3.0)], rtol=1e-12)
        np.testing.assert_allclose(phi.T @ model.mass @ phi, np.eye(2),
                                   atol=1e-10)
        np.testing.assert_allclose(
            model.base_stiffness @ phi,
            model.mass @ phi @ np.diag(omega**2), atol=1e-8)

    def test_duffing_linear_frequency(self):
        omega, _ = duffing_model().linear_modes()
        assert omega[0] == pytest.approx(1.0, rel=1e-12)

    def test_friction_stuck_penalty(self):
        # oracle: dense eigensolver on the penalty-stiffened system
        model = friction_chain_model()
        k_pen = model.base_stiffness.copy()
        k_pen[0, 0] += 1.0 / 0.01
        w2, _ = sla.eigh(k_pen, model.mass)
        omega, _ = model.linear_modes()
        np.testing.assert_allclose(omega, np.sqrt(w2), rtol=1e-12)

    def test_rigid_body_mode_reports_zero(self):
        model = MechanicalModel(
            mass=np.eye(2),
            stiffness=np.array([[1.0, -1.0], [-1.0, 1.0]]),
        )
        omega, _ = model.linear_modes()
        assert omega[0] == pytest.approx(0.0, abs=1e-7)
        assert omega[1] == pytest.approx(np.sqrt(2.0), rel=1e-12)

    def test_linearized_operators_velocity_laws(self):
        model = friction_chain_model()
        k0, c0 = model.linearized_operators()
        np.testing.assert_allclose(k0, model.base_stiffness)
        assert c0[0, 0] == pytest.approx(100.0)


class TestDahlBoundedness:
    def test_state_stays_within_limit_under_periodic_velocity(self):
        from scipy.integrate import solve_ivp

        law = DahlFriction(stiffness=1e5, limit_force=10.0, shape=1.0)
        v = lambda t: 0.3 * np.cos(2.0 * t) + 0.1 * np.sin(6.0 * t)
        sol = solve_ivp(lambda t, y: [law.force_rate(y[0], v(t))], (0.0, 30.0),
                        [5.0], rtol=1e-9, atol=1e-11, dense_output=True)
        assert np.max(np.abs(sol.y[0])) <= 10.0 * (1.0 + 1e-9)


class TestValidation:
    def test_mass_must_be_positive_definite(self):
        with pytest.raises(ConfigError):
            MechanicalModel(mass=[[1.0, 2.0], [2.0, 1.0]],
                            stiffness=np.eye(2))

    def test_asymmetric_stiffness_rejected(self):
        with pytest.raises(ConfigError):
            MechanicalModel(mass=np.eye(2),
                            stiffness=[[1.0, 0.5], [0.2, 1.0]])

    def test_element_dof_range(self):
        with pytest.raises(ConfigError):
            MechanicalModel(
                mass=np.eye(2), stiffness=np.eye(2),
                elements=[NonlinearElement(law=CubicSpring(coefficient=1.0),
                                           input_dof=2)],
            )

    def test_parameter_signs(self):
        with pytest.raises(ConfigError):
            CoulombTanh(limit_force=-1.0, smoothing=0.1).validate()
        with pytest.raises(ConfigError):
            DahlFriction(stiffness=0.0, limit_force=1.0).validate()
        with pytest.raises(ConfigError):
            UnilateralSpring(stiffness=1.0, preload=-0.5).validate()

    def test_forcing_frequency_positive(self):
        with pytest.raises(ConfigError):
            MechanicalModel(
                mass=[[1.0]], stiffness=[[1.0]],
                forcing=ForcingSpec(amplitude=(1.0,),
                                    program=ConstantFrequency(frequency=-2.0)),
            )

    def test_sweep_span_validation(self):
        program = LinearSweep(start=10.0, rate=-1.0)
        program.validate(t_end=5.0)
        with pytest.raises(ConfigError):
            program.validate(t_end=20.0)


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        model = friction_chain_model()
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_allclose(loaded.mass, model.mass)
        np.testing.assert_allclose(loaded.base_stiffness, model.base_stiffness)
        assert loaded.surrogate_hash() == model.surrogate_hash()

    def test_proportional_matrix(self, tmp_path):
        data = {
            "dofs": 1,
            "mass": [[2.0]],
            "stiffness": [[8.0]],
            "extra_damping": {"proportional": {"matrix": "mass", "factor": 0.05}},
        }
        model = load_model(data)
        np.testing.assert_allclose(model.extra_damping, [[0.1]])

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            load_model({"dofs": 1, "mass": [[1.0]], "stiffness": [[1.0]],
                        "bogus": 1})
        with pytest.raises(ConfigError):
            load_model({"dofs": 1, "mass": [[1.0]], "stiffness": [[1.0]],
                        "elements": [{"kind": "cubic_spring", "dof": 0,
                                      "coefficient": 1.0, "extra": 2}]})

    def test_forcing_round_trip(self, tmp_path):
        model = MechanicalModel(
            mass=[[1.0]], stiffness=[[1.0]],
            forcing=ForcingSpec(amplitude=(0.3,),
                                program=LinearSweep(start=0.0, rate=0.025)),
        )
        path = tmp_path / "forced.json"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded.forcing.program, LinearSweep)
        assert loaded.forcing.program.rate == pytest.approx(0.025)

    def test_hash_separates_surrogate_from_rom_parameters(self):
        base = model_to_dict(duffing_model(damping=0.0))
        damped = model_to_dict(duffing_model(damping=0.1))
        assert load_model(base).surrogate_hash() == \
            load_model(damped).surrogate_hash()
        assert load_model(base).full_hash() != load_model(damped).full_hash()
