"""Shared model and modal-table fixtures.

Tables are session-scoped because continuation is the expensive step; the
fixtures mirror the example systems used throughout (Duffing, van der Pol,
cubic/friction/unilateral two-mass chains, reduced cantilever with Dahl
friction).
"""

import numpy as np
import pytest

from slowmodes import (
    CoulombTanh,
    CubicSpring,
    DahlFriction,
    MechanicalModel,
    NonlinearElement,
    UnilateralSpring,
    VanDerPolDamper,
)
from slowmodes.hbm import HarmonicConfig
from slowmodes.nma import NmaConfig, continue_modal_table, log_grid
from slowmodes.reference import reduced_beam_with_friction


TWO_MASS_M = np.diag([0.02, 1.0])
TWO_MASS_K = np.array([[40.0, -40.0], [-40.0, 640.0]])


def duffing_model(kappa=0.25, damping=0.1):
    """1-DOF unit oscillator with a cubic spring; damping enters as extra_damping."""
    return MechanicalModel(
        mass=[[1.0]], stiffness=[[1.0]],
        elements=[NonlinearElement(law=CubicSpring(coefficient=kappa), input_dof=0)],
        extra_damping=None if damping == 0.0 else [[damping]],
    )


def vdp_model(alpha=0.5, beta=2.0):
    return MechanicalModel(
        mass=[[1.0]], stiffness=[[1.0]],
        elements=[NonlinearElement(
            law=VanDerPolDamper(linear_rate=alpha, cubic_rate=beta), input_dof=0)],
    )


def cubic_chain_model(kappa=0.5):
    """Two unit masses, three unit springs, cubic element on the first mass."""
    k = np.array([[2.0, -1.0], [-1.0, 2.0]])
    return MechanicalModel(
        mass=np.eye(2), stiffness=k,
        elements=[NonlinearElement(law=CubicSpring(coefficient=kappa), input_dof=0)],
    )


def friction_chain_model(limit_force=1.0, smoothing=0.01):
    return MechanicalModel(
        mass=TWO_MASS_M, stiffness=TWO_MASS_K,
        elements=[NonlinearElement(
            law=CoulombTanh(limit_force=limit_force, smoothing=smoothing),
            input_dof=0)],
    )


def unilateral_chain_model(stiffness=70.0, preload=1.0 / 70.0):
    return MechanicalModel(
        mass=TWO_MASS_M, stiffness=TWO_MASS_K,
        elements=[NonlinearElement(
            law=UnilateralSpring(stiffness=stiffness, preload=preload),
            input_dof=0)],
    )


@pytest.fixture(scope="session")
def duffing_table():
    cfg = NmaConfig(harmonic=HarmonicConfig(7),
                    amplitude_grid=log_grid(1e-4, 2.0, 25))
    return continue_modal_table(duffing_model(damping=0.0), cfg)


@pytest.fixture(scope="session")
def vdp_table():
    cfg = NmaConfig(harmonic=HarmonicConfig(7),
                    amplitude_grid=log_grid(1e-2, 2.5, 31))
    return continue_modal_table(vdp_model(), cfg)


@pytest.fixture(scope="session")
def cubic_chain_table():
    cfg = NmaConfig(harmonic=HarmonicConfig(7),
                    amplitude_grid=log_grid(1e-4, 3.0, 29))
    return continue_modal_table(cubic_chain_model(), cfg)


@pytest.fixture(scope="session")
def friction_table():
    cfg = NmaConfig(harmonic=HarmonicConfig(7),
                    amplitude_grid=log_grid(1e-3, 50.0, 41))
    return continue_modal_table(friction_chain_model(), cfg)


@pytest.fixture(scope="session")
def unilateral_table():
    cfg = NmaConfig(harmonic=HarmonicConfig(7),
                    amplitude_grid=log_grid(1e-6, 1.2e-3, 31), mode_index=1)
    return continue_modal_table(unilateral_chain_model(), cfg)


@pytest.fixture(scope="session")
def beam_assembly():
    return reduced_beam_with_friction()


@pytest.fixture(scope="session")
def beam_table(beam_assembly):
    model, _ = beam_assembly
    cfg = NmaConfig(harmonic=HarmonicConfig(5),
                    amplitude_grid=log_grid(1e-6, 0.05, 33))
    return continue_modal_table(model, cfg)
