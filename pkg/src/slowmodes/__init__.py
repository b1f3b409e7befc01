"""Amplitude-dependent nonlinear modes and slow-flow reduced order models.

The toolkit computes nonlinear modes of mechanical systems from a
multiharmonic complex eigenproblem, interpolates them over modal amplitude,
and drives a two-dimensional averaged model of the slow dynamics that is
verified against built-in direct time integration.
"""

from .errors import (
    AliasingError,
    ConfigError,
    ConvergenceError,
    DahlPeriodicityError,
    IncompatibleArtifactsError,
    NewtonError,
    OverdampedModeError,
    PartialTableError,
    SlowmodesError,
    StiffnessError,
)
from .hbm import (
    HarmonicConfig,
    HarmonicSet,
    aft_force_coefficients,
    fourier_coefficient,
    synthesize_periodic,
)
from .manifold import ManifoldPoint, project_initial_state, synthesize_state
from .model import (
    ConstantFrequency,
    CoulombTanh,
    CubicSpring,
    DahlFriction,
    ForcingSpec,
    LinearSweep,
    MechanicalModel,
    NonlinearElement,
    UnilateralSpring,
    VanDerPolDamper,
    eval_nonlinear_force,
    load_model,
    save_model,
)
from .nma import (
    Eigenpair,
    ModalTable,
    NmaConfig,
    continue_modal_table,
    linearized_eigenpair,
    log_grid,
    residual,
    scaling_check_coulomb,
    solve_eigenpair,
)
from .reference import (
    CraigBamptonReduction,
    Envelope,
    FullState,
    Trajectory,
    build_beam_model,
    craig_bampton,
    extract_envelope,
    integrate_full,
    mechanical_energy,
    modal_damping_matrix,
    reduced_beam_with_friction,
)
from .slowflow import (
    SlowFlowConfig,
    SlowFlowState,
    SlowTrajectory,
    integrate_slowflow,
    modified_modal_properties,
    phase_driver,
    rest_state,
    slowflow_rhs,
    steady_state_solutions,
    synthesize_response,
)

__version__ = "0.1.0"
