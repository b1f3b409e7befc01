"""The two-dimensional slow-flow reduced order model.

The averaged equations in modal amplitude ``a`` and slow phase ``Theta`` are

    da/dt     = ( -2 dt~ wt~ Omega a - |g| sin(Theta - arg g) ) / (2 Omega)
    dTheta/dt = (  wt~^2 - Omega^2 - |g| cos(Theta - arg g)/a ) / (2 Omega)

with ``g = Psi_1(a)^H fhat`` and the modified modal properties

    wt~^2 = omega0(a)^2 + Psi_1^H Kt Psi_1,
    2 dt~ wt~ = 2 delta(a) wt~ + Psi_1^H Ct Psi_1.

``Omega`` is the instantaneous excitation frequency when forced; in the
autonomous case ``Theta`` freezes and the amplitude equation degenerates to
``da/dt = -dt~(a) wt~(a) a``.  The forcing terms reduce to the plain
``sin Theta`` / ``cos Theta`` form when ``Psi_1^H fhat`` is real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConfigError, StiffnessError

__all__ = [
    "SlowFlowConfig",
    "SlowFlowState",
    "SlowTrajectory",
    "phase_driver",
    "modified_modal_properties",
    "slowflow_rhs",
    "rest_state",
    "integrate_slowflow",
    "synthesize_response",
    "steady_state_solutions",
]


@dataclass
class SlowFlowState:
    """Amplitude, unwrapped slow phase and the time they refer to."""

    a: float
    theta: float = 0.0
    t: float = 0.0


@dataclass
class SlowTrajectory:
    """Dense-output samples of one slow-flow integration."""

    t: np.ndarray
    a: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    phi: np.ndarray


class SlowFlowConfig:
    """Table plus the reduced order model's own parameter space.

    ``extra_stiffness``/``extra_damping``/``forcing`` perturb the autonomous
    surrogate the table was computed for; they can be varied freely without
    recomputing the table.
    """

    def __init__(self, table, extra_stiffness=None, extra_damping=None,
                 forcing=None, rel_tol=1e-8, abs_tol=1e-10, a_floor=None):
        n = table.n_dof
        self.table = table
        self.extra_stiffness = _checked_matrix(extra_stiffness, n, "extra_stiffness")
        self.extra_damping = _checked_matrix(extra_damping, n, "extra_damping")
        self.forcing = forcing
        if forcing is not None:
            self._fhat = forcing.amplitude_vector(n)
        else:
            self._fhat = None
        self.rel_tol = float(rel_tol)
        self.abs_tol = float(abs_tol)
        self.a_floor = float(a_floor) if a_floor is not None else table.a_min
        if self.a_floor <= 0.0:
            raise ConfigError("a_floor must be > 0")
        # 1/(2 Omega) prefactor guard for run-ups that start at zero frequency
        self.omega_floor = 1e-3 * float(table.omega0[0])

    @property
    def is_forced(self):
        return self.forcing is not None


def _checked_matrix(a, n, name):
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise ConfigError(f"{name} has shape {a.shape}, expected ({n}, {n})")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ConfigError(f"{name} must be symmetric")
    if not np.any(a):
        return None
    return 0.5 * (a + a.T)


def phase_driver(forcing, t):
    """Excitation phase and instantaneous frequency ``(phi_e, Omega)`` at ``t``."""
    program = forcing.program
    return program.phase(t), program.instantaneous_frequency(t)


def modified_modal_properties(table, a, extra_stiffness=None, extra_damping=None):
    """Modal frequency and damping perturbed by the extra matrices."""
    omega0, delta, psi = table.interpolate(a)
    psi1 = psi[1]
    w2 = omega0**2
    if extra_stiffness is not None:
        w2 = w2 + float(np.real(np.conj(psi1) @ extra_stiffness @ psi1))
    if w2 <= 0.0:
        raise ConfigError(
            "extra stiffness drives the modified frequency to zero; the "
            "perturbation is too strong for the reduced order model"
        )
    omega_t = math.sqrt(w2)
    delta_t = delta
    if extra_damping is not None:
        delta_t = delta + float(
            np.real(np.conj(psi1) @ extra_damping @ psi1)
        ) / (2.0 * omega_t)
    return omega_t, delta_t


def _modified_at(config, a):
    omega0, delta, psi = config.table.interpolate(a)
    psi1 = psi[1]
    w2 = omega0**2
    if config.extra_stiffness is not None:
        w2 = w2 + float(np.real(np.conj(psi1) @ config.extra_stiffness @ psi1))
    if w2 <= 0.0:
        raise ConfigError("extra stiffness drives the modified frequency to zero")
    omega_t = math.sqrt(w2)
    delta_t = delta
    if config.extra_damping is not None:
        delta_t = delta + float(
            np.real(np.conj(psi1) @ config.extra_damping @ psi1)
        ) / (2.0 * omega_t)
    return omega_t, delta_t, psi1


def slowflow_rhs(state, t, config):
    """Right-hand side ``(da/dt, dTheta/dt)`` of the averaged equations.

    In the autonomous case the slow phase is constant and the amplitude
    decays (grows) with the sign of the modified damping.  The ``1/a``
    forcing term is regularized by clamping at ``1/a_floor``.
    """
    a, theta = float(state[0]), float(state[1])
    a_pos = max(a, 0.0)
    omega_t, delta_t, psi1 = _modified_at(config, a_pos)
    if not config.is_forced:
        return -delta_t * omega_t * a_pos, 0.0
    omega = float(config.forcing.program.instantaneous_frequency(t))
    omega = max(omega, config.omega_floor)
    g = complex(np.conj(psi1) @ config._fhat)
    g_mag = abs(g)
    g_arg = math.atan2(g.imag, g.real)
    adot = (-2.0 * delta_t * omega_t * omega * a_pos
            - g_mag * math.sin(theta - g_arg)) / (2.0 * omega)
    a_div = max(a_pos, config.a_floor)
    thetadot = (omega_t**2 - omega**2
                - g_mag * math.cos(theta - g_arg) / a_div) / (2.0 * omega)
    return adot, thetadot


def rest_state(config, t0=0.0):
    """Initial slow-flow state for a system started from its equilibrium.

    The amplitude starts at the regularization floor; the slow phase starts
    at the attracting balance of the dominant phase dynamics at small
    amplitude (quadrature with the forcing), which maximizes initial growth.
    """
    if not config.is_forced:
        raise ConfigError("a rest start requires forcing")
    _, _, psi1 = _modified_at(config, config.a_floor)
    g = complex(np.conj(psi1) @ config._fhat)
    theta0 = math.atan2(g.imag, g.real) - 0.5 * math.pi
    return SlowFlowState(a=config.a_floor, theta=theta0, t=t0)


def integrate_slowflow(config, initial, t_end, n_output=2000, t_eval=None):
    """Integrate the slow flow with adaptive embedded Runge-Kutta (RK45).

    The fast phase is carried as a quadrature state so the response can be
    resynthesized; in the forced case it tracks the excitation phase.
    Returns a :class:`SlowTrajectory` sampled at ``t_eval`` (or ``n_output``
    uniform times).
    """
    if config.is_forced:
        config.forcing.program.validate(t_end)

    def rhs(t, y):
        adot, thetadot = slowflow_rhs(y[:2], t, config)
        if config.is_forced:
            phidot = float(config.forcing.program.instantaneous_frequency(t))
        else:
            omega_t, _, _ = _modified_at(config, max(y[0], 0.0))
            phidot = omega_t
        return (adot, thetadot, phidot)

    if t_eval is None:
        t_eval = np.linspace(initial.t, t_end, n_output)
    phi0 = 0.0
    if config.is_forced:
        phi0 = float(config.forcing.program.phase(initial.t))
    sol = solve_ivp(
        rhs, (initial.t, t_end), np.array([initial.a, initial.theta, phi0]),
        method="RK45", rtol=config.rel_tol, atol=config.abs_tol,
        dense_output=False, t_eval=np.asarray(t_eval, dtype=float),
    )
    if not sol.success:
        raise StiffnessError(
            f"slow-flow integration failed: {sol.message}",
            diagnostics={"t_reached": float(sol.t[-1]) if sol.t.size else initial.t},
        )
    a = np.clip(sol.y[0], 0.0, None)
    theta = sol.y[1]
    phi = sol.y[2]
    if config.is_forced:
        _, omega = phase_driver(config.forcing, sol.t)
    else:
        omega, _, _ = config.table.interpolate_many(a)
    return SlowTrajectory(t=sol.t, a=a, theta=theta, omega=np.asarray(omega),
                          phi=phi)


@dataclass
class SynthesizedResponse:
    """Physical trajectory and envelopes reconstructed from a slow trajectory."""

    t: np.ndarray
    dofs: tuple
    u: np.ndarray                 # (n_t, n_sel)
    envelope_upper: np.ndarray    # (n_t, n_sel)
    envelope_lower: np.ndarray    # (n_t, n_sel)
    mean_offset: np.ndarray       # (n_t, n_sel): cycle mean, the static harmonic


def synthesize_response(table, trajectory, dofs=None, n_env_phases=256):
    """Multiharmonic synthesis ``u(t)`` plus per-cycle envelopes.

    The envelopes are the extrema of the frozen-amplitude synthesis over a
    full turn of the fast phase, which resolves asymmetric upper/lower
    envelopes once even harmonics are present.
    """
    if dofs is None:
        dofs = tuple(range(table.n_dof))
    else:
        dofs = tuple(int(d) for d in dofs)
    _, _, psi = table.interpolate_many(trajectory.a)
    psi_sel = psi[:, :, dofs]                                  # (n_t, Nh+1, m)
    orders = np.arange(psi.shape[1])
    phase_abs = trajectory.phi + trajectory.theta
    rot = np.exp(1j * np.outer(phase_abs, orders))             # (n_t, Nh+1)
    u = trajectory.a[:, None] * np.real(
        np.einsum("tn,tnm->tm", rot, psi_sel)
    )
    grid = 2.0 * np.pi * np.arange(n_env_phases) / n_env_phases
    basis = np.exp(1j * np.outer(grid, orders))                # (P, Nh+1)
    samples = np.real(np.einsum("pn,tnm->tpm", basis, psi_sel))
    env_up = trajectory.a[:, None] * samples.max(axis=1)
    env_lo = trajectory.a[:, None] * samples.min(axis=1)
    mean = trajectory.a[:, None] * psi_sel[:, 0, :].real
    return SynthesizedResponse(
        t=trajectory.t, dofs=dofs, u=u,
        envelope_upper=env_up, envelope_lower=env_lo, mean_offset=mean,
    )


def steady_state_solutions(config, omega):
    """All fixed points ``(a, Theta)`` of the forced slow flow at ``omega``.

    Eliminating ``Theta`` through ``sin^2 + cos^2 = 1`` gives the scalar
    balance ``(2 dt~ wt~ w a)^2 + ((wt~^2 - w^2) a)^2 = |g|^2``, which is
    scanned for sign changes over the table's amplitude range and the roots
    polished on the full two-equation system.
    """
    if not config.is_forced:
        raise ConfigError("steady-state solutions require forcing")
    omega = float(omega)
    if omega <= 0.0:
        raise ConfigError("steady-state frequency must be > 0")
    table = config.table

    def scalar_balance(a):
        omega_t, delta_t, psi1 = _modified_at(config, a)
        g_mag = abs(complex(np.conj(psi1) @ config._fhat))
        return ((2.0 * delta_t * omega_t * omega * a) ** 2
                + ((omega_t**2 - omega**2) * a) ** 2 - g_mag**2)

    # scan a refinement of the stored grid for brackets
    a_nodes = table.a
    a_scan = [a_nodes[0]]
    for lo, hi in zip(a_nodes[:-1], a_nodes[1:]):
        a_scan.extend(np.geomspace(lo, hi, 5)[1:])
    a_scan = np.array(a_scan)
    values = np.array([scalar_balance(a) for a in a_scan])

    roots = []
    for i in range(a_scan.size - 1):
        v0, v1 = values[i], values[i + 1]
        if v0 == 0.0:
            roots.append(a_scan[i])
        elif v0 * v1 < 0.0:
            roots.append(brentq(scalar_balance, a_scan[i], a_scan[i + 1],
                                xtol=1e-15, rtol=8.9e-16))
    if values[-1] == 0.0:
        roots.append(a_scan[-1])

    solutions = []
    for a_root in roots:
        omega_t, delta_t, psi1 = _modified_at(config, a_root)
        g = complex(np.conj(psi1) @ config._fhat)
        g_mag = abs(g)
        if g_mag == 0.0:
            continue
        sin_d = -2.0 * delta_t * omega_t * omega * a_root / g_mag
        cos_d = (omega_t**2 - omega**2) * a_root / g_mag
        theta = math.atan2(g.imag, g.real) + math.atan2(sin_d, cos_d)
        a_fix, theta_fix = _polish_fixed_point(config, omega, a_root, theta)
        if any(abs(a_fix - s[0]) <= 1e-10 * max(1.0, abs(a_fix))
               and abs(_wrap(theta_fix - s[1])) <= 1e-8
               for s in solutions):
            continue
        solutions.append((a_fix, theta_fix))
    solutions.sort(key=lambda s: s[0])
    return solutions


def _wrap(angle):
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def _polish_fixed_point(config, omega, a0, theta0):
    """A few Newton steps on the two RHS components at frozen ``omega``."""

    def rhs(p):
        a, theta = p
        a = min(max(a, config.a_floor * 1e-3), config.table.a_max)
        omega_t, delta_t, psi1 = _modified_at(config, max(a, 0.0))
        g = complex(np.conj(psi1) @ config._fhat)
        g_mag, g_arg = abs(g), math.atan2(g.imag, g.real)
        adot = (-2.0 * delta_t * omega_t * omega * a
                - g_mag * math.sin(theta - g_arg)) / (2.0 * omega)
        thetadot = (omega_t**2 - omega**2
                    - g_mag * math.cos(theta - g_arg) / max(a, config.a_floor * 1e-3)
                    ) / (2.0 * omega)
        return np.array([adot, thetadot])

    p = np.array([a0, theta0])
    r = rhs(p)
    for _ in range(30):
        if np.max(np.abs(r)) < 1e-13 * max(1.0, omega**2):
            break
        jac = np.empty((2, 2))
        for k in range(2):
            step = 1e-8 * (1.0 + abs(p[k]))
            pp = p.copy()
            pp[k] += step
            jac[:, k] = (rhs(pp) - r) / step
        try:
            dp = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        p_new = p + dp
        r_new = rhs(p_new)
        if not np.all(np.isfinite(r_new)):
            break
        if np.max(np.abs(r_new)) >= np.max(np.abs(r)):
            # half step once before giving up
            p_new = p + 0.5 * dp
            r_new = rhs(p_new)
            if np.max(np.abs(r_new)) >= np.max(np.abs(r)):
                break
        p, r = p_new, r_new
    return float(p[0]), float(p[1])
