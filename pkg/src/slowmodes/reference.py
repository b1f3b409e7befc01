"""Ground-truth engine: direct time integration of the full model, envelope
extraction, Craig-Bampton reduction and the desk-scale cantilever builder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import ConfigError, StiffnessError

__all__ = [
    "FullState",
    "Trajectory",
    "Envelope",
    "integrate_full",
    "extract_envelope",
    "CraigBamptonReduction",
    "craig_bampton",
    "build_beam_model",
    "reduced_beam_with_friction",
    "modal_damping_matrix",
    "mechanical_energy",
]


@dataclass
class FullState:
    """Displacements, velocities and one hysteresis force per Dahl element."""

    u: np.ndarray
    v: np.ndarray
    dahl: tuple = ()

    def vector(self):
        return np.concatenate([self.u, self.v, np.asarray(self.dahl, dtype=float)])


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray        # (n_t, n)
    v: np.ndarray        # (n_t, n)
    dahl: np.ndarray     # (n_t, n_dahl)


def make_rhs(model):
    """First-order right-hand side of the full equations of motion.

    State layout: ``[u (n), v (n), dahl forces (m)]`` so the dimension is
    ``2 n + m``, one extra dimension per hysteresis element.
    """
    n = model.n_dof
    minv = np.linalg.inv(model.mass)
    k_base = model.base_stiffness
    extra_k = model.extra_stiffness if np.any(model.extra_stiffness) else None
    extra_c = model.extra_damping if np.any(model.extra_damping) else None
    forcing = model.forcing
    fhat = forcing.amplitude_vector(n) if forcing is not None else None
    algebraic = [
        (el.law, el.input_dof, w)
        for el, w in zip(model.elements, model._force_maps)
        if not el.law.has_state
    ]
    hysteretic = [
        (el.law, el.input_dof, w)
        for el, w in zip(model.elements, model._force_maps)
        if el.law.has_state
    ]
    m = len(hysteretic)

    def rhs(t, y):
        u = y[:n]
        v = y[n : 2 * n]
        force = k_base @ u
        for law, dof, w in algebraic:
            force = force + w * law.force(u[dof], v[dof])
        rates = np.empty(m)
        for i, (law, dof, w) in enumerate(hysteretic):
            f_el = y[2 * n + i]
            force = force + w * f_el
            rates[i] = law.force_rate(f_el, v[dof])
        if extra_k is not None:
            force = force + extra_k @ u
        if extra_c is not None:
            force = force + extra_c @ v
        rhs_force = -force
        if fhat is not None:
            rhs_force = rhs_force + fhat * math.cos(
                float(forcing.program.phase(t))
            )
        acc = minv @ rhs_force
        return np.concatenate([v, acc, rates])

    return rhs, 2 * n + m


def integrate_full(model, initial, t_end, output_dt=None, t_eval=None,
                   rel_tol=1e-9, abs_tol=1e-12, t_start=0.0):
    """Direct adaptive Runge-Kutta integration of the full model.

    ``output_dt`` decouples output sampling from the integrator steps via
    dense output; envelope extraction downstream needs at least ~20 samples
    per oscillation period.
    """
    n = model.n_dof
    m = model.n_dahl
    if len(initial.dahl) != m:
        raise ConfigError(
            f"initial state carries {len(initial.dahl)} Dahl values, "
            f"model has {m} Dahl elements"
        )
    for (el, f0) in zip(model.dahl_elements, initial.dahl):
        if abs(f0) > el.law.limit_force:
            raise ConfigError("initial Dahl state exceeds the limit force")
    if model.forcing is not None:
        model.forcing.program.validate(t_end)
    rhs, dim = make_rhs(model)
    if t_eval is None:
        if output_dt is None:
            t_eval = np.linspace(t_start, t_end, 2000)
        else:
            t_eval = np.arange(t_start, t_end + 0.5 * output_dt, output_dt)
    sol = solve_ivp(rhs, (t_start, t_end), initial.vector(), method="RK45",
                    rtol=rel_tol, atol=abs_tol, t_eval=np.asarray(t_eval))
    if not sol.success:
        culprit = ""
        for el in model.elements:
            if el.law.kind == "coulomb_tanh" and el.law.smoothing < 1e-3:
                culprit = (f" (coulomb_tanh at DOF {el.input_dof} with "
                           f"smoothing {el.law.smoothing:g} is a known stiff case)")
        raise StiffnessError(
            f"direct integration failed: {sol.message}{culprit}",
            diagnostics={"t_reached": float(sol.t[-1]) if sol.t.size else t_start},
        )
    y = sol.y.T
    return Trajectory(t=sol.t, u=y[:, :n], v=y[:, n : 2 * n], dahl=y[:, 2 * n :])


# ---------------------------------------------------------------------------
# envelope extraction
# ---------------------------------------------------------------------------

@dataclass
class Envelope:
    t_peaks: np.ndarray
    u_peaks: np.ndarray
    t_troughs: np.ndarray
    u_troughs: np.ndarray
    oscillatory: bool = True


def _refine_parabolic(t, u, k):
    """Vertex of the parabola through samples k-1, k, k+1 (clamped)."""
    ts = t[k - 1 : k + 2] - t[k]
    us = u[k - 1 : k + 2]
    a, b, c = np.polyfit(ts, us, 2)
    if a == 0.0:
        return t[k], u[k]
    x_v = -b / (2.0 * a)
    x_v = min(max(x_v, ts[0]), ts[2])
    return t[k] + x_v, a * x_v**2 + b * x_v + c


def extract_envelope(trajectory, dof):
    """Per-cycle extrema of one DOF, located by velocity sign changes.

    Upper and lower envelopes are reported separately because asymmetric
    nonlinearities (unilateral contact) shift them independently.
    """
    t = trajectory.t
    u = trajectory.u[:, dof]
    v = trajectory.v[:, dof]
    peaks_t, peaks_u, troughs_t, troughs_u = [], [], [], []
    for k in range(1, t.size - 1):
        if v[k] == 0.0 and v[k - 1] == 0.0:
            continue
        crossing_down = v[k] > 0.0 and v[k + 1] <= 0.0
        crossing_up = v[k] < 0.0 and v[k + 1] >= 0.0
        if not (crossing_down or crossing_up):
            continue
        t_v, u_v = _refine_parabolic(t, u, k)
        if crossing_down:
            peaks_t.append(t_v)
            peaks_u.append(u_v)
        else:
            troughs_t.append(t_v)
            troughs_u.append(u_v)
    n_extrema = len(peaks_t) + len(troughs_t)
    if n_extrema < 3:
        return Envelope(np.array([]), np.array([]), np.array([]), np.array([]),
                        oscillatory=False)
    return Envelope(np.array(peaks_t), np.array(peaks_u),
                    np.array(troughs_t), np.array(troughs_u))


# ---------------------------------------------------------------------------
# Craig-Bampton reduction
# ---------------------------------------------------------------------------

@dataclass
class CraigBamptonReduction:
    boundary_dofs: tuple
    n_fixed_modes: int
    transform: np.ndarray       # (n, n_b + n_modes)
    mass: np.ndarray            # reduced
    stiffness: np.ndarray       # reduced
    interior_dofs: tuple = ()


def craig_bampton(mass, stiffness, boundary_dofs, n_fixed_modes):
    """Constraint modes at the boundary plus fixed-interface normal modes.

    Boundary DOF rows of the transformation form an identity block, so
    boundary displacements are carried over exactly (which is what keeps a
    nonlinear element attached there exact in the reduced basis).
    """
    mass = np.asarray(mass, dtype=float)
    stiffness = np.asarray(stiffness, dtype=float)
    n = mass.shape[0]
    boundary = sorted(int(b) for b in boundary_dofs)
    if len(set(boundary)) != len(boundary) or not all(0 <= b < n for b in boundary):
        raise ConfigError("boundary DOFs must be unique and in range")
    interior = [i for i in range(n) if i not in boundary]
    if not 0 < n_fixed_modes <= len(interior):
        raise ConfigError(
            f"n_fixed_modes must be in [1, {len(interior)}]"
        )
    k_ii = stiffness[np.ix_(interior, interior)]
    k_ib = stiffness[np.ix_(interior, boundary)]
    m_ii = mass[np.ix_(interior, interior)]
    try:
        constraint = -sla.solve(k_ii, k_ib, assume_a="sym")
    except sla.LinAlgError as exc:
        raise ConfigError("interior stiffness block is singular") from exc
    w2, phi = sla.eigh(k_ii, m_ii)
    phi = phi[:, :n_fixed_modes]

    n_b = len(boundary)
    transform = np.zeros((n, n_b + n_fixed_modes))
    for j, b in enumerate(boundary):
        transform[b, j] = 1.0
    transform[np.ix_(interior, range(n_b))] = constraint
    transform[np.ix_(interior, range(n_b, n_b + n_fixed_modes))] = phi

    m_red = transform.T @ mass @ transform
    k_red = transform.T @ stiffness @ transform
    return CraigBamptonReduction(
        boundary_dofs=tuple(boundary),
        n_fixed_modes=int(n_fixed_modes),
        transform=transform,
        mass=0.5 * (m_red + m_red.T),
        stiffness=0.5 * (k_red + k_red.T),
        interior_dofs=tuple(interior),
    )


# ---------------------------------------------------------------------------
# cantilever beam builder
# ---------------------------------------------------------------------------

def build_beam_model(length=1.0, width=0.2, height=0.1, density=4430.0,
                     youngs_modulus=100e9, n_elements=10):
    """Clamped-free Euler-Bernoulli bending FE model with consistent mass.

    Two DOFs per node (deflection, rotation); the clamp eliminates the root
    node.  Returns ``(M, K, tip_deflection_dof)`` where the tip DOF is where
    a friction element attaches.
    """
    if n_elements < 10:
        raise ConfigError("n_elements must be >= 10")
    area = width * height
    inertia = width * height**3 / 12.0
    le = length / n_elements
    ei = youngs_modulus * inertia
    rho_al = density * area * le

    k_e = (ei / le**3) * np.array([
        [12.0, 6.0 * le, -12.0, 6.0 * le],
        [6.0 * le, 4.0 * le**2, -6.0 * le, 2.0 * le**2],
        [-12.0, -6.0 * le, 12.0, -6.0 * le],
        [6.0 * le, 2.0 * le**2, -6.0 * le, 4.0 * le**2],
    ])
    m_e = (rho_al / 420.0) * np.array([
        [156.0, 22.0 * le, 54.0, -13.0 * le],
        [22.0 * le, 4.0 * le**2, 13.0 * le, -3.0 * le**2],
        [54.0, 13.0 * le, 156.0, -22.0 * le],
        [-13.0 * le, -3.0 * le**2, -22.0 * le, 4.0 * le**2],
    ])

    n_nodes = n_elements + 1
    n_full = 2 * n_nodes
    k_full = np.zeros((n_full, n_full))
    m_full = np.zeros((n_full, n_full))
    for e in range(n_elements):
        idx = [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]
        k_full[np.ix_(idx, idx)] += k_e
        m_full[np.ix_(idx, idx)] += m_e

    keep = list(range(2, n_full))
    k = k_full[np.ix_(keep, keep)]
    m = m_full[np.ix_(keep, keep)]
    tip_dof = 2 * n_elements - 2
    return m, k, tip_dof


def reduced_beam_with_friction(n_elements=10, n_fixed_modes=5,
                               friction_stiffness=1e6, friction_limit=100.0,
                               friction_shape=1.0, forcing=None,
                               extra_damping=None, **beam_kwargs):
    """Craig-Bampton-reduced cantilever with a Dahl element at the tip.

    The reduction keeps the tip deflection as the single boundary DOF, so the
    friction element acts exactly on reduced coordinate 0.  With the default
    five fixed-interface modes the first-order state dimension is
    ``2*6 + 1 = 13``.
    """
    from .model import DahlFriction, MechanicalModel, NonlinearElement

    m_full, k_full, tip_dof = build_beam_model(n_elements=n_elements,
                                               **beam_kwargs)
    reduction = craig_bampton(m_full, k_full, [tip_dof], n_fixed_modes)
    element = NonlinearElement(
        law=DahlFriction(stiffness=friction_stiffness,
                         limit_force=friction_limit, shape=friction_shape),
        input_dof=0,
    )
    model = MechanicalModel(
        mass=reduction.mass, stiffness=reduction.stiffness,
        elements=[element], forcing=forcing, extra_damping=extra_damping,
    )
    return model, reduction


def modal_damping_matrix(mass, stiffness, ratios):
    """Damping matrix with prescribed modal ratios on the given linear system.

    ``C = M Phi diag(2 zeta_j omega_j) Phi^T M`` for mass-normalized modes;
    negative ratios model flutter-type self-excitation.
    """
    mass = np.asarray(mass, dtype=float)
    stiffness = np.asarray(stiffness, dtype=float)
    w2, phi = sla.eigh(stiffness, mass)
    omegas = np.sqrt(np.clip(w2, 0.0, None))
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != omegas.shape:
        raise ConfigError(
            f"need {omegas.size} modal ratios, got {ratios.size}"
        )
    core = np.diag(2.0 * ratios * omegas)
    c = mass @ phi @ core @ phi.T @ mass
    return 0.5 * (c + c.T)


def mechanical_energy(model, u, v):
    """Total energy of the conservative part (kinetic + elastic potentials)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    energy = 0.5 * v @ model.mass @ v + 0.5 * u @ model.base_stiffness @ u
    for el in model.elements:
        law = el.law
        x = u[el.input_dof]
        if law.kind == "cubic_spring":
            energy += 0.25 * law.coefficient * x**4
        elif law.kind == "unilateral_spring":
            if law.stiffness > 0.0:
                x_c = -law.preload / law.stiffness
            else:
                x_c = -math.inf
            if x >= x_c:
                energy += 0.5 * law.stiffness * x**2
            else:
                energy += (0.5 * law.stiffness * x_c**2
                           - law.preload * (x - x_c))
    return float(energy)
