"""Synthesis of phase-space states on the invariant manifold and the
closest-point projection of arbitrary initial states onto it.

The manifold is the two-parameter family

    u(a, phi) = a Re(sum_n Psi_n(a) exp(i n phi)),
    v(a, phi) = a Re(sum_n i n omega0(a) Psi_n(a) exp(i n phi)),

where only the fast rotation is differentiated (the amplitude sensitivity of
the harmonics is a second-order effect and dropped).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["ManifoldPoint", "synthesize_state", "project_initial_state"]


@dataclass
class ManifoldPoint:
    a: float
    phi_abs: float
    u: np.ndarray
    v: np.ndarray
    clamped: bool = False


def _complex_shape(table, a_values):
    """``v(a, phi=0.. )`` building blocks: psi rows and omega0 at each a."""
    omega0, _, psi = table.interpolate_many(a_values)
    return omega0, psi


def synthesize_state(table, a, phi_abs):
    """State on the manifold at amplitude ``a`` and absolute phase ``phi_abs``.

    Amplitudes outside the table are clamped; the returned point carries a
    ``clamped`` flag and a warning is emitted.
    """
    if a < 0.0:
        raise ConfigError("modal amplitude must be >= 0")
    clamped = not table.in_range(a) and a > 0.0
    if clamped:
        warnings.warn(
            f"amplitude {a:g} outside table range "
            f"[{table.a_min:g}, {table.a_max:g}]; clamped",
            stacklevel=2,
        )
    if a == 0.0:
        n = table.n_dof
        return ManifoldPoint(0.0, phi_abs % (2.0 * math.pi),
                             np.zeros(n), np.zeros(n))
    omega0, _, psi = table.interpolate(a)
    orders = np.arange(psi.shape[0])
    phases = np.exp(1j * orders * phi_abs)
    u = a * np.real(phases @ psi)
    v = a * np.real((1j * orders * omega0 * phases) @ psi)
    return ManifoldPoint(a, phi_abs % (2.0 * math.pi), u, v, clamped)


def _projection_residual(table, z_target, a, theta, omega_forced):
    """Complex residual ``u0 + v0/(i Omega) - a v(a, theta)`` stacked re/im."""
    omega0, _, psi = table.interpolate(a)
    omega = omega_forced if omega_forced is not None else omega0
    orders = np.arange(psi.shape[0])
    shape = np.exp(1j * orders * theta) @ psi
    res = z_target(omega) - a * shape
    return np.concatenate([res.real, res.imag])


def project_initial_state(table, u0, v0, omega=None, n_phases=64):
    """Closest point on the manifold to the state ``(u0, v0)``.

    The match is performed on the complexified state ``u0 + v0 / (i Omega)``
    with ``Omega = omega0(a)`` at the candidate amplitude (autonomous) or the
    supplied instantaneous excitation frequency (forced).  A coarse scan over
    all table amplitudes and ``n_phases`` phases seeds a damped Gauss-Newton
    refinement.  Returns ``(a0, theta0, residual_distance)``; a large distance
    signals an initial state off the manifold and is data, not an error.
    """
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != (table.n_dof,) or v0.shape != (table.n_dof,):
        raise ConfigError("initial state dimensions do not match the table")

    def z_target(om):
        return u0 + v0 / (1j * om)

    # coarse scan on the stored grid
    thetas = 2.0 * np.pi * np.arange(n_phases) / n_phases
    orders = np.arange(table.psi.shape[1])
    basis = np.exp(1j * np.outer(thetas, orders))            # (n_phases, Nh+1)
    best = None
    for i in range(table.n_entries):
        a_i = float(table.a[i])
        om = omega if omega is not None else float(table.omega0[i])
        shapes = basis @ table.psi[i]                        # (n_phases, n)
        res = z_target(om)[None, :] - a_i * shapes
        dist2 = np.sum(np.abs(res) ** 2, axis=1)
        j = int(np.argmin(dist2))
        if best is None or dist2[j] < best[0]:
            best = (dist2[j], a_i, thetas[j])

    _, a_cur, th_cur = best

    def residual(p):
        a_c = min(max(p[0], table.a_min), table.a_max)
        return _projection_residual(table, z_target, a_c, p[1], omega)

    p = np.array([a_cur, th_cur])
    r = residual(p)
    cost = r @ r
    for _ in range(60):
        jac = np.empty((r.size, 2))
        for k in range(2):
            step = 1e-7 * (1.0 + abs(p[k]))
            pp = p.copy()
            pp[k] += step
            jac[:, k] = (residual(pp) - r) / step
        dp, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        scale = 1.0
        for _ in range(12):
            p_try = p.copy() + scale * dp
            p_try[0] = min(max(p_try[0], table.a_min), table.a_max)
            r_try = residual(p_try)
            c_try = r_try @ r_try
            if c_try < cost:
                break
            scale *= 0.5
        else:
            break
        moved = np.max(np.abs(p_try - p))
        p, r, cost = p_try, r_try, c_try
        if moved <= 1e-13 * (1.0 + np.max(np.abs(p))):
            break

    return float(p[0]), float(p[1] % (2.0 * math.pi)), float(math.sqrt(cost))
