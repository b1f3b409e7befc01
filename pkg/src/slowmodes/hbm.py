"""Period-grid Fourier machinery and AFT evaluation of nonlinear forces.

Conventions
-----------
A periodic motion is synthesized on the uniform grid ``tau_j = 2*pi*j/Nt``.
Harmonic coefficients are one-sided: coefficient ``n >= 1`` of ``cos(n tau)``
is 1, the ``n = 0`` coefficient of a constant is the constant itself, so a
real signal is ``c(tau) = C_0 + Re(sum_{n>=1} C_n exp(i n tau))``.  This
matches the synthesis convention ``u = a Re(sum Psi_n exp(i n tau))`` used
throughout, so harmonic balance rows carry no stray factors of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, ConfigError, DahlPeriodicityError

__all__ = [
    "HarmonicConfig",
    "HarmonicSet",
    "synthesize_periodic",
    "fourier_coefficient",
    "harmonic_coefficients",
    "aft_force_coefficients",
]


def default_sample_count(n_harmonics):
    """Alias-safe default: ``max(64, next power of two >= 8*(Nh+1))``.

    The factor 8 leaves margin for cubic harmonic growth and stiff friction
    transitions.
    """
    target = 8 * (n_harmonics + 1)
    return max(64, 1 << (target - 1).bit_length())


@dataclass(frozen=True)
class HarmonicConfig:
    """Harmonic truncation order and sample count per period."""

    n_harmonics: int
    n_samples: int = None

    def __post_init__(self):
        if self.n_harmonics < 1:
            raise ConfigError("n_harmonics must be >= 1")
        nt = self.n_samples
        if nt is None:
            object.__setattr__(self, "n_samples", default_sample_count(self.n_harmonics))
            return
        if nt < 4 * (self.n_harmonics + 1):
            raise ConfigError(
                f"n_samples={nt} < 4*(n_harmonics+1)={4 * (self.n_harmonics + 1)}"
            )
        if nt & (nt - 1):
            raise ConfigError(f"n_samples={nt} is not a power of two")

    @property
    def sample_phases(self):
        return 2.0 * np.pi * np.arange(self.n_samples) / self.n_samples


class HarmonicSet:
    """Complex harmonic components ``Psi_0 .. Psi_Nh`` of a motion.

    ``coefficients`` has shape ``(Nh+1, n_dof)``; the zeroth row is a real
    static offset.
    """

    def __init__(self, coefficients):
        c = np.array(coefficients, dtype=complex)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise ConfigError("harmonic coefficients must be (Nh+1, n_dof)")
        if np.max(np.abs(c[0].imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(c))):
            raise ConfigError("the static harmonic must be real")
        c[0] = c[0].real
        self.coefficients = c

    @property
    def n_harmonics(self):
        return self.coefficients.shape[0] - 1

    @property
    def n_dof(self):
        return self.coefficients.shape[1]

    def __getitem__(self, n):
        return self.coefficients[n]


def synthesize_periodic(harmonics, a, omega, config):
    """Sample one period of the motion and its velocity.

    Returns ``(U, V)`` of shape ``(Nt, n_dof)`` with
    ``U[j] = a Re(sum_n Psi_n exp(i n tau_j))`` and
    ``V[j] = a Re(sum_n i n omega Psi_n exp(i n tau_j))``.
    """
    if a < 0.0:
        raise ConfigError("modal amplitude must be >= 0")
    if omega <= 0.0:
        raise ConfigError("frequency must be > 0")
    psi = harmonics.coefficients
    nh = psi.shape[0] - 1
    if nh > config.n_harmonics:
        raise ConfigError("harmonic set exceeds the configured truncation order")
    tau = config.sample_phases
    orders = np.arange(nh + 1)
    basis = np.exp(1j * np.outer(tau, orders))          # (Nt, Nh+1)
    u = a * np.real(basis @ psi)
    v = a * np.real(basis @ (1j * orders[:, None] * omega * psi))
    return u, v


def fourier_coefficient(samples, n):
    """One-sided coefficient of harmonic ``n`` from one period of samples.

    Exact for band-limited signals with content strictly below ``Nt/2``.
    """
    samples = np.asarray(samples, dtype=float)
    nt = samples.shape[0]
    if not 0 <= n:
        raise AliasingError("harmonic index must be >= 0")
    if n >= nt // 2:
        raise AliasingError(f"harmonic {n} aliases on a {nt}-sample grid")
    tau = 2.0 * np.pi * np.arange(nt) / nt
    weight = np.exp(-1j * n * tau)
    coeff = (weight @ samples) / nt
    return coeff * (2.0 if n >= 1 else 1.0)


def harmonic_coefficients(samples, n_harmonics):
    """Coefficients 0..Nh of each column of ``samples`` in one FFT pass."""
    samples = np.asarray(samples, dtype=float)
    nt = samples.shape[0]
    if n_harmonics >= nt // 2:
        raise AliasingError(
            f"harmonic {n_harmonics} aliases on a {nt}-sample grid"
        )
    spec = np.fft.rfft(samples, axis=0)[: n_harmonics + 1] / nt
    spec[1:] *= 2.0
    # rfft uses exp(-i n tau) with the same sign as the inner product
    return spec


# ---------------------------------------------------------------------------
# Dahl hysteresis over one period
# ---------------------------------------------------------------------------

def _dahl_substeps(law, v_max, omega, n_samples):
    """Substeps per sample so the hysteresis rate resolves smoothly."""
    period = 2.0 * np.pi / omega
    if v_max <= 0.0:
        return 64
    dt_target = 0.1 * law.limit_force / (law.stiffness * v_max)
    needed = period / (dt_target * n_samples)
    return int(min(512, max(64, math.ceil(needed))))


def _velocity_on_grid(vel_coeffs, phases):
    orders = np.arange(len(vel_coeffs))
    return np.real(np.exp(1j * np.outer(phases, orders)) @ vel_coeffs)


def dahl_periodic_samples(law, vel_coeffs, omega, n_samples, max_cycles=20,
                          settle_rtol=1e-8):
    """Steady periodic Dahl force at the ``n_samples`` period grid points.

    ``vel_coeffs[n]`` are the complex harmonics of the driving velocity,
    i.e. ``v(tau) = Re(sum_n vel_coeffs[n] exp(i n tau))``.

    For the linear hysteresis shape (exponent 1) the one-period affine map is
    integrated exactly up to quadrature and its fixed point taken directly;
    otherwise the force rate is marched with RK4 over repeated periods until
    the cycle-to-cycle change drops below ``settle_rtol * limit_force``.
    """
    if omega <= 0.0:
        raise ConfigError("Dahl elements require a strictly positive frequency")
    nt = n_samples
    period = 2.0 * np.pi / omega
    v_probe = _velocity_on_grid(vel_coeffs, np.linspace(0.0, 2.0 * np.pi, 4 * nt,
                                                        endpoint=False))
    v_max = float(np.max(np.abs(v_probe), initial=0.0))
    if v_max == 0.0:
        return np.zeros(nt)
    n_sub = _dahl_substeps(law, v_max, omega, nt)

    if law.shape == 1.0:
        return _dahl_affine_fixed_point(law, vel_coeffs, period, nt, n_sub)
    return _dahl_march(law, vel_coeffs, period, nt, n_sub, max_cycles, settle_rtol)


def _dahl_affine_fixed_point(law, vel_coeffs, period, nt, n_sub):
    # fdot = p(t) - q(t) f with p = k v, q = k |v| / R: each fine step is an
    # affine map f -> alpha f + beta with alpha = exp(-dQ) <= 1 (stable).
    k_total = nt * n_sub
    phases = 2.0 * np.pi * np.arange(k_total + 1) / k_total
    v = _velocity_on_grid(vel_coeffs, phases)
    dt = period / k_total
    p = law.stiffness * v
    q = law.stiffness * np.abs(v) / law.limit_force
    dq = 0.5 * dt * (q[:-1] + q[1:])
    alpha = np.exp(-dq)
    beta = 0.5 * dt * (alpha * p[:-1] + p[1:])

    # fold the fine steps of each sample interval into one map per interval
    alpha = alpha.reshape(nt, n_sub)
    beta = beta.reshape(nt, n_sub)
    a_int = np.ones(nt)
    b_int = np.zeros(nt)
    for i in range(n_sub):
        a_int = alpha[:, i] * a_int
        b_int = alpha[:, i] * b_int + beta[:, i]

    # compose over the period and start at the periodic fixed point
    a_tot = 1.0
    b_tot = 0.0
    for j in range(nt):
        a_tot, b_tot = a_int[j] * a_tot, a_int[j] * b_tot + b_int[j]
    f0 = b_tot / (1.0 - a_tot) if a_tot < 1.0 - 1e-14 else 0.0

    f = np.empty(nt)
    f[0] = f0
    for j in range(nt - 1):
        f[j + 1] = a_int[j] * f[j] + b_int[j]
    return np.clip(f, -law.limit_force, law.limit_force)


def _dahl_march(law, vel_coeffs, period, nt, n_sub, max_cycles, settle_rtol):
    k_total = nt * n_sub
    half_phases = 2.0 * np.pi * np.arange(2 * k_total + 1) / (2 * k_total)
    v_half = _velocity_on_grid(vel_coeffs, half_phases)
    dt = period / k_total
    rate = law.force_rate

    f = 0.0
    threshold = settle_rtol * law.limit_force
    for cycle in range(max_cycles):
        f_start = f
        samples = np.empty(nt)
        for k in range(k_total):
            if k % n_sub == 0:
                samples[k // n_sub] = f
            v0 = v_half[2 * k]
            vm = v_half[2 * k + 1]
            v1 = v_half[2 * k + 2]
            k1 = rate(f, v0)
            k2 = rate(f + 0.5 * dt * k1, vm)
            k3 = rate(f + 0.5 * dt * k2, vm)
            k4 = rate(f + dt * k3, v1)
            f = f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            f = min(max(f, -law.limit_force), law.limit_force)
        if abs(f - f_start) < threshold:
            return samples
    raise DahlPeriodicityError(
        "Dahl hysteresis did not become periodic",
        diagnostics={
            "cycles": max_cycles,
            "last_change": abs(f - f_start),
            "threshold": threshold,
        },
    )


# ---------------------------------------------------------------------------
# AFT
# ---------------------------------------------------------------------------

def aft_force_coefficients(model, harmonics, a, omega, config):
    """Harmonic coefficients of the surrogate force along a periodic motion.

    Algebraic element laws are evaluated sample-wise; Dahl elements are
    brought to their steady hysteresis first.  Returns an ``(Nh+1, n_dof)``
    complex array in the one-sided normalization of
    :func:`fourier_coefficient`.
    """
    u, v = synthesize_periodic(harmonics, a, omega, config)
    f = u @ model.base_stiffness.T
    psi = harmonics.coefficients
    orders = np.arange(psi.shape[0])
    for el, w in zip(model.elements, model._force_maps):
        dof = el.input_dof
        if el.law.has_state:
            vel_coeffs = a * 1j * orders * omega * psi[:, dof]
            fe = dahl_periodic_samples(el.law, vel_coeffs, omega, config.n_samples)
        else:
            fe = el.law.force(u[:, dof], v[:, dof])
        f = f + np.outer(fe, w)
    return harmonic_coefficients(f, config.n_harmonics)
