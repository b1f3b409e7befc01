"""Nonlinear modal analysis: the multiharmonic complex eigenproblem.

At a fixed modal amplitude ``a`` the unknowns are the complex eigenfrequency
(parameterized by the undamped frequency ``omega0`` and the damping ratio
``delta``) and the harmonic components ``Psi_0 .. Psi_Nh``.  The residual
stacks, for every harmonic ``n``,

    (n lambda)^2 M Psi_n a  +  F_n(u_p, v_p)

where ``F_n`` are the AFT force coefficients of the periodic forms at
``omega0``, together with the amplitude normalization
``Psi_1^H M Psi_1 = 1`` and the phase normalization ``Re(t^H Psi_1) = 0``.
Amplitude continuation sweeps ``a`` over a grid, seeding each solve from the
previous eigenpair.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import PchipInterpolator

from .errors import (
    ConfigError,
    ConvergenceError,
    IncompatibleArtifactsError,
    NewtonError,
    OverdampedModeError,
    PartialTableError,
)
from .hbm import HarmonicConfig, HarmonicSet, aft_force_coefficients

__all__ = [
    "Eigenpair",
    "NmaConfig",
    "ModalTable",
    "residual",
    "solve_eigenpair",
    "linearized_eigenpair",
    "continue_modal_table",
    "interpolate",
    "scaling_check_coulomb",
    "log_grid",
]


@dataclass
class Eigenpair:
    """One point of a nonlinear mode: amplitude, eigenvalue, harmonics."""

    a: float
    omega0: float
    delta: float
    harmonics: HarmonicSet

    @property
    def lam(self):
        """Complex eigenfrequency ``-delta*omega0 + i*omega0*sqrt(1-delta^2)``."""
        return complex(
            -self.delta * self.omega0,
            self.omega0 * math.sqrt(max(0.0, 1.0 - self.delta**2)),
        )

    @property
    def psi1(self):
        return self.harmonics[1]


def log_grid(a_min, a_max, n_points):
    """Logarithmic amplitude grid (the default spacing for continuation)."""
    if not 0.0 < a_min < a_max:
        raise ConfigError("need 0 < a_min < a_max")
    return np.geomspace(a_min, a_max, n_points)


@dataclass
class NmaConfig:
    """Settings for one continuation run."""

    harmonic: HarmonicConfig
    amplitude_grid: np.ndarray
    mode_index: int = 0
    newton_tol: float = 1e-9
    max_iter: int = 50
    phase_vector: np.ndarray = None
    min_rel_step: float = 1e-4

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.amplitude_grid, dtype=float))
        if grid.size < 1 or np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
            raise ConfigError("amplitude grid must be strictly increasing and > 0")
        self.amplitude_grid = grid
        if self.newton_tol <= 0.0:
            raise ConfigError("newton_tol must be > 0")


# ---------------------------------------------------------------------------
# packing and residual
# ---------------------------------------------------------------------------

def _pack(omega0, delta, psi):
    nh = psi.shape[0] - 1
    parts = [np.array([omega0, delta]), psi[0].real]
    for n in range(1, nh + 1):
        parts.append(psi[n].real)
        parts.append(psi[n].imag)
    return np.concatenate(parts)


def _unpack(x, nh, n_dof):
    omega0 = x[0]
    delta = x[1]
    psi = np.zeros((nh + 1, n_dof), dtype=complex)
    psi[0] = x[2 : 2 + n_dof]
    off = 2 + n_dof
    for n in range(1, nh + 1):
        psi[n] = x[off : off + n_dof] + 1j * x[off + n_dof : off + 2 * n_dof]
        off += 2 * n_dof
    return omega0, delta, psi


def _residual_vector(model, a, omega0, delta, psi, config, phase_vector):
    nh = psi.shape[0] - 1
    n = model.n_dof
    lam = complex(-delta * omega0, omega0 * math.sqrt(1.0 - delta**2))
    h = HarmonicSet(psi)
    forces = aft_force_coefficients(model, h, a, omega0, config)
    rows = [forces[0].real]
    mass = model.mass
    for m in range(1, nh + 1):
        block = (m * lam) ** 2 * (mass @ psi[m]) * a + forces[m]
        rows.append(block.real)
        rows.append(block.imag)
    psi1 = psi[1]
    amp = np.real(np.conj(psi1) @ mass @ psi1) - 1.0
    phase = np.real(np.conj(phase_vector) @ psi1)
    rows.append(np.array([amp, phase]))
    return np.concatenate(rows)


def residual(model, a, eigenpair, config, phase_vector=None):
    """Stacked real residual of the complex eigenproblem at amplitude ``a``.

    ``phase_vector`` defaults to ``i M Psi_1`` of the supplied eigenpair
    (which makes its own phase residual zero by construction).
    """
    psi = eigenpair.harmonics.coefficients
    if phase_vector is None:
        phase_vector = 1j * (model.mass @ psi[1])
    return _residual_vector(
        model, a, eigenpair.omega0, eigenpair.delta, psi, config.harmonic,
        phase_vector,
    )


def residual_scale(model, omega_ref):
    """Characteristic magnitude of a harmonic residual row per unit amplitude."""
    return max(1.0, omega_ref**2 * float(np.max(np.abs(model.mass))))


def scaled_residual_norm(r, n_dof, a, scale):
    """Convergence measure: harmonic rows relative to ``a * scale``,
    normalization rows absolute (they are dimensionless and O(1))."""
    harm = np.max(np.abs(r[:-2])) / (a * scale)
    constr = np.max(np.abs(r[-2:]))
    return max(harm, constr)


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

def _newton(func, x0, tol_norm, max_iter):
    """Damped Newton with forward-difference Jacobian.

    ``func(x)`` returns the residual or None outside the admissible domain;
    ``tol_norm(x, r)`` maps a residual to the scalar convergence measure.
    """
    x = np.array(x0, dtype=float)
    r = func(x)
    if r is None:
        raise NewtonError("initial guess outside the admissible domain")
    history = [tol_norm(x, r)]
    if history[-1] <= 1.0:
        return x, history
    dim = x.size
    for _ in range(max_iter):
        jac = np.empty((r.size, dim))
        for i in range(dim):
            step = 1e-7 * (1.0 + abs(x[i]))
            xp = x.copy()
            xp[i] += step
            rp = func(xp)
            if rp is None:
                xp[i] = x[i] - step
                rp = func(xp)
                if rp is None:
                    raise NewtonError(
                        "finite-difference probe left the admissible domain",
                        diagnostics={"x": x.copy(), "history": history},
                    )
                jac[:, i] = (r - rp) / step
            else:
                jac[:, i] = (rp - r) / step
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(jac, -r, rcond=None)[0]
        norm0 = np.max(np.abs(r))
        step_scale = 1.0
        for _ in range(10):
            x_try = x + step_scale * dx
            r_try = func(x_try)
            if r_try is not None and np.max(np.abs(r_try)) < norm0:
                break
            step_scale *= 0.5
        else:
            raise NewtonError(
                "line search stalled",
                diagnostics={"x": x.copy(), "history": history},
            )
        x, r = x_try, r_try
        history.append(tol_norm(x, r))
        if history[-1] <= 1.0:
            return x, history
    raise NewtonError(
        "no convergence within the iteration budget",
        diagnostics={"x": x.copy(), "history": history},
    )


def solve_eigenpair(model, a, guess, config):
    """Solve the complex eigenproblem at fixed amplitude from a guess."""
    if a <= 0.0:
        raise ConfigError("modal amplitude must be > 0 for an eigenpair solve")
    nh = config.harmonic.n_harmonics
    n = model.n_dof
    psi_g = np.zeros((nh + 1, n), dtype=complex)
    gh = guess.harmonics.coefficients
    psi_g[: gh.shape[0]] = gh
    if config.phase_vector is not None:
        t_vec = np.asarray(config.phase_vector, dtype=complex)
    else:
        t_vec = 1j * (model.mass @ psi_g[1])
    scale = residual_scale(model, guess.omega0)
    tol = config.newton_tol

    def func(x):
        omega0, delta = x[0], x[1]
        if omega0 <= 0.0 or abs(delta) >= 1.0:
            return None
        _, _, psi = _unpack(x, nh, n)
        return _residual_vector(model, a, omega0, delta, psi, config.harmonic,
                                t_vec)

    def tol_norm(x, r):
        return scaled_residual_norm(r, n, a, scale) / tol

    x0 = _pack(guess.omega0, guess.delta, psi_g)
    try:
        x, history = _newton(func, x0, tol_norm, config.max_iter)
    except NewtonError as err:
        err.diagnostics.setdefault("amplitude", a)
        raise
    omega0, delta, psi = _unpack(x, nh, n)
    if abs(delta) >= 1.0 - 1e-12:
        raise OverdampedModeError(
            f"mode left the underdamped range at a={a:g} (delta={delta:g})",
            diagnostics={"amplitude": a, "delta": delta},
        )
    return Eigenpair(a=a, omega0=omega0, delta=delta, harmonics=HarmonicSet(psi))


# ---------------------------------------------------------------------------
# linearized seed
# ---------------------------------------------------------------------------

def linearized_eigenpair(model, mode_index, n_harmonics=1):
    """Small-amplitude limit of the eigenproblem, used to seed continuation.

    For models whose force law linearizes to a pure stiffness this is the
    classical mass-normalized mode.  Velocity-driven laws (Coulomb, van der
    Pol) linearize to a damper; the eigenproblem then couples the eigenvalue
    to the periodic forms at ``omega0``, which is resolved here by a dense
    eigensolve inside a scalar fixed-point iteration on ``omega0``.
    """
    omega_lin, phi = model.linear_modes()
    if not 0 <= mode_index < model.n_dof:
        raise ConfigError(f"mode_index {mode_index} out of range")
    target = phi[:, mode_index]
    k0, c0 = model.linearized_operators()
    mass = model.mass

    if not np.any(c0):
        w2, vecs = sla.eigh(k0, mass)
        overlaps = np.abs(target @ mass @ vecs)
        j = int(np.argmax(overlaps))
        omega0 = math.sqrt(max(w2[j], 0.0))
        delta = 0.0
        psi1 = vecs[:, j].astype(complex)
        if target @ mass @ vecs[:, j] < 0.0:
            psi1 = -psi1
    else:
        omega0 = max(omega_lin[mode_index], 1e-12)
        psi1 = target.astype(complex)
        for _ in range(200):
            dyn = -model.solve_mass(k0 + 1j * omega0 * c0)
            vals, vecs = sla.eig(dyn)
            overlaps = np.empty(vals.size)
            for j in range(vals.size):
                v = vecs[:, j]
                overlaps[j] = abs(target @ mass @ v) / math.sqrt(
                    np.real(np.conj(v) @ mass @ v)
                )
            j = int(np.argmax(overlaps))
            lam2 = vals[j]
            omega_new = math.sqrt(abs(lam2))
            psi1 = vecs[:, j]
            if abs(omega_new - omega0) <= 1e-14 * omega_new:
                omega0 = omega_new
                break
            omega0 = omega_new
        s = -np.imag(lam2) / (2.0 * omega0**2)
        if abs(s) > 0.5:
            raise OverdampedModeError(
                "linearized mode is overdamped", diagnostics={"s": s}
            )
        delta = math.copysign(
            math.sqrt(0.5 * (1.0 - math.sqrt(1.0 - 4.0 * s * s))), s
        )
        psi1 = psi1 / math.sqrt(np.real(np.conj(psi1) @ mass @ psi1))
        z = target @ mass @ psi1
        psi1 = psi1 * (np.conj(z) / abs(z))

    psi = np.zeros((n_harmonics + 1, model.n_dof), dtype=complex)
    psi[1] = psi1
    return Eigenpair(a=0.0, omega0=omega0, delta=delta, harmonics=HarmonicSet(psi))


# ---------------------------------------------------------------------------
# modal table
# ---------------------------------------------------------------------------

class ModalTable:
    """Continuation-ordered eigenpairs of one mode with interpolation over a."""

    def __init__(self, a, omega0, delta, psi, provenance=None):
        self.a = np.asarray(a, dtype=float)
        self.omega0 = np.asarray(omega0, dtype=float)
        self.delta = np.asarray(delta, dtype=float)
        self.psi = np.asarray(psi, dtype=complex)
        if self.a.size == 0:
            raise ConfigError("modal table must contain at least one entry")
        if np.any(np.diff(self.a) <= 0.0):
            raise ConfigError("table amplitudes must be strictly increasing")
        self.provenance = dict(provenance or {})
        self._interp = None

    @classmethod
    def from_entries(cls, entries, provenance=None):
        a = [e.a for e in entries]
        omega0 = [e.omega0 for e in entries]
        delta = [e.delta for e in entries]
        psi = [e.harmonics.coefficients for e in entries]
        return cls(a, omega0, delta, np.array(psi), provenance)

    # -- basic queries ------------------------------------------------------

    @property
    def n_entries(self):
        return self.a.size

    @property
    def n_harmonics(self):
        return self.psi.shape[1] - 1

    @property
    def n_dof(self):
        return self.psi.shape[2]

    @property
    def a_min(self):
        return float(self.a[0])

    @property
    def a_max(self):
        return float(self.a[-1])

    def in_range(self, a):
        return bool(self.a_min <= a <= self.a_max)

    def entries(self):
        return [
            Eigenpair(float(self.a[i]), float(self.omega0[i]),
                      float(self.delta[i]), HarmonicSet(self.psi[i]))
            for i in range(self.n_entries)
        ]

    # -- interpolation --------------------------------------------------------

    def _build_interp(self):
        n_cols = self.psi.shape[1] * self.psi.shape[2]
        y = np.column_stack([
            self.omega0,
            self.delta,
            self.psi.reshape(self.n_entries, n_cols).real,
            self.psi.reshape(self.n_entries, n_cols).imag,
        ])
        self._interp = PchipInterpolator(self.a, y, axis=0, extrapolate=True)

    def interpolate_many(self, a_values):
        """Monotone piecewise-cubic interpolation at clamped amplitudes.

        Returns ``(omega0, delta, psi)`` with shapes ``(m,)``, ``(m,)`` and
        ``(m, Nh+1, n_dof)``.
        """
        a_values = np.clip(np.atleast_1d(a_values), self.a_min, self.a_max)
        if self.n_entries == 1:
            m = a_values.size
            return (
                np.full(m, self.omega0[0]),
                np.full(m, self.delta[0]),
                np.broadcast_to(self.psi[0], (m, *self.psi.shape[1:])).copy(),
            )
        if self._interp is None:
            self._build_interp()
        y = self._interp(a_values)
        n_cols = self.psi.shape[1] * self.psi.shape[2]
        omega0 = y[:, 0]
        delta = y[:, 1]
        re = y[:, 2 : 2 + n_cols]
        im = y[:, 2 + n_cols :]
        psi = (re + 1j * im).reshape(a_values.size, *self.psi.shape[1:])
        return omega0, delta, psi

    def interpolate(self, a):
        omega0, delta, psi = self.interpolate_many(np.array([a]))
        return float(omega0[0]), float(delta[0]), psi[0]

    # -- persistence ----------------------------------------------------------

    def _column_names(self):
        names = ["a", "omega0", "delta"]
        for n in range(self.psi.shape[1]):
            for d in range(self.psi.shape[2]):
                names.append(f"psi{n}_re_d{d}")
                names.append(f"psi{n}_im_d{d}")
        return names

    def save(self, path):
        """Write the table CSV and its metadata sidecar (17 significant digits)."""
        path = Path(path)
        rows = []
        for i in range(self.n_entries):
            vals = [self.a[i], self.omega0[i], self.delta[i]]
            for n in range(self.psi.shape[1]):
                for d in range(self.psi.shape[2]):
                    vals.append(self.psi[i, n, d].real)
                    vals.append(self.psi[i, n, d].imag)
            rows.append(",".join(f"{v:.17g}" for v in vals))
        path.write_text(",".join(self._column_names()) + "\n" + "\n".join(rows) + "\n",
                        encoding="utf-8")
        meta = {
            "format": "slowmodes-modal-table",
            "n_harmonics": int(self.n_harmonics),
            "n_dof": int(self.n_dof),
            "n_entries": int(self.n_entries),
            "provenance": self.provenance,
        }
        _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(_meta_path(path).read_text(encoding="utf-8"))
        if meta.get("format") != "slowmodes-modal-table":
            raise IncompatibleArtifactsError(f"{path} is not a modal table")
        lines = path.read_text(encoding="utf-8").strip().split("\n")
        header = lines[0].split(",")
        nh = int(meta["n_harmonics"])
        n_dof = int(meta["n_dof"])
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        table = cls.__new__(cls)
        table.a = data[:, 0]
        table.omega0 = data[:, 1]
        table.delta = data[:, 2]
        tail = data[:, 3:]
        re = tail[:, 0::2]
        im = tail[:, 1::2]
        table.psi = (re + 1j * im).reshape(data.shape[0], nh + 1, n_dof)
        table.provenance = meta.get("provenance", {})
        table._interp = None
        expected = table._column_names()
        if header != expected:
            raise IncompatibleArtifactsError(f"{path}: unexpected table columns")
        return table


def _meta_path(path):
    path = Path(path)
    if path.suffix == ".csv":
        return path.with_suffix(".meta.json")
    return Path(str(path) + ".meta.json")


def interpolate(table, a):
    """Module-level alias for :meth:`ModalTable.interpolate`."""
    return table.interpolate(a)


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

def _phase_shift_pi(psi):
    orders = np.arange(psi.shape[0])
    return psi * np.power(-1.0, orders)[:, None]


def continue_modal_table(model, config):
    """Sweep the amplitude grid, seeding each solve from its neighbor.

    Newton failures trigger geometric step halving down to a relative floor;
    if the floor is hit, a :class:`PartialTableError` carrying the converged
    prefix is raised.
    """
    grid = config.amplitude_grid
    seed = linearized_eigenpair(model, config.mode_index,
                                config.harmonic.n_harmonics)
    results = []
    remaining = deque(grid)
    mass = model.mass

    def guess_for(a_target):
        if len(results) >= 2:
            p0, p1 = results[-2], results[-1]
            x0 = _pack(p0.omega0, p0.delta, p0.harmonics.coefficients)
            x1 = _pack(p1.omega0, p1.delta, p1.harmonics.coefficients)
            w = (a_target - p1.a) / (p1.a - p0.a)
            w = min(w, 2.0)
            x = x1 + w * (x1 - x0)
            omega0, delta, psi = _unpack(x, config.harmonic.n_harmonics,
                                         model.n_dof)
            if omega0 > 0.0 and abs(delta) < 1.0:
                return Eigenpair(a_target, omega0, delta, HarmonicSet(psi))
        if results:
            return results[-1]
        return seed

    while remaining:
        a_target = float(remaining[0])
        try:
            pair = solve_eigenpair(model, a_target, guess_for(a_target), config)
        except (ConvergenceError, OverdampedModeError) as err:
            a_ref = results[-1].a if results else 0.0
            if a_ref > 0.0:
                if (a_target - a_ref) <= config.min_rel_step * a_target:
                    raise PartialTableError(
                        f"continuation stalled between a={a_ref:g} and "
                        f"a={a_target:g}",
                        _table_from(results, model, config),
                        diagnostics={"failed_amplitude": a_target,
                                     "cause": str(err)},
                    ) from err
                remaining.appendleft(math.sqrt(a_ref * a_target))
            else:
                if a_target <= grid[0] * 1e-3:
                    raise PartialTableError(
                        f"no convergence at the smallest amplitude a={a_target:g}",
                        None,
                        diagnostics={"failed_amplitude": a_target,
                                     "cause": str(err)},
                    ) from err
                remaining.appendleft(0.5 * a_target)
            continue
        if results:
            align = np.real(
                np.conj(results[-1].psi1) @ mass @ pair.psi1
            )
            if align < 0.0:
                pair = Eigenpair(
                    pair.a, pair.omega0, pair.delta,
                    HarmonicSet(_phase_shift_pi(pair.harmonics.coefficients)),
                )
        results.append(pair)
        remaining.popleft()

    return _table_from(results, model, config)


def _table_from(results, model, config):
    if not results:
        return None
    provenance = {
        "model_hash": model.surrogate_hash(),
        "mode_index": config.mode_index,
        "n_harmonics": config.harmonic.n_harmonics,
        "n_samples": config.harmonic.n_samples,
        "newton_tol": config.newton_tol,
    }
    return ModalTable.from_entries(results, provenance)


# ---------------------------------------------------------------------------
# Coulomb scaling study
# ---------------------------------------------------------------------------

def scaling_check_coulomb(model, r_values, config):
    """Verify that Coulomb tables collapse onto (a/R, omega0) and (a/R, delta).

    The model's only nonlinearities must be Coulomb elements; the smoothing
    velocity is scaled with the limit force and the amplitude grid with R, so
    the scaled problems are mathematically identical.
    """
    from .model import CoulombTanh, MechanicalModel, NonlinearElement

    laws = [el.law for el in model.elements]
    if not laws or not all(isinstance(law, CoulombTanh) for law in laws):
        raise ConfigError("scaling check requires a pure Coulomb model")
    r_base = laws[0].limit_force
    base_grid = config.amplitude_grid / 1.0

    tables = []
    for r in r_values:
        scale = r / r_base
        elements = [
            NonlinearElement(
                law=CoulombTanh(limit_force=el.law.limit_force * scale,
                                smoothing=el.law.smoothing * scale),
                input_dof=el.input_dof,
                force_map=el.force_map,
            )
            for el in model.elements
        ]
        scaled = MechanicalModel(
            mass=model.mass, stiffness=model.base_stiffness,
            elements=elements,
        )
        cfg = NmaConfig(
            harmonic=config.harmonic,
            amplitude_grid=base_grid * scale,
            mode_index=config.mode_index,
            newton_tol=config.newton_tol,
            max_iter=config.max_iter,
        )
        tables.append((r, continue_modal_table(scaled, cfg)))

    r0, t0 = tables[0]
    normalized = t0.a / r0
    report = {
        "r_values": [float(r) for r, _ in tables],
        "normalized_amplitudes": normalized,
        "omega0_max_dev": 0.0,
        "delta_max_dev": 0.0,
        "tables": [t for _, t in tables],
    }
    for r, t in tables[1:]:
        om, de, _ = t.interpolate_many(normalized * r)
        om0, de0, _ = t0.interpolate_many(normalized * r0)
        report["omega0_max_dev"] = max(report["omega0_max_dev"],
                                       float(np.max(np.abs(om - om0))))
        report["delta_max_dev"] = max(report["delta_max_dev"],
                                      float(np.max(np.abs(de - de0))))
    return report
