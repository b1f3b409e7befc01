"""Mechanical system definitions and pointwise nonlinear force evaluation.

A :class:`MechanicalModel` holds the mass matrix, the base stiffness of the
autonomous surrogate system, optional weak perturbation matrices (extra
stiffness and damping that only enter the reduced order model and the
reference integrator), a list of nonlinear elements and an optional forcing
specification.  The autonomous surrogate force is

    f(u, v) = K u + sum over elements of w_e * f_e(u[dof_e], v[dof_e])

where ``w_e`` is the signed incidence vector of the element.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError

__all__ = [
    "CubicSpring",
    "CoulombTanh",
    "UnilateralSpring",
    "DahlFriction",
    "VanDerPolDamper",
    "NonlinearElement",
    "ConstantFrequency",
    "LinearSweep",
    "ForcingSpec",
    "MechanicalModel",
    "eval_nonlinear_force",
    "load_model",
    "model_to_dict",
]


# ---------------------------------------------------------------------------
# element force laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CubicSpring:
    """Cubic restoring force ``f = coefficient * u**3``."""

    coefficient: float

    kind = "cubic_spring"
    has_state = False

    def validate(self):
        if self.coefficient < 0.0:
            raise ConfigError("cubic spring coefficient must be >= 0")

    def force(self, u, v):
        return self.coefficient * u**3

    # slopes of the force law at the origin, used to linearize the model
    def stiffness_slope(self):
        return 0.0

    def damping_slope(self):
        return 0.0

    # slope used when counting/ordering modes; see MechanicalModel.linear_modes
    def mode_count_stiffness(self):
        return 0.0

    def params(self):
        return {"coefficient": self.coefficient}


@dataclass(frozen=True)
class CoulombTanh:
    """Regularized Coulomb friction ``f = limit_force * tanh(v / smoothing)``."""

    limit_force: float
    smoothing: float

    kind = "coulomb_tanh"
    has_state = False

    def validate(self):
        if self.limit_force <= 0.0:
            raise ConfigError("friction limit force must be > 0")
        if self.smoothing <= 0.0:
            raise ConfigError("friction smoothing velocity must be > 0")

    def force(self, u, v):
        return self.limit_force * np.tanh(v / self.smoothing)

    def stiffness_slope(self):
        return 0.0

    def damping_slope(self):
        return self.limit_force / self.smoothing

    def mode_count_stiffness(self):
        # Stuck-limit penalty: pins the contact DOF so that mode ordering
        # matches the low-amplitude (fully stuck) system.
        return self.limit_force / self.smoothing

    def params(self):
        return {"limit_force": self.limit_force, "smoothing": self.smoothing}


@dataclass(frozen=True)
class UnilateralSpring:
    """Preloaded unilateral contact.

    In contact (``stiffness * u >= -preload``) the force is ``stiffness * u``;
    during lift-off it saturates at ``-preload``.  Continuous at the lift-off
    point.
    """

    stiffness: float
    preload: float

    kind = "unilateral_spring"
    has_state = False

    def validate(self):
        if self.stiffness < 0.0:
            raise ConfigError("unilateral spring stiffness must be >= 0")
        if self.preload < 0.0:
            raise ConfigError("unilateral spring preload must be >= 0")

    def force(self, u, v):
        return np.maximum(self.stiffness * u, -self.preload)

    def stiffness_slope(self):
        # preloaded contact is closed at rest
        return self.stiffness

    def damping_slope(self):
        return 0.0

    def mode_count_stiffness(self):
        return self.stiffness

    def params(self):
        return {"stiffness": self.stiffness, "preload": self.preload}


@dataclass(frozen=True)
class DahlFriction:
    """Dahl hysteresis; the force is an internal state with its own ODE.

    ``fdot = stiffness * (1 - (f / limit_force) * sign(v))**shape * v``
    with ``|f| <= limit_force`` for ``shape >= 1``.
    """

    stiffness: float
    limit_force: float
    shape: float = 1.0

    kind = "dahl"
    has_state = True

    def validate(self):
        if self.stiffness <= 0.0:
            raise ConfigError("Dahl stiffness must be > 0")
        if self.limit_force <= 0.0:
            raise ConfigError("Dahl limit force must be > 0")
        if self.shape <= 0.0:
            raise ConfigError("Dahl shape exponent must be > 0")

    def force_rate(self, f, v):
        base = 1.0 - (f / self.limit_force) * np.sign(v)
        if self.shape == 1.0:
            return self.stiffness * base * v
        return self.stiffness * np.maximum(base, 0.0) ** self.shape * v

    def stiffness_slope(self):
        return self.stiffness

    def damping_slope(self):
        return 0.0

    def mode_count_stiffness(self):
        return self.stiffness

    def params(self):
        return {
            "stiffness": self.stiffness,
            "limit_force": self.limit_force,
            "shape": self.shape,
        }


@dataclass(frozen=True)
class VanDerPolDamper:
    """Self-excitation element ``f = (cubic_rate * u**2 - linear_rate) * v``.

    Negative damping at small motion, positive beyond
    ``u = sqrt(linear_rate / cubic_rate)``; produces limit cycles.
    """

    linear_rate: float
    cubic_rate: float

    kind = "van_der_pol"
    has_state = False

    def validate(self):
        if self.linear_rate < 0.0:
            raise ConfigError("van der Pol linear rate must be >= 0")
        if self.cubic_rate < 0.0:
            raise ConfigError("van der Pol cubic rate must be >= 0")

    def force(self, u, v):
        return (self.cubic_rate * u**2 - self.linear_rate) * v

    def stiffness_slope(self):
        return 0.0

    def damping_slope(self):
        return -self.linear_rate

    def mode_count_stiffness(self):
        return 0.0

    def params(self):
        return {"linear_rate": self.linear_rate, "cubic_rate": self.cubic_rate}


_LAW_CLASSES = {
    cls.kind: cls
    for cls in (CubicSpring, CoulombTanh, UnilateralSpring, DahlFriction, VanDerPolDamper)
}


@dataclass(frozen=True)
class NonlinearElement:
    """A scalar force law attached to one DOF of the model.

    ``input_dof`` selects the displacement/velocity that drives the law;
    ``force_map`` scatters the scalar force into the global force vector
    (defaults to the unit vector at ``input_dof``).
    """

    law: object
    input_dof: int
    force_map: tuple = None

    def resolved_force_map(self, n_dof):
        if self.force_map is None:
            w = np.zeros(n_dof)
            w[self.input_dof] = 1.0
            return w
        w = np.asarray(self.force_map, dtype=float)
        if w.shape != (n_dof,):
            raise ConfigError(
                f"force_map has shape {w.shape}, expected ({n_dof},)"
            )
        return w


def eval_nonlinear_force(element, u_in, v_in, state=None):
    """Evaluate one element force at a single (u, v) sample.

    Returns ``(force, aux)``.  For algebraic laws ``aux`` is None.  For Dahl
    friction the force equals the internal state and ``aux`` is its rate
    ``fdot`` for state integration; a ``state`` value is then required and
    must satisfy ``|state| <= limit_force``.
    """
    law = element.law
    if law.has_state:
        if state is None:
            raise ConfigError("Dahl friction requires an internal state value")
        if abs(state) > law.limit_force * (1.0 + 1e-12):
            raise ConfigError(
                f"Dahl state {state!r} exceeds the limit force {law.limit_force!r}"
            )
        return float(state), float(law.force_rate(state, v_in))
    return float(law.force(u_in, v_in)), None


# ---------------------------------------------------------------------------
# forcing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantFrequency:
    """Harmonic forcing phase program ``phi_e = frequency * t``."""

    frequency: float

    def validate(self, t_end=None):
        if self.frequency <= 0.0:
            raise ConfigError("forcing frequency must be > 0")

    def phase(self, t):
        return self.frequency * np.asarray(t, dtype=float)

    def instantaneous_frequency(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.frequency)


@dataclass(frozen=True)
class LinearSweep:
    """Sweep phase program ``phi_e = start*t + rate*t**2/2`` (rate of either sign).

    The instantaneous frequency may be zero at an isolated endpoint (run-ups
    start from zero frequency) but must not go negative over the span.
    """

    start: float
    rate: float

    def validate(self, t_end=None):
        if self.start < 0.0:
            raise ConfigError("sweep start frequency must be >= 0")
        if t_end is not None:
            ts = np.array([0.0, t_end])
            freqs = self.instantaneous_frequency(ts)
            if np.any(freqs < 0.0) or np.all(freqs == 0.0):
                raise ConfigError(
                    "sweep instantaneous frequency must stay >= 0 over the "
                    "span and be positive somewhere"
                )

    def phase(self, t):
        t = np.asarray(t, dtype=float)
        return self.start * t + 0.5 * self.rate * t**2

    def instantaneous_frequency(self, t):
        return self.start + self.rate * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class ForcingSpec:
    """Amplitude vector and phase program of the external forcing."""

    amplitude: tuple
    program: object

    def amplitude_vector(self, n_dof):
        fhat = np.asarray(self.amplitude, dtype=float)
        if fhat.shape != (n_dof,):
            raise ConfigError(
                f"forcing amplitude has shape {fhat.shape}, expected ({n_dof},)"
            )
        return fhat


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def _check_symmetric(name, a, n):
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise ConfigError(f"{name} has shape {a.shape}, expected ({n}, {n})")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ConfigError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


class MechanicalModel:
    """Immutable container for matrices, elements and forcing.

    Parameters
    ----------
    mass : (n, n) array
        Symmetric positive definite mass matrix.
    stiffness : (n, n) array
        Base stiffness of the autonomous surrogate system (part of f).
    extra_stiffness, extra_damping : (n, n) array or None
        Weak symmetric perturbation matrices; ``extra_damping`` may be
        indefinite (self-excitation).  Both stay outside the surrogate.
    elements : sequence of NonlinearElement
    forcing : ForcingSpec or None
    """

    def __init__(self, mass, stiffness, extra_stiffness=None, extra_damping=None,
                 elements=(), forcing=None):
        mass = np.asarray(mass, dtype=float)
        if mass.ndim != 2 or mass.shape[0] != mass.shape[1]:
            raise ConfigError("mass matrix must be square")
        n = mass.shape[0]
        self.n_dof = n
        self.mass = _check_symmetric("mass", mass, n)
        try:
            self._mass_cho = sla.cho_factor(self.mass)
        except sla.LinAlgError as exc:
            raise ConfigError("mass matrix must be positive definite") from exc
        self.base_stiffness = _check_symmetric("stiffness", stiffness, n)
        self.extra_stiffness = (
            np.zeros((n, n)) if extra_stiffness is None
            else _check_symmetric("extra_stiffness", extra_stiffness, n)
        )
        self.extra_damping = (
            np.zeros((n, n)) if extra_damping is None
            else _check_symmetric("extra_damping", extra_damping, n)
        )
        self.elements = tuple(elements)
        for el in self.elements:
            el.law.validate()
            if not 0 <= el.input_dof < n:
                raise ConfigError(
                    f"element DOF {el.input_dof} outside [0, {n})"
                )
            el.resolved_force_map(n)
        self.forcing = forcing
        if forcing is not None:
            forcing.amplitude_vector(n)
            forcing.program.validate()
        self._force_maps = [el.resolved_force_map(n) for el in self.elements]

    # -- forces -------------------------------------------------------------

    @property
    def dahl_elements(self):
        return [el for el in self.elements if el.law.has_state]

    @property
    def n_dahl(self):
        return len(self.dahl_elements)

    def assemble_force_vector(self, u, v, dahl_states=None):
        """Surrogate force ``f(u, v) = K u + element forces`` at one sample.

        ``dahl_states`` supplies the internal force of every Dahl element in
        model order.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        f = self.base_stiffness @ u
        i_dahl = 0
        for el, w in zip(self.elements, self._force_maps):
            if el.law.has_state:
                if dahl_states is None:
                    raise ConfigError("model has Dahl elements; states required")
                fe = float(dahl_states[i_dahl])
                i_dahl += 1
            else:
                fe = float(el.law.force(u[el.input_dof], v[el.input_dof]))
            f = f + w * fe
        return f

    def solve_mass(self, b):
        """Solve ``M x = b`` with the cached Cholesky factorization."""
        return sla.cho_solve(self._mass_cho, b)

    # -- linearizations -------------------------------------------------------

    def linear_modes(self):
        """Undamped modes of the low-amplitude limit, for seeding and ordering.

        The stiffness is the base matrix plus per-element slopes at the
        origin (cubic: 0, unilateral: contact stiffness, Dahl: initial slope,
        Coulomb: stuck-limit penalty ``limit_force / smoothing``).  Returns
        ascending frequencies and mass-normalized real shapes.
        """
        # per-element slope acts between the input DOF and ground through the
        # force map: f += w * s * u[input_dof]
        k = self.base_stiffness.copy()
        for el, w in zip(self.elements, self._force_maps):
            s = el.law.mode_count_stiffness()
            if s:
                e_in = np.zeros(self.n_dof)
                e_in[el.input_dof] = 1.0
                k = k + s * np.outer(w, e_in)
        k = 0.5 * (k + k.T)
        w2, phi = sla.eigh(k, self.mass)
        w2 = np.clip(w2, 0.0, None)  # rigid-body modes report as omega = 0
        return np.sqrt(w2), phi

    def linearized_operators(self):
        """Tangent stiffness and damping of the surrogate force at the origin.

        Unlike :meth:`linear_modes`, velocity-driven laws contribute to the
        damping matrix here (Coulomb: ``limit_force/smoothing``, van der Pol:
        ``-linear_rate``), which is what the modal analysis converges to as
        the amplitude goes to zero.
        """
        k = self.base_stiffness.copy()
        c = np.zeros_like(k)
        for el, w in zip(self.elements, self._force_maps):
            e_in = np.zeros(self.n_dof)
            e_in[el.input_dof] = 1.0
            ks = el.law.stiffness_slope()
            cs = el.law.damping_slope()
            if ks:
                k = k + ks * np.outer(w, e_in)
            if cs:
                c = c + cs * np.outer(w, e_in)
        return 0.5 * (k + k.T), 0.5 * (c + c.T)

    # -- hashing / serialization ----------------------------------------------

    def surrogate_hash(self):
        """Hash of the autonomous surrogate (M, K, elements).

        Modal tables depend only on the surrogate, so reduced order model
        variants that differ in extra stiffness/damping/forcing share it.
        """
        return _digest(self._surrogate_dict())

    def full_hash(self):
        return _digest(model_to_dict(self))

    def _surrogate_dict(self):
        return {
            "dofs": self.n_dof,
            "mass": _matrix_list(self.mass),
            "stiffness": _matrix_list(self.base_stiffness),
            "elements": [_element_dict(el) for el in self.elements],
        }


def _matrix_list(a):
    return [[float(x) for x in row] for row in np.asarray(a)]


def _element_dict(el):
    d = {"kind": el.law.kind, "dof": el.input_dof}
    d.update(el.law.params())
    if el.force_map is not None:
        d["force_map"] = [float(x) for x in el.force_map]
    return d


def _digest(obj):
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

_MODEL_KEYS = {
    "dofs", "mass", "stiffness", "extra_stiffness", "extra_damping",
    "elements", "forcing",
}
_ELEMENT_KEYS = {
    "cubic_spring": {"kind", "dof", "force_map", "coefficient"},
    "coulomb_tanh": {"kind", "dof", "force_map", "limit_force", "smoothing"},
    "unilateral_spring": {"kind", "dof", "force_map", "stiffness", "preload"},
    "dahl": {"kind", "dof", "force_map", "stiffness", "limit_force", "shape"},
    "van_der_pol": {"kind", "dof", "force_map", "linear_rate", "cubic_rate"},
}


def _resolve_matrix(entry, name, n, mass, stiffness):
    if entry is None:
        return None
    if isinstance(entry, dict):
        unknown = set(entry) - {"proportional"}
        if unknown:
            raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
        spec = entry.get("proportional")
        if not isinstance(spec, dict) or set(spec) != {"matrix", "factor"}:
            raise ConfigError(
                f"{name}.proportional needs exactly 'matrix' and 'factor'"
            )
        base = {"mass": mass, "stiffness": stiffness}.get(spec["matrix"])
        if base is None:
            raise ConfigError(
                f"{name}.proportional.matrix must be 'mass' or 'stiffness'"
            )
        return float(spec["factor"]) * base
    a = np.asarray(entry, dtype=float)
    if a.shape != (n, n):
        raise ConfigError(f"{name} has shape {a.shape}, expected ({n}, {n})")
    return a


def _parse_element(entry):
    if "kind" not in entry:
        raise ConfigError("element entry is missing 'kind'")
    kind = entry["kind"]
    if kind not in _ELEMENT_KEYS:
        raise ConfigError(f"unknown element kind {kind!r}")
    unknown = set(entry) - _ELEMENT_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for element {kind!r}: {sorted(unknown)}")
    if "dof" not in entry:
        raise ConfigError(f"element {kind!r} is missing 'dof'")
    params = {
        key: float(value)
        for key, value in entry.items()
        if key not in ("kind", "dof", "force_map")
    }
    law = _LAW_CLASSES[kind](**params)
    force_map = entry.get("force_map")
    if force_map is not None:
        force_map = tuple(float(x) for x in force_map)
    return NonlinearElement(law=law, input_dof=int(entry["dof"]), force_map=force_map)


def _parse_forcing(entry, n):
    if entry is None:
        return None
    unknown = set(entry) - {"amplitude", "phase"}
    if unknown:
        raise ConfigError(f"unknown keys in forcing: {sorted(unknown)}")
    if "amplitude" not in entry or "phase" not in entry:
        raise ConfigError("forcing needs 'amplitude' and 'phase'")
    phase = entry["phase"]
    ptype = phase.get("type")
    if ptype == "constant_frequency":
        unknown = set(phase) - {"type", "frequency"}
        if unknown:
            raise ConfigError(f"unknown keys in forcing phase: {sorted(unknown)}")
        program = ConstantFrequency(frequency=float(phase["frequency"]))
    elif ptype == "linear_sweep":
        unknown = set(phase) - {"type", "start", "rate"}
        if unknown:
            raise ConfigError(f"unknown keys in forcing phase: {sorted(unknown)}")
        program = LinearSweep(start=float(phase["start"]), rate=float(phase["rate"]))
    else:
        raise ConfigError(
            "forcing phase type must be 'constant_frequency' or 'linear_sweep'"
        )
    return ForcingSpec(amplitude=tuple(float(x) for x in entry["amplitude"]),
                       program=program)


def load_model(source):
    """Build a model from a definition file path or an equivalent dict."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("model definition must be a JSON object")
    unknown = set(data) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in model definition: {sorted(unknown)}")
    for key in ("dofs", "mass", "stiffness"):
        if key not in data:
            raise ConfigError(f"model definition is missing {key!r}")
    n = int(data["dofs"])
    mass = np.asarray(data["mass"], dtype=float)
    if mass.shape != (n, n):
        raise ConfigError(f"mass has shape {mass.shape}, expected ({n}, {n})")
    stiffness = np.asarray(data["stiffness"], dtype=float)
    if stiffness.shape != (n, n):
        raise ConfigError(f"stiffness has shape {stiffness.shape}, expected ({n}, {n})")
    extra_k = _resolve_matrix(data.get("extra_stiffness"), "extra_stiffness",
                              n, mass, stiffness)
    extra_c = _resolve_matrix(data.get("extra_damping"), "extra_damping",
                              n, mass, stiffness)
    elements = [_parse_element(e) for e in data.get("elements", [])]
    forcing = _parse_forcing(data.get("forcing"), n)
    return MechanicalModel(mass=mass, stiffness=stiffness,
                           extra_stiffness=extra_k, extra_damping=extra_c,
                           elements=elements, forcing=forcing)


def model_to_dict(model):
    """Round-trippable plain-data form of a model."""
    d = {
        "dofs": model.n_dof,
        "mass": _matrix_list(model.mass),
        "stiffness": _matrix_list(model.base_stiffness),
        "elements": [_element_dict(el) for el in model.elements],
    }
    if np.any(model.extra_stiffness):
        d["extra_stiffness"] = _matrix_list(model.extra_stiffness)
    if np.any(model.extra_damping):
        d["extra_damping"] = _matrix_list(model.extra_damping)
    if model.forcing is not None:
        program = model.forcing.program
        if isinstance(program, ConstantFrequency):
            phase = {"type": "constant_frequency", "frequency": program.frequency}
        else:
            phase = {"type": "linear_sweep", "start": program.start,
                     "rate": program.rate}
        d["forcing"] = {"amplitude": list(model.forcing.amplitude), "phase": phase}
    return d


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
