"""Domain types: states, potentials, damping laws, energies and vector fields.

Everything here is immutable after construction.  States are plain 1-D
float64 numpy arrays flagged read-only; the helpers below validate them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import NonFiniteValue, ParameterViolation

StateVector = np.ndarray

DEFAULT_FD_STEP = 1e-5


def as_state(x, dimension: Optional[int] = None) -> StateVector:
    """Return ``x`` as a finite, read-only 1-D float array."""
    arr = np.array(x, dtype=float, ndmin=1).reshape(-1)
    if dimension is not None and arr.size != dimension:
        raise ParameterViolation(f"expected a state of dimension {dimension}, got {arr.size}")
    if arr.size < 1:
        raise ParameterViolation("states must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"state has non-finite entries: {arr}")
    arr.setflags(write=False)
    return arr


def _default_step(potential_step: float, point: np.ndarray) -> float:
    return potential_step * (1.0 + float(np.linalg.norm(point)))


def _checked(value, where) -> float:
    v = float(value)
    if not np.isfinite(v):
        raise NonFiniteValue(f"potential is non-finite at {where}")
    return v


@dataclass(frozen=True)
class Potential:
    """Scalar field on R^n with optional closed-form gradient and Hessian.

    Without a closed form, :meth:`grad` and :meth:`hess` fall back to
    central differences of ``value`` with step ``fd_step * (1 + |x|)``.
    """

    dimension: int
    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = DEFAULT_FD_STEP
    label: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise ParameterViolation("potential dimension must be >= 1")
        if not self.fd_step > 0:
            raise ParameterViolation("fd_step must be positive")

    def __call__(self, u) -> float:
        return float(self.value(np.asarray(u, dtype=float)))

    def grad(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.gradient is not None:
            return np.asarray(self.gradient(u), dtype=float).reshape(-1)
        return grad_fd(self, u)

    def hess(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.hessian is not None:
            h = np.asarray(self.hessian(u), dtype=float).reshape(self.dimension, self.dimension)
            return 0.5 * (h + h.T)
        return hessian_fd(self, u)

    def scaled(self, factor: float) -> "Potential":
        """The potential ``factor * self`` (closed forms are carried over)."""
        g = self.gradient
        h = self.hessian
        return Potential(
            self.dimension,
            lambda u: factor * self.value(u),
            None if g is None else (lambda u: factor * np.asarray(g(u), dtype=float)),
            None if h is None else (lambda u: factor * np.asarray(h(u), dtype=float)),
            self.fd_step,
            f"{factor}*({self.label})",
        )


def grad_fd(potential: Potential, point, step: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of ``potential`` at ``point``."""
    x = np.asarray(point, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("grad_fd called at a non-finite point")
    h = _default_step(potential.fd_step, x) if step is None else float(step)
    if not h > 0:
        raise ParameterViolation("finite-difference step must be positive")
    out = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        fp = _checked(potential.value(x + e), x + e)
        fm = _checked(potential.value(x - e), x - e)
        out[i] = (fp - fm) / (2.0 * h)
        e[i] = 0.0
    return out


def hessian_fd(potential: Potential, point, step: Optional[float] = None) -> np.ndarray:
    """Second-order central-difference Hessian, symmetrized by averaging."""
    x = np.asarray(point, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("hessian_fd called at a non-finite point")
    h = _default_step(potential.fd_step, x) if step is None else float(step)
    # second differences lose two digits more than first ones
    h = max(h, 10.0 * _default_step(potential.fd_step, x)) if step is None else h
    n = x.size
    f0 = _checked(potential.value(x), x)
    H = np.empty((n, n))
    eye = np.eye(n) * h

    def f(y):
        return _checked(potential.value(y), y)

    for i in range(n):
        H[i, i] = (f(x + eye[i]) - 2.0 * f0 + f(x - eye[i])) / h**2
        for j in range(i + 1, n):
            v = (f(x + eye[i] + eye[j]) - f(x + eye[i] - eye[j])
                 - f(x - eye[i] + eye[j]) + f(x - eye[i] - eye[j])) / (4.0 * h**2)
            H[i, j] = H[j, i] = v
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class DampingLaw:
    """Velocity-dependent friction ``g``.

    ``kind`` is ``"linear"`` (``c v``), ``"power"`` (``c |v|^alpha v``) or
    ``"custom"`` (an arbitrary map).
    """

    kind: str
    exponent: float = 0.0
    coefficient: float = 1.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("linear", "power", "custom"):
            raise ParameterViolation(f"unknown damping kind {self.kind!r}")
        if self.kind == "power" and (self.exponent < 0 or not self.coefficient > 0):
            raise ParameterViolation("power-law damping needs exponent >= 0 and coefficient > 0")
        if self.kind == "custom" and self.func is None:
            raise ParameterViolation("custom damping needs a function")

    @classmethod
    def linear(cls, coefficient: float = 1.0) -> "DampingLaw":
        return cls("linear", 0.0, coefficient)

    @classmethod
    def power_law(cls, exponent: float, coefficient: float = 1.0) -> "DampingLaw":
        return cls("power", exponent, coefficient)

    @classmethod
    def custom(cls, func, dimension: int = 1, seed: int = 0) -> "DampingLaw":
        law = cls("custom", func=func)
        margin = law.dissipativity_margin(dimension, seed=seed)
        if margin < 0:
            warnings.warn(
                f"custom damping law is not dissipative on the probe set (min <g(v),v> = {margin:.3e})",
                stacklevel=2,
            )
        return law

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "linear":
            return self.coefficient * v
        if self.kind == "power":
            nv = math.sqrt(float(np.dot(v.ravel(), v.ravel())))
            if nv == 0.0:
                return np.zeros_like(v)
            return self.coefficient * nv**self.exponent * v
        return np.asarray(self.func(v), dtype=float)

    def jacobian(self, v) -> Optional[np.ndarray]:
        """Closed-form ``Dg(v)``; ``None`` for custom laws."""
        v = np.asarray(v, dtype=float).reshape(-1)
        n = v.size
        if self.kind == "linear":
            return self.coefficient * np.eye(n)
        if self.kind == "custom":
            return None
        a = self.exponent
        nv = math.sqrt(float(np.dot(v, v)))
        if nv == 0.0:
            return self.coefficient * np.eye(n) if a == 0 else np.zeros((n, n))
        return self.coefficient * (nv**a * np.eye(n) + a * nv ** (a - 2) * np.outer(v, v))

    def dissipativity_margin(self, dimension: int, n_probe: int = 64, seed: int = 0) -> float:
        """Smallest ``<g(v), v>`` over a seeded probe set in [-2, 2]^n."""
        rng = np.random.default_rng(seed)
        probes = rng.uniform(-2.0, 2.0, size=(n_probe, dimension))
        return float(min(np.dot(self(v), v) for v in probes))


@dataclass(frozen=True)
class EnergyFunctional:
    """Real-valued functional of the full system state.

    For second-order systems the state is the concatenation ``(u, v)`` and
    ``arity`` is ``"state_velocity"``.
    """

    value: Callable[[np.ndarray], float]
    label: str
    arity: str = "state"

    def __post_init__(self):
        if self.arity not in ("state", "state_velocity"):
            raise ParameterViolation(f"unknown arity {self.arity!r}")

    def __call__(self, state) -> float:
        return float(self.value(np.asarray(state, dtype=float)))

    def series(self, states) -> np.ndarray:
        return np.array([self(s) for s in np.atleast_2d(states)])


@dataclass(frozen=True)
class FirstOrderSystem:
    """Autonomous system ``u' = field(u)``.

    ``field`` returns the complete right-hand side; builders bake in signs.
    ``max_step`` is an optional step ceiling the system asks integrators to
    respect (used by stiff-ish discretizations), and ``projection`` names the
    two coordinates used for planar diagnostics.
    """

    dimension: int
    field: Callable[[np.ndarray], np.ndarray]
    energies: tuple = ()
    metadata: Mapping = dc_field(default_factory=dict)
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    max_step: Optional[float] = None
    projection: tuple = (0, 1)

    def __post_init__(self):
        if self.dimension < 1:
            raise ParameterViolation("system dimension must be >= 1")
        object.__setattr__(self, "energies", tuple(self.energies))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def __call__(self, u) -> np.ndarray:
        return np.asarray(self.field(np.asarray(u, dtype=float)), dtype=float).reshape(-1)

    def energy(self, label: str) -> EnergyFunctional:
        for e in self.energies:
            if e.label == label:
                return e
        raise KeyError(label)

    def with_energies(self, *extra: EnergyFunctional) -> "FirstOrderSystem":
        return FirstOrderSystem(self.dimension, self.field, self.energies + tuple(extra),
                                dict(self.metadata), self.jacobian, self.max_step, self.projection)


def check_gradient(potential: Potential, probes: Sequence, step: Optional[float] = None) -> float:
    """Max deviation between the closed-form gradient and :func:`grad_fd`."""
    if potential.gradient is None:
        return 0.0
    worst = 0.0
    for p in probes:
        p = np.asarray(p, dtype=float).reshape(-1)
        d = np.linalg.norm(np.asarray(potential.gradient(p)) - grad_fd(potential, p, step))
        worst = max(worst, float(d))
    return worst
