"""Builders for the concrete model systems and a named gallery of them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .core import DampingLaw, EnergyFunctional, FirstOrderSystem, Potential, as_state
from .errors import DomainExit, ParameterViolation, UnknownName

# ---------------------------------------------------------------------------
# potentials


def polynomial_potential(terms: Sequence, dimension: Optional[int] = None, label: str = "") -> Potential:
    """Multivariate polynomial from ``(coefficient, exponents)`` pairs.

    ``exponents`` is a tuple of non-negative integers, one per coordinate.
    Gradient and Hessian are exact.
    """
    coefs = np.array([float(c) for c, _ in terms])
    exps = np.array([list(e) for _, e in terms], dtype=int).reshape(len(terms), -1)
    n = exps.shape[1] if dimension is None else dimension
    if exps.shape[1] != n:
        raise ParameterViolation("exponent tuples must match the dimension")
    if np.any(exps < 0):
        raise ParameterViolation("exponents must be non-negative integers")

    eye = np.eye(n, dtype=int)
    # d/du_i lowers exponent i by one; the coefficient e_i kills absent terms
    g_exps = np.maximum(exps[None, :, :] - eye[:, None, :], 0)
    g_coefs = coefs[None, :] * exps.T
    h_exps = np.maximum(g_exps[:, None, :, :] - eye[None, :, None, :], 0)
    h_coefs = g_coefs[:, None, :] * np.transpose(g_exps, (0, 2, 1))

    def value(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return float(coefs @ np.prod(u ** exps, axis=-1))

    def gradient(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return np.einsum("it,it->i", g_coefs, np.prod(u ** g_exps, axis=-1))

    def hessian(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return np.einsum("ijt,ijt->ij", h_coefs, np.prod(u ** h_exps, axis=-1))

    return Potential(n, value, gradient, hessian, label=label or "polynomial")


def power_potential(exponent: float, coefficient: float = 1.0) -> Potential:
    """Scalar ``coefficient * |u|^exponent`` with closed-form derivatives."""
    q = float(exponent)
    if q < 2:
        raise ParameterViolation("power potentials need exponent >= 2 for a C^2 field")
    c = float(coefficient)
    return Potential(
        1,
        lambda u: c * abs(float(np.ravel(u)[0])) ** q,
        lambda u: np.array([c * q * abs(u[0]) ** (q - 2) * u[0]]),
        lambda u: np.array([[c * q * (q - 1) * abs(u[0]) ** (q - 2)]]),
        label=f"{c}|u|^{q}",
    )


def double_well() -> Potential:
    """``u^4/4 - u^2/2``."""
    return polynomial_potential([(0.25, (4,)), (-0.5, (2,))], label="u^4/4-u^2/2")


# underflow guard for exp(-w)
_MAX_EXPONENT = 745.0


def _pd_pieces(r, k):
    s = 1.0 - r * r
    w = s ** (-k)
    D = 4.0 * k * k * r**4 + s ** (2 * k + 2)
    A = 4.0 * k * k * r**4 / D
    return s, w, D, A


def palis_demelo_potential(k: int = 1) -> Potential:
    """Smooth planar potential whose gradient flow spirals onto the unit circle.

    In polar form it is ``exp(-w) (1 - A(r) sin(theta - w))`` with
    ``w = (1 - r^2)^{-k}`` and ``A = 4k^2 r^4 / (4k^2 r^4 + (1-r^2)^{2k+2})``
    inside the unit disc, and zero outside.
    """
    if int(k) != k or k < 1:
        raise ParameterViolation("k must be a positive integer")
    k = int(k)

    def value(p):
        x, y = float(p[0]), float(p[1])
        r = math.hypot(x, y)
        if r >= 1.0:
            return 0.0
        s, w, D, A = _pd_pieces(r, k)
        if w > _MAX_EXPONENT:
            return 0.0
        th = math.atan2(y, x)
        return math.exp(-w) * (1.0 - A * math.sin(th - w))

    def gradient(p):
        x, y = float(p[0]), float(p[1])
        r = math.hypot(x, y)
        if r >= 1.0 or r == 0.0:
            return np.zeros(2)
        s, w, D, A = _pd_pieces(r, k)
        if w > _MAX_EXPONENT:
            return np.zeros(2)
        E = math.exp(-w)
        th = math.atan2(y, x)
        psi = th - w
        sn, cs = math.sin(psi), math.cos(psi)
        w_r = 2.0 * k * r * s ** (-k - 1)
        D_r = 16.0 * k * k * r**3 - 4.0 * (k + 1) * r * s ** (2 * k + 1)
        A_r = (16.0 * k * k * r**3 * D - 4.0 * k * k * r**4 * D_r) / (D * D)
        f_r = -E * w_r * (1.0 - A * sn) + E * (-A_r * sn + A * cs * w_r)
        f_th = -E * A * cs
        ex, ey = x / r, y / r
        return np.array([f_r * ex - f_th / r * ey, f_r * ey + f_th / r * ex])

    return Potential(2, value, gradient, None, label=f"palis_demelo(k={k})")


def second_order_lift(phi: Potential) -> Potential:
    """``phi - |grad phi|^2 / 2``; its gradient falls back to finite differences."""

    def value(u):
        g = phi.grad(u)
        return phi(u) - 0.5 * float(np.dot(g, g))

    return Potential(phi.dimension, value, None, None, phi.fd_step, f"lift({phi.label})")


# ---------------------------------------------------------------------------
# systems


def potential_energy(phi: Potential, label: str = "E") -> EnergyFunctional:
    return EnergyFunctional(lambda u: phi(u), label, "state")


def mechanical_energy(Phi: Potential, label: str = "E") -> EnergyFunctional:
    n = Phi.dimension
    return EnergyFunctional(lambda y: 0.5 * float(np.dot(y[n:], y[n:])) + Phi(y[:n]), label,
                            "state_velocity")


def gradient_flow(phi: Potential) -> FirstOrderSystem:
    """``u' = -grad phi(u)`` with the energy ``E = phi`` attached."""
    def field(u):
        return -phi.grad(u)

    def jac(u):
        return -phi.hess(u)

    return FirstOrderSystem(phi.dimension, field, (potential_energy(phi),),
                            {"builder": "gradient_flow", "potential": phi.label}, jac)


def second_order_flow(Phi: Potential, damping: DampingLaw) -> FirstOrderSystem:
    """First-order form of ``u'' + g(u') + grad Phi(u) = 0`` on ``(u, v)``."""
    n = Phi.dimension

    def field(y):
        u, v = y[:n], y[n:]
        return np.concatenate([v, -damping(v) - Phi.grad(u)])

    # |v|^alpha v is only C^1 at v = 0, where central differences are biased
    def jac(y):
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -Phi.hess(y[:n])
        J[n:, n:] = -damping.jacobian(y[n:])
        return J

    return FirstOrderSystem(2 * n, field, (mechanical_energy(Phi),),
                            {"builder": "second_order_flow", "potential": Phi.label,
                             "damping": damping.kind},
                            jacobian=None if damping.kind == "custom" else jac)


def perturbed_energy(Phi: Potential, eps: float) -> EnergyFunctional:
    """``|v|^2/2 + Phi(u) + eps <grad Phi(u), v>``."""
    if eps < 0:
        raise ParameterViolation("eps must be non-negative")
    n = Phi.dimension

    def value(y):
        u, v = y[:n], y[n:]
        return 0.5 * float(np.dot(v, v)) + Phi(u) + eps * float(np.dot(Phi.grad(u), v))

    return EnergyFunctional(value, "H", "state_velocity")


def chergui_energy(Phi: Potential, alpha: float, eps: float, e_inf: float = 0.0) -> EnergyFunctional:
    """``|v|^2/2 + Phi(u) - e_inf + eps |grad Phi|^alpha <grad Phi, v>``."""
    if alpha < 0 or eps < 0:
        raise ParameterViolation("alpha and eps must be non-negative")
    n = Phi.dimension

    def value(y):
        u, v = y[:n], y[n:]
        g = Phi.grad(u)
        ng = float(np.linalg.norm(g))
        cross = 0.0 if ng == 0.0 else ng**alpha * float(np.dot(g, v))
        return 0.5 * float(np.dot(v, v)) + Phi(u) - e_inf + eps * cross

    return EnergyFunctional(value, "chergui", "state_velocity")


def _check_coupled(lam, c):
    if not lam > 0 or c == 0 or c * c >= lam * lam:
        raise ParameterViolation("coupled oscillator needs lam > 0, c != 0 and c^2 < lam^2")


def coupled_energy(lam: float, c: float) -> EnergyFunctional:
    def value(y):
        u, v, du, dv = y
        return 0.5 * (du * du + dv * dv + lam * (u * u + v * v)) + c * u * v

    return EnergyFunctional(value, "E", "state_velocity")


def strict_liapunov_coupled(lam: float, c: float, p: float = 2.0, eps: float = 0.01) -> EnergyFunctional:
    """Strict Liapunov function of the coupled oscillator on ``(u, v, u', v')``."""
    _check_coupled(lam, c)
    if eps < 0:
        raise ParameterViolation("eps must be non-negative")
    base = coupled_energy(lam, c)
    rot = (p + 1.0) * lam * eps / (2.0 * c)

    def value(y):
        u, v, du, dv = y
        return base(y) - eps * v * dv + p * eps * u * du + rot * (du * v - u * dv)

    return EnergyFunctional(value, "H", "state_velocity")


def coupled_oscillator(lam: float, c: float) -> FirstOrderSystem:
    """``u'' + u' + lam u + c v = 0``, ``v'' + lam v + c u = 0``."""
    _check_coupled(lam, c)

    def field(y):
        u, v, du, dv = y
        return np.array([du, dv, -du - lam * u - c * v, -lam * v - c * u])

    J = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-lam, -c, -1, 0], [-c, -lam, 0, 0]], dtype=float)
    return FirstOrderSystem(4, field, (coupled_energy(lam, c),),
                            {"builder": "coupled_oscillator", "lam": lam, "c": c},
                            lambda y: J.copy())


def naka_rushton(c: float = 0.5) -> FirstOrderSystem:
    def field(y):
        u, v = y
        return np.array([-u + c * v / (1 + abs(v)), -v + c * u / (1 + abs(u))])

    V = EnergyFunctional(lambda y: float(y[0] ** 2 + y[1] ** 2), "V")
    return FirstOrderSystem(2, field, (V,), {"builder": "naka_rushton", "c": c})


def robot_arm(J: float = 1.0, p: float = 1.0, k: float = 1.0, c: float = 0.5) -> FirstOrderSystem:
    if not (J > 0 and p > 0 and k > 0 and c > 0):
        raise ParameterViolation("robot arm needs J, p, k, c > 0")
    if not c < p:
        raise ParameterViolation("robot arm needs c < p")

    def field(y):
        u, v = y
        return np.array([v, (-p * math.sin(u) - k * v + c) / J])

    V = EnergyFunctional(lambda y: 0.5 * J * y[1] ** 2 + p * (1 - math.cos(y[0])) - c * y[0], "V")
    return FirstOrderSystem(2, field, (V,), {"builder": "robot_arm", "J": J, "p": p, "k": k, "c": c})


# ---------------------------------------------------------------------------
# Palis-De Melo radial reduction


def _radial_speed(r, k):
    if r <= 0.0 or r >= 1.0:
        return 0.0
    s, w, D, _ = _pd_pieces(r, k)
    if w > _MAX_EXPONENT:
        return 0.0
    return 2.0 * k * r * s ** (k + 1) / D * math.exp(-w)


@dataclass(frozen=True)
class RadialReduction:
    """Scalar ODE for the radius on the spiral manifold, plus the lift back."""

    k: int
    r0: float
    system: FirstOrderSystem

    def angle(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (1.0 - r * r) ** (-self.k)

    def point(self, r: float) -> np.ndarray:
        th = float(self.angle(r))
        return np.array([r * math.cos(th), r * math.sin(th)])

    def reconstruct(self, trajectory, clamp: bool = False):
        """Planar trajectory ``(r cos w, r sin w)`` with the planar gradient field.

        Raises :class:`DomainExit` if a radius left ``(0, 1)``; with
        ``clamp=True`` radii are clamped instead and the result's
        ``energy_series`` carries a ``domain_exit`` flag column.
        """
        from .integrate import Trajectory

        r = trajectory.states[:, 0]
        bad = (r <= 0.0) | (r >= 1.0)
        if np.any(bad) and not clamp:
            raise DomainExit(f"radius left (0, 1) at t={trajectory.times[np.argmax(bad)]:.6g}")
        r = np.clip(r, 1e-300, np.nextafter(1.0, 0.0))
        th = self.angle(r)
        xy = np.column_stack([r * np.cos(th), r * np.sin(th)])
        planar = gradient_flow(palis_demelo_potential(self.k))
        der = np.array([planar(p) for p in xy])
        extra = {"domain_exit": bad.astype(float)} if clamp else {}
        return Trajectory(trajectory.times, xy, der, extra, (), trajectory.termination,
                          trajectory.t_end, trajectory.n_steps, trajectory.n_rejected,
                          trajectory.abs_tol, trajectory.rel_tol)


def palis_demelo_radial(k: int = 1, r0: float = 0.5) -> RadialReduction:
    """Radius equation ``r' = 2kr(1-r^2)^{k+1} e^{-w} / (4k^2 r^4 + (1-r^2)^{2k+2})``."""
    if int(k) != k or k < 1:
        raise ParameterViolation("k must be a positive integer")
    if not 0.0 < r0 < 1.0:
        raise ParameterViolation("r0 must lie in (0, 1)")
    k = int(k)
    sys_ = FirstOrderSystem(1, lambda y: np.array([_radial_speed(float(y[0]), k)]),
                            (), {"builder": "palis_demelo_radial", "k": k})
    return RadialReduction(k, float(r0), sys_)


# ---------------------------------------------------------------------------
# gallery


@dataclass(frozen=True)
class ConvergesTo:
    points: tuple
    description: str = ""


@dataclass(frozen=True)
class NonConvergentCircle:
    radius: float = 1.0


@dataclass(frozen=True)
class Oscillates:
    a: float
    b: float


@dataclass(frozen=True)
class EnergyConserved:
    pass


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    system: FirstOrderSystem
    default_initial: np.ndarray
    expected: object
    locus: str
    params: dict = dc_field(default_factory=dict)
    t_max: float = 100.0
    sample_interval: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "default_initial", as_state(self.default_initial, self.system.dimension))

    def expected_label(self) -> str:
        e = self.expected
        if isinstance(e, ConvergesTo):
            return "ConvergesTo{" + ", ".join(str(tuple(float(x) for x in p)) for p in e.points) + "}"
        if isinstance(e, NonConvergentCircle):
            return f"NonConvergentCircle(radius={e.radius})"
        if isinstance(e, Oscillates):
            return f"Oscillates([{e.a}, {e.b}])"
        return "EnergyConserved"


def _duffing(**_):
    sys_ = second_order_flow(double_well(), DampingLaw.linear())
    return GalleryEntry("duffing_damped", sys_, (2.0, 0.0),
                        ConvergesTo(((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0))),
                        "damped Duffing oscillator u'' + u' + u^3 - u = 0", {}, 60.0, 0.02)


def _harmonic(omega=1.0):
    Phi = polynomial_potential([(0.5 * omega**2, (2,))])
    sys_ = second_order_flow(Phi, DampingLaw.linear(0.0))
    return GalleryEntry("harmonic", sys_, (1.0, 0.0), EnergyConserved(),
                        "undamped oscillator u'' + omega^2 u = 0", {"omega": omega}, 200.0, 0.05)


def _power_decay(p=3.0):
    if not p > 1:
        raise ParameterViolation("power_decay needs p > 1")
    sys_ = gradient_flow(power_potential(p + 1, 1.0 / (p + 1)))
    return GalleryEntry("power_decay", sys_, (1.0,), ConvergesTo(((0.0,),)),
                        "u' + |u|^{p-1} u = 0", {"p": p}, 1000.0, 0.1)


def _power_damped(c=4.0, p=2.0):
    if not p >= 1 or not c > 0:
        raise ParameterViolation("power_damped_oscillator needs p >= 1 and c > 0")
    Phi = polynomial_potential([(0.5, (2,))])
    sys_ = second_order_flow(Phi, DampingLaw.power_law(p - 1, c))
    t_max = 10000.0 if p <= 2 else 2000.0
    return GalleryEntry("power_damped_oscillator", sys_, (1.0, 0.0), ConvergesTo(((0.0, 0.0),)),
                        "u'' + u + c|u'|^{p-1} u' = 0", {"c": c, "p": p}, t_max, 0.5)


def _weak_damping(eps=0.5, delta=1.0):
    if not (0 < eps <= 1) or not delta > 0:
        raise ParameterViolation("weak_damping needs eps in (0, 1] and delta > 0")
    sys_ = second_order_flow(double_well(), DampingLaw.power_law(1.0 - eps, delta))
    return GalleryEntry("weak_damping", sys_, (2.0, 0.0),
                        ConvergesTo(((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0))),
                        "u'' + delta|u'|^{1-eps} u' + u^3 - u = 0", {"eps": eps, "delta": delta},
                        2000.0, 0.1)


def flat_well(a: float, b: float) -> Potential:
    """Primitive of ``f(s) = s - b`` for ``s > b``, ``0`` on ``[a, b]``, ``s - a`` below."""
    if not a < b:
        raise ParameterViolation("need a < b")

    def value(u):
        s = float(np.ravel(u)[0])
        return 0.5 * (s - b) ** 2 if s > b else (0.5 * (s - a) ** 2 if s < a else 0.0)

    def gradient(u):
        s = float(u[0])
        return np.array([s - b if s > b else (s - a if s < a else 0.0)])

    return Potential(1, value, gradient, None, label=f"flat_well({a},{b})")


def _quadratic_damping(a=-0.1, b=0.1):
    law = DampingLaw("custom", func=lambda v: np.abs(v) * v)
    sys_ = second_order_flow(flat_well(a, b), law)
    return GalleryEntry("quadratic_damping", sys_, (1.0, 0.0), Oscillates(a, b),
                        "u'' + |u'|u' + f(u) = 0 with f vanishing on [a, b]", {"a": a, "b": b},
                        2000.0, 0.05)


def _palis_demelo(k=1, r0=0.5):
    red = palis_demelo_radial(k, r0)
    sys_ = gradient_flow(palis_demelo_potential(k))
    return GalleryEntry("palis_demelo", sys_, red.point(r0), NonConvergentCircle(1.0),
                        "planar gradient flow spiralling onto the unit circle", {"k": k, "r0": r0},
                        1000.0, 0.05)


def _palis_demelo_lifted(k=1, r0=0.5):
    red = palis_demelo_radial(k, r0)
    phi = palis_demelo_potential(k)
    x0 = red.point(r0)
    sys_ = second_order_flow(second_order_lift(phi), DampingLaw.linear())
    return GalleryEntry("palis_demelo_lifted", sys_, np.concatenate([x0, -phi.grad(x0)]),
                        NonConvergentCircle(1.0),
                        "damped second-order lift of the spiralling gradient flow", {"k": k, "r0": r0},
                        1000.0, 0.05)


def _coupled(lam=1.0, c=0.5, p=2.0, eps=0.01):
    sys_ = coupled_oscillator(lam, c).with_energies(strict_liapunov_coupled(lam, c, p, eps))
    return GalleryEntry("coupled", sys_, (1.0, 0.0, 0.0, 0.0), ConvergesTo(((0.0,) * 4,)),
                        "coupled oscillators, one damped", {"lam": lam, "c": c, "p": p, "eps": eps},
                        200.0, 0.05)


def _naka_rushton(c=0.5):
    if not 0 < c < 1:
        import warnings
        warnings.warn("naka_rushton is only validated for c in (0, 1)", stacklevel=3)
    return GalleryEntry("naka_rushton", naka_rushton(c), (1.0, 0.5), ConvergesTo(((0.0, 0.0),)),
                        "Naka-Rushton neuron model", {"c": c}, 40.0, 0.02)


def _robot_arm(J=1.0, p=1.0, k=1.0, c=0.5, m=0):
    sys_ = robot_arm(J, p, k, c)
    eq = math.asin(c / p) + 2 * math.pi * m
    return GalleryEntry("robot_arm", sys_, (eq + 0.5, 0.0), ConvergesTo(((eq, 0.0),)),
                        "one-degree-of-freedom robot arm under constant torque",
                        {"J": J, "p": p, "k": k, "c": c, "m": m}, 60.0, 0.02)


_CATALOG = {
    "duffing_damped": _duffing,
    "harmonic": _harmonic,
    "power_decay": _power_decay,
    "power_damped_oscillator": _power_damped,
    "weak_damping": _weak_damping,
    "quadratic_damping": _quadratic_damping,
    "palis_demelo": _palis_demelo,
    "palis_demelo_lifted": _palis_demelo_lifted,
    "coupled": _coupled,
    "naka_rushton": _naka_rushton,
    "robot_arm": _robot_arm,
}

GALLERY_NAMES = tuple(_CATALOG)


def gallery(name: str, **params) -> GalleryEntry:
    """Build the catalog entry ``name``; keyword arguments override defaults."""
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise UnknownName(f"unknown gallery entry {name!r}; known: {', '.join(GALLERY_NAMES)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ParameterViolation(f"bad parameters for {name!r}: {exc}") from None
