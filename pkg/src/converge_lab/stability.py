"""Equilibria, linearization, Hurwitz tests and Lyapunov quadratic forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FirstOrderSystem
from .errors import (DegreeUnsupported, IllConditioned, NonFiniteJacobian, NotHurwitz,
                     ParameterViolation, ZeroLeadingCoefficient)

AS = "asymptotically_stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"


def jacobian_fd(system: FirstOrderSystem, point, fd_step: float = 1e-6) -> np.ndarray:
    """Column-wise central-difference Jacobian of the field."""
    x = np.asarray(point, dtype=float).reshape(-1)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = fd_step * (1.0 + abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (system(x + e) - system(x - e)) / (2.0 * h)
    if not np.all(np.isfinite(J)):
        raise NonFiniteJacobian(f"non-finite Jacobian at {x}")
    return J


def _jacobian(system, x, fd_step):
    if system.jacobian is not None:
        J = np.asarray(system.jacobian(x), dtype=float).reshape(system.dimension, system.dimension)
        if not np.all(np.isfinite(J)):
            raise NonFiniteJacobian(f"non-finite Jacobian at {x}")
        return J
    return jacobian_fd(system, x, fd_step)


def newton_polish(system: FirstOrderSystem, x0, tol: float = 1e-13, max_iter: int = 100,
                  fd_step: float = 1e-6) -> Optional[np.ndarray]:
    """Damped Newton on ``field(x) = 0`` from ``x0``.

    Returns the point with the smallest residual found, or ``None`` if no
    iterate improved on ``x0``.  Singular Jacobians fall back to a
    least-squares step.
    """
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    fx = system(x)
    r0 = r = float(np.linalg.norm(fx))
    if not math.isfinite(r):
        return None
    for _ in range(max_iter):
        if r <= tol:
            break
        try:
            J = _jacobian(system, x, fd_step)
        except NonFiniteJacobian:
            break
        step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        lam = 1.0
        while lam > 1e-6:
            xn = x + lam * step
            fn = system(xn)
            rn = float(np.linalg.norm(fn))
            if math.isfinite(rn) and rn < r:
                break
            lam *= 0.5
        else:
            break
        x, fx, r = xn, fn, rn
    return x if r < r0 or r0 == 0.0 else None


def find_equilibria(system: FirstOrderSystem, seeds: Iterable, tol: float = 1e-10,
                    return_dropped: bool = False):
    """Newton from every seed; keep points with ``|field| <= tol``, merged within ``10 tol``."""
    found = []
    dropped = 0
    for s in seeds:
        s = np.asarray(s, dtype=float).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise ParameterViolation("seeds must be finite")
        x = newton_polish(system, s, tol=min(tol, 1e-13))
        if x is None:
            x = s
        if np.linalg.norm(system(x)) > tol:
            dropped += 1
            continue
        if not any(np.linalg.norm(x - y) <= 10 * tol for y in found):
            found.append(x)
    found.sort(key=lambda p: tuple(p))
    return (found, dropped) if return_dropped else found


@dataclass(frozen=True)
class Linearization:
    point: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    spectral_abscissa: float
    near_equilibrium: bool


def linearize(system: FirstOrderSystem, point, fd_step: float = 1e-6) -> Linearization:
    x = np.asarray(point, dtype=float).reshape(-1)
    J = _jacobian(system, x, fd_step)
    ev = np.linalg.eigvals(J)
    return Linearization(x, J, ev, float(ev.real.max()), bool(np.linalg.norm(system(x)) <= 1e-6))


@dataclass(frozen=True)
class StabilityVerdict:
    kind: str
    margin: float
    spectral_abscissa: float
    witnesses: tuple

    def to_dict(self):
        return {"class": self.kind, "margin": self.margin,
                "spectral_abscissa": self.spectral_abscissa,
                "witnesses": [[float(z.real), float(z.imag)] for z in self.witnesses]}


def classify(lin: Linearization, margin: Optional[float] = None) -> StabilityVerdict:
    """Three-way sign test of the spectral abscissa against ``margin``."""
    if margin is None:
        margin = 1e-7 * (1.0 + float(np.linalg.norm(lin.jacobian, 2)))
    if margin < 0:
        raise ParameterViolation("margin must be non-negative")
    s = lin.spectral_abscissa
    ev = lin.eigenvalues
    if s < -margin:
        return StabilityVerdict(AS, margin, s, ())
    if s > margin:
        return StabilityVerdict(UNSTABLE, margin, s, tuple(ev[ev.real > margin]))
    return StabilityVerdict(MARGINAL, margin, s, tuple(ev[np.abs(ev.real) <= margin]))


@dataclass(frozen=True)
class HurwitzResult:
    is_hurwitz: bool
    failed_condition: Optional[str]
    conditions: tuple  # (label, value) with value > 0 required


def hurwitz_check(coefficients: Sequence[float]) -> HurwitzResult:
    """Hurwitz test for ``p0 X^N + p1 X^{N-1} + ... + pN`` with ``N`` in 2..4.

    The polynomial is first normalized so that ``p0 > 0``.  The necessary
    sign screen ``pj p0 > 0`` runs before the degree-specific inequalities;
    ``conditions`` lists every evaluated quantity that must be positive.
    """
    p = [float(c) for c in coefficients]
    N = len(p) - 1
    if N not in (2, 3, 4):
        raise DegreeUnsupported(f"degree {N} not in 2..4")
    if p[0] == 0.0:
        raise ZeroLeadingCoefficient("p0 must be non-zero")
    if p[0] < 0:
        p = [-c for c in p]
    conds = [(f"p{j}p0>0", p[j] * p[0]) for j in range(1, N + 1)]
    if N == 3:
        conds.append(("p2p1>p3p0", p[2] * p[1] - p[3] * p[0]))
    elif N == 4:
        conds.append(("p3(p2p1-p3p0)>p4p1^2", p[3] * (p[2] * p[1] - p[3] * p[0]) - p[4] * p[1] ** 2))
    for label, v in conds:
        if not v > 0:
            return HurwitzResult(False, label, tuple(conds))
    return HurwitzResult(True, None, tuple(conds))


def companion_is_hurwitz(coefficients: Sequence[float]) -> bool:
    """Eigenvalue route: all roots of the polynomial in the open left half-plane."""
    return bool(np.all(np.roots(np.asarray(coefficients, dtype=float)).real < 0))


@dataclass(frozen=True)
class QuadraticForm:
    """``V(u) = u^T P u`` with ``P`` symmetric positive definite."""

    P: np.ndarray
    residual: float

    def __post_init__(self):
        if not np.array_equal(self.P, self.P.T):
            raise ParameterViolation("P must be symmetric")
        if np.linalg.eigvalsh(self.P).min() <= 0:
            raise ParameterViolation("P must be positive definite")

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.P @ u)

    def implied_rate(self) -> float:
        """Rate ``r`` in ``|u(t)| <= C e^{-r t}`` implied by ``V' = -|u|^2``."""
        return 0.5 / float(np.linalg.eigvalsh(self.P).max())


def lyapunov_quadratic(A) -> QuadraticForm:
    """Solve ``A^T P + P A = -I`` by a Kronecker linear solve (``n <= 32``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ParameterViolation("A must be square")
    if n > 32:
        raise ParameterViolation("the Kronecker solve is limited to n <= 32")
    if np.linalg.eigvals(A).real.max() >= 0:
        raise NotHurwitz("A has an eigenvalue with non-negative real part")
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    rhs = -I.reshape(-1, order="F")
    x = np.linalg.solve(K, rhs)
    # one step of iterative refinement
    x += np.linalg.solve(K, rhs - K @ x)
    P = x.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    res = float(np.linalg.norm(A.T @ P + P @ A + I))
    if res > 1e-10 * n:
        raise IllConditioned(f"Lyapunov residual {res:.3e} exceeds {1e-10 * n:.1e}")
    return QuadraticForm(P, res)


@dataclass(frozen=True)
class PerturbationBound:
    admissible: bool
    R1: float
    gamma: float


def perturbation_radius(M: float, delta: float, eta: float, R0: float) -> PerturbationBound:
    """Radius and rate for a linearly stable point under a Lipschitz perturbation.

    Admissible iff ``eta < delta / M``; then ``|u(t) - a| <= M |x - a| e^{-gamma t}``
    for ``|x - a| <= R1 = R0 / M`` with ``gamma = delta - eta M``.
    """
    if not M >= 1 or not delta > 0 or not eta >= 0 or not R0 > 0:
        raise ParameterViolation("need M >= 1, delta > 0, eta >= 0, R0 > 0")
    return PerturbationBound(eta < delta / M, R0 / M, delta - eta * M)
