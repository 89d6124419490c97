"""Method-of-lines semilinear heat and damped wave equations on (0, L).

Dirichlet boundary values are implicit.  The discrete energy uses the
h-weighted inner product, so the heat system is the gradient flow of
``E_h`` for ``<u, w>_h = h sum u_i w_i``, i.e. ``h * field = -grad E_h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .core import EnergyFunctional, FirstOrderSystem, Potential, grad_fd
from .errors import GridTooFine, ParameterViolation

MAX_NODES = 512


@dataclass(frozen=True)
class Grid1D:
    length: float
    m: int

    def __post_init__(self):
        if not self.length > 0:
            raise ParameterViolation("grid length must be positive")
        if int(self.m) != self.m or self.m < 2:
            raise ParameterViolation("need at least two interior nodes")

    @property
    def h(self) -> float:
        return self.length / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.m + 1)

    def first_eigenvalue(self) -> float:
        """Smallest eigenvalue of the discrete Dirichlet ``-Laplacian``."""
        return 2.0 / self.h**2 * (1.0 - math.cos(math.pi * self.h / self.length))

    def first_eigenvector(self) -> np.ndarray:
        return np.sin(math.pi * self.nodes / self.length)


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar reaction term ``f`` with primitive ``F`` (``F(0) = 0``).

    ``sign_bound`` is an optional ``C`` with ``f(s) s >= 0`` for ``|s| >= C``.
    Both maps must accept numpy arrays.
    """

    f: Callable
    F: Callable
    sign_bound: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if abs(float(self.F(np.array(0.0)))) > 1e-12:
            raise ParameterViolation("the primitive must vanish at 0")
        s = np.linspace(-2.0, 2.0, 41)
        h = 1e-5
        fd = (self.F(s + h) - self.F(s - h)) / (2 * h)
        dev = float(np.max(np.abs(fd - self.f(s)) / (1.0 + np.abs(self.f(s)))))
        if dev > 1e-6:
            raise ParameterViolation(f"F' does not match f on the probe grid (deviation {dev:.2e})")

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(lambda s: np.zeros_like(np.asarray(s, dtype=float)),
                   lambda s: np.zeros_like(np.asarray(s, dtype=float)), 0.0, "0")

    @classmethod
    def linear(cls, mu: float) -> "Nonlinearity":
        return cls(lambda s: mu * np.asarray(s, dtype=float),
                   lambda s: 0.5 * mu * np.asarray(s, dtype=float) ** 2,
                   0.0 if mu >= 0 else None, f"{mu}u")

    @classmethod
    def cubic(cls) -> "Nonlinearity":
        return cls(lambda s: np.asarray(s, dtype=float) ** 3,
                   lambda s: 0.25 * np.asarray(s, dtype=float) ** 4, 0.0, "u^3")

    @classmethod
    def bistable(cls) -> "Nonlinearity":
        """``f(u) = u^3 - u``, sign condition from ``C = 1``."""
        return cls(lambda s: np.asarray(s, dtype=float) ** 3 - s,
                   lambda s: 0.25 * np.asarray(s, dtype=float) ** 4 - 0.5 * np.asarray(s, dtype=float) ** 2,
                   1.0, "u^3-u")

    @classmethod
    def sine(cls) -> "Nonlinearity":
        return cls(np.sin, lambda s: 1.0 - np.cos(s), None, "sin u")


def _laplacian(u, h):
    lap = -2.0 * u
    lap[1:] += u[:-1]
    lap[:-1] += u[1:]
    return lap / (h * h)


def _gradient_energy(u, h):
    # Dirichlet padding u_0 = u_{m+1} = 0
    d = np.diff(u, prepend=0.0, append=0.0)
    return float(d @ d) / (2.0 * h)


def _check_grid(grid):
    if grid.m > MAX_NODES:
        raise GridTooFine(f"m = {grid.m} exceeds the explicit-integration cap of {MAX_NODES}")


def heat_energy(nl: Nonlinearity, grid: Grid1D) -> Potential:
    h = grid.h
    return Potential(grid.m, lambda u: _gradient_energy(u, h) + h * float(np.sum(nl.F(u))),
                     lambda u: -h * (_laplacian(np.asarray(u, dtype=float), h) - nl.f(u)),
                     label=f"E_h[{nl.label}]")


def discretize_heat(nl: Nonlinearity, grid: Grid1D) -> FirstOrderSystem:
    """``u_i' = (u_{i-1} - 2u_i + u_{i+1}) / h^2 - f(u_i)`` with energy ``E_h``."""
    _check_grid(grid)
    h = grid.h
    E = heat_energy(nl, grid)

    def field(u):
        return _laplacian(u, h) - nl.f(u)

    return FirstOrderSystem(
        grid.m, field, (EnergyFunctional(E, "E_h"),),
        {"builder": "heat", "grid": grid, "nonlinearity": nl.label, "energy_potential": E},
        max_step=h * h / 4.0, projection=(0, 1),
    )


def discretize_wave(nl: Nonlinearity, gamma: float, grid: Grid1D) -> FirstOrderSystem:
    """``(u, v)' = (v, Lap_h u - gamma v - f(u))`` with energy ``E_h(u, v)``.

    The step ceiling is ``h / 4``: the wave operator's spectral radius grows
    like ``1/h``, not ``1/h^2``.
    """
    _check_grid(grid)
    if gamma < 0:
        raise ParameterViolation("gamma must be non-negative")
    h, m = grid.h, grid.m

    def field(y):
        u, v = y[:m], y[m:]
        return np.concatenate([v, _laplacian(u, h) - gamma * v - nl.f(u)])

    def energy(y):
        u, v = y[:m], y[m:]
        return 0.5 * h * float(v @ v) + _gradient_energy(u, h) + h * float(np.sum(nl.F(u)))

    return FirstOrderSystem(
        2 * m, field, (EnergyFunctional(energy, "E_h", "state_velocity"),),
        {"builder": "wave", "grid": grid, "nonlinearity": nl.label, "gamma": gamma},
        max_step=h / 4.0, projection=(0, m),
    )


def gradient_consistency(system: FirstOrderSystem, probes: Iterable, step: Optional[float] = None) -> float:
    """Max over probes of ``|h field(u) + grad E_h(u)|`` with a finite-difference gradient."""
    grid = system.metadata["grid"]
    E = system.metadata["energy_potential"]
    fd_only = Potential(E.dimension, E.value, None, None, E.fd_step)
    worst = 0.0
    for u in probes:
        u = np.asarray(u, dtype=float).reshape(-1)
        d = grid.h * system(u) + grad_fd(fd_only, u, step)
        worst = max(worst, float(np.linalg.norm(d)))
    return worst


def wave_dissipation(trajectory, gamma: float, grid: Grid1D) -> np.ndarray:
    """Cumulative trapezoid of ``gamma h |v|^2`` along the samples."""
    m = grid.m
    v = trajectory.states[:, m:]
    rate = gamma * grid.h * np.einsum("ij,ij->i", v, v)
    out = np.zeros_like(rate)
    out[1:] = np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(trajectory.times))
    return out
