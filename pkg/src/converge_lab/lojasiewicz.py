"""Empirical Lojasiewicz exponents and the decay-rate prediction tables.

The inequality in question is ``|grad phi(u)| >= c |phi(u) - phi(a)|^{1 - theta}``
near a critical point ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .core import Potential
from .errors import (DegenerateSamples, HypothesisViolated, NotConstantOnSet, NotCritical,
                     OutOfRange, OutsideCase, ParameterViolation)

DEFAULT_RADII = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
_HALF_TOL = 1e-12


@dataclass(frozen=True)
class ShellStats:
    radius: float
    retained: int
    rejected: int
    witness_p95: float
    witness_median: float


@dataclass(frozen=True)
class LojasiewiczEstimate:
    """``theta`` is the reported exponent (at most 1/2); ``theta_raw`` is the
    uncapped regression value."""

    theta: float
    c: float
    sigma: float
    shells: tuple
    n_samples: int
    seed: int
    theta_raw: float
    slopes: np.ndarray = dc_field(repr=False, default=None)

    def to_dict(self):
        return {
            "theta": self.theta, "theta_raw": self.theta_raw, "c": self.c, "sigma": self.sigma,
            "n_samples": self.n_samples, "seed": self.seed,
            "shells": [{"radius": s.radius, "retained": s.retained, "rejected": s.rejected,
                        "witness_p95": s.witness_p95, "witness_median": s.witness_median}
                       for s in self.shells],
        }


def _directions(rng, n, count):
    if n == 1:
        return np.where(rng.random(count) < 0.5, -1.0, 1.0).reshape(-1, 1)
    d = rng.standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def estimate_exponent(phi: Potential, a, radii: Sequence[float] = DEFAULT_RADII,
                      samples_per_shell: int = 256, seed: int = 0) -> LojasiewiczEstimate:
    """Estimate the exponent at the critical point ``a`` from shell samples.

    The same seeded directions are used on every shell.  Along each
    direction ``log |grad phi|`` is regressed on ``log |phi - phi(a)|``
    across the shells; ``1 - theta`` is the 95th percentile of the slopes.
    Per-shell witnesses ``log|grad phi| / log|phi - phi(a)|`` are kept as
    diagnostics and set ``sigma``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    radii = [float(r) for r in radii]
    if len(radii) < 3:
        raise ParameterViolation("need at least three shells")
    if any(r <= 0 for r in radii) or any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ParameterViolation("radii must be positive and strictly decreasing")
    g0 = float(np.linalg.norm(phi.grad(a)))
    if g0 > 1e-8:
        raise NotCritical(f"|grad phi(a)| = {g0:.3e} > 1e-8")
    phi_a = phi(a)
    rng = np.random.default_rng(seed)
    dirs = _directions(rng, a.size, samples_per_shell)

    logg = np.full((len(radii), samples_per_shell), np.nan)
    logd = np.full_like(logg, np.nan)
    shells = []
    total_rej = 0
    for k, r in enumerate(radii):
        for j, d in enumerate(dirs):
            u = a + r * d
            delta = abs(phi(u) - phi_a)
            g = float(np.linalg.norm(phi.grad(u)))
            if 0.0 < delta < 1.0 and g > 0.0:
                logg[k, j] = math.log(g)
                logd[k, j] = math.log(delta)
        ok = ~np.isnan(logg[k])
        rej = int(samples_per_shell - ok.sum())
        total_rej += rej
        w = logg[k, ok] / logd[k, ok]
        shells.append(ShellStats(r, int(ok.sum()), rej,
                                 float(np.percentile(w, 95)) if w.size else math.nan,
                                 float(np.median(w)) if w.size else math.nan))
    if total_rej > 0.5 * samples_per_shell * len(radii):
        raise DegenerateSamples(f"{total_rej} of {samples_per_shell * len(radii)} samples rejected")

    slopes = []
    for j in range(samples_per_shell):
        ok = ~np.isnan(logg[:, j])
        if ok.sum() >= 3 and np.ptp(logd[ok, j]) > 0:
            slopes.append(np.polyfit(logd[ok, j], logg[ok, j], 1)[0])
    if not slopes:
        raise DegenerateSamples("no direction has three usable shells")
    slopes = np.asarray(slopes)
    theta_raw = 1.0 - float(np.percentile(slopes, 95))
    theta = min(0.5, max(1e-6, min(1.0 - 1e-6, theta_raw)))

    ok = ~np.isnan(logg)
    c = float(np.min(np.exp(logg[ok] - (1.0 - theta) * logd[ok])))
    ref = shells[-1].witness_p95
    sigma = min(radii)
    for s in shells:
        if abs(s.witness_p95 - ref) <= 0.05:
            sigma = max(sigma, s.radius)
    return LojasiewiczEstimate(theta, c, sigma, tuple(shells), int(ok.sum()), seed, theta_raw, slopes)


@dataclass(frozen=True)
class UniformEstimate:
    theta: float
    c: float
    sigma: float
    value_spread: float
    estimates: tuple


def uniformize_on_set(phi: Potential, points: Sequence, estimates: Optional[Sequence] = None,
                      **estimate_kw) -> UniformEstimate:
    """Uniform constants on a set of critical points sharing one value of ``phi``.

    Returns ``theta = min theta_i``, ``c = min c_i`` and ``sigma = min sigma_i / 2``
    (a single point keeps its own ``sigma``).
    """
    pts = [np.asarray(p, dtype=float).reshape(-1) for p in points]
    if not pts:
        raise ParameterViolation("the set must be non-empty")
    for p in pts:
        g = float(np.linalg.norm(phi.grad(p)))
        if g > 1e-8:
            raise NotCritical(f"|grad phi| = {g:.3e} at {p}")
    vals = np.array([phi(p) for p in pts])
    spread = float(vals.max() - vals.min())
    if spread > 1e-8:
        raise NotConstantOnSet(f"phi varies by {spread:.3e} on the set")
    if estimates is None:
        estimates = [estimate_exponent(phi, p, **estimate_kw) for p in pts]
    estimates = tuple(estimates)
    if len(estimates) != len(pts):
        raise ParameterViolation("one estimate per point is required")
    theta = min(e.theta for e in estimates)
    c = min(e.c for e in estimates)
    sigma = estimates[0].sigma if len(pts) == 1 else 0.5 * min(e.sigma for e in estimates)
    return UniformEstimate(theta, c, sigma, spread, estimates)


# ---------------------------------------------------------------------------
# prediction tables


@dataclass(frozen=True)
class RatePrediction:
    """``kind`` is ``"exponential"`` or ``"power"`` (``|u - a| = O(t^{-exponent})``)."""

    kind: str
    exponent: Optional[float]
    source: str

    def __post_init__(self):
        if self.kind == "power" and not self.exponent > 0:
            raise ParameterViolation("power exponents must be positive")

    def to_dict(self):
        return {"class": self.kind, "exponent": self.exponent, "source": self.source}


def _is_half(theta):
    return abs(theta - 0.5) <= _HALF_TOL


def predict_first_order(theta: float) -> RatePrediction:
    """Gradient flow: exponential for ``theta = 1/2``, else ``t^{-theta/(1-2theta)}``."""
    if not 0.0 < theta <= 0.5 + _HALF_TOL:
        raise OutOfRange(f"theta = {theta} not in (0, 1/2]")
    if _is_half(theta):
        return RatePrediction("exponential", None, "first_order")
    return RatePrediction("power", theta / (1.0 - 2.0 * theta), "first_order")


def predict_general(theta: float, beta: float) -> RatePrediction:
    """Rates for systems with a ``beta``-angle condition.

    Exponential when ``beta = theta/(1-theta)``; power
    ``(1 - beta(1-theta)) / (beta(1-theta) - theta)`` when larger.
    """
    if not 0.0 < theta < 1.0 or not beta >= 1.0:
        raise OutOfRange("need theta in (0, 1) and beta >= 1")
    q = beta * (1.0 - theta)
    if q >= 1.0:
        raise HypothesisViolated(f"beta (1 - theta) = {q} >= 1")
    crit = theta / (1.0 - theta)
    if abs(beta - crit) <= _HALF_TOL * max(1.0, crit):
        return RatePrediction("exponential", None, "general")
    if beta < crit:
        raise OutsideCase(f"beta = {beta} < theta/(1-theta) = {crit}")
    return RatePrediction("power", (1.0 - q) / (q - theta), "general")


def predict_nonlinear_damping(theta: float, alpha: float) -> RatePrediction:
    """Damping ``|v|^alpha v``: power ``(theta - alpha(1-theta)) / (1 - 2theta + alpha(1-theta))``."""
    if not 0.0 < theta <= 0.5 + _HALF_TOL:
        raise OutOfRange(f"theta = {theta} not in (0, 1/2]")
    if not 0.0 <= alpha < theta / (1.0 - theta):
        raise OutOfRange(f"alpha = {alpha} not in [0, theta/(1-theta))")
    den = 1.0 - 2.0 * theta + alpha * (1.0 - theta)
    if abs(den) <= _HALF_TOL:
        return predict_first_order(0.5)
    return RatePrediction("power", (theta - alpha * (1.0 - theta)) / den, "nonlinear_damping")
