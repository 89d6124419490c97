"""Trajectory diagnostics: limit sets, convergence criteria and decay fits."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist

from .errors import DegenerateWindow, TooFewSamples

MIN_TAIL = 100
_DIAMETER_SUBSAMPLE = 2000
DISTANCE_FLOOR = 1e-15


def _cumtrapz(y, t):
    out = np.zeros_like(y, dtype=float)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


# ---------------------------------------------------------------------------
# omega-limit estimate


@dataclass(frozen=True)
class OmegaEstimate:
    """Tail-sample proxy for the omega-limit set.

    ``kind`` is ``"singleton"``, ``"closed_curve"`` or ``"indeterminate"``.
    ``point`` is the last tail sample for singletons; ``winding`` and
    ``mean_radius`` describe the planar projection around ``centroid``.
    """

    samples: np.ndarray
    diameter: float
    connected: bool
    kind: str
    point: Optional[np.ndarray]
    winding: float
    mean_radius: float
    radial_spread: float
    centroid: np.ndarray
    threshold: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "diameter": self.diameter,
            "connected": self.connected,
            "point": None if self.point is None else [float(x) for x in self.point],
            "winding": self.winding,
            "mean_radius": self.mean_radius,
            "radial_spread": self.radial_spread,
            "samples": int(self.samples.shape[0]),
        }


def _diameter(x):
    if x.shape[0] > _DIAMETER_SUBSAMPLE:
        idx = np.linspace(0, x.shape[0] - 1, _DIAMETER_SUBSAMPLE).astype(int)
        x = x[idx]
    if x.shape[0] < 2:
        return 0.0
    return float(pdist(x).max())


def winding_number(points: np.ndarray, center: np.ndarray) -> float:
    """Signed turns of a planar polyline around ``center``."""
    d = points - center
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    return float((ang[-1] - ang[0]) / (2.0 * math.pi))


def omega_estimate(trajectory, burn_in_fraction: float = 0.5, chain_eps: Optional[float] = None,
                   projection: Sequence[int] = (0, 1), center=None) -> OmegaEstimate:
    """Estimate the limit set from the samples after the burn-in.

    The burn-in fraction is taken over the sample count, so geometric time
    grids keep their late decades.  ``center`` overrides the tail centroid
    as the reference point for the winding count.
    """
    states = trajectory.states
    n0 = int(math.floor(burn_in_fraction * states.shape[0]))
    tail = states[n0:]
    if tail.shape[0] < MIN_TAIL:
        raise TooFewSamples(f"{tail.shape[0]} tail samples, need {MIN_TAIL}")
    centroid = tail.mean(axis=0)
    diam = _diameter(tail)
    steps = np.linalg.norm(np.diff(tail, axis=0), axis=1)
    eps = float(steps.max()) * (1 + 1e-9) + 1e-300 if chain_eps is None else float(chain_eps)
    sub = tail if tail.shape[0] <= 20000 else tail[:: tail.shape[0] // 20000 + 1]
    pairs = cKDTree(sub).query_pairs(eps, output_type="ndarray")
    from scipy.sparse import coo_matrix
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(sub.shape[0],) * 2) \
        if len(pairs) else coo_matrix((sub.shape[0],) * 2)
    ncomp = connected_components(g, directed=False)[0]

    threshold = max(1e-5, 1e-3 * float(np.linalg.norm(states[0] - centroid)))
    winding = 0.0
    mean_r = 0.0
    spread = math.inf
    if states.shape[1] >= 2:
        i, j = projection
        plane = tail[:, [i, j]]
        c = centroid[[i, j]] if center is None else np.asarray(center, dtype=float)
        radii = np.linalg.norm(plane - c, axis=1)
        mean_r = float(radii.mean())
        spread = float((radii.max() - radii.min()) / mean_r) if mean_r > 0 else math.inf
        winding = winding_number(plane, c)
    if diam <= threshold:
        kind, point = "singleton", tail[-1].copy()
    elif states.shape[1] >= 2 and abs(winding) >= 1.0 and spread < 0.1:
        kind, point = "closed_curve", None
    else:
        kind, point = "indeterminate", None
    return OmegaEstimate(tail, diam, ncomp == 1, kind, point, winding, mean_r, spread, centroid, threshold)


# ---------------------------------------------------------------------------
# convergence criteria


@dataclass(frozen=True)
class CauchyResult:
    passed: bool
    alpha: float
    first_window: float
    last_window: float
    times: np.ndarray
    displacement: np.ndarray

    def to_dict(self):
        return {"passed": self.passed, "alpha": self.alpha,
                "first_window": self.first_window, "last_window": self.last_window}


def sliding_displacement(times, states, alpha: float):
    """``D(t_k) = max_{0 < t_j - t_k <= alpha} |u_j - u_k|`` for ``t_k + alpha <= T``."""
    t = np.asarray(times)
    valid = np.nonzero(t + alpha <= t[-1] * (1 + 1e-12))[0]
    hi = np.searchsorted(t, t[valid] + alpha * (1 + 1e-12), side="right")
    D = np.zeros(valid.size)
    max_lag = int((hi - valid).max()) if valid.size else 0
    for lag in range(1, max_lag):
        ok = valid + lag < hi
        k = valid[ok]
        d = np.linalg.norm(states[k + lag] - states[k], axis=1)
        D[ok] = np.maximum(D[ok], d)
    return t[valid], D


def cauchy_convergence_test(trajectory, alpha: float = 1.0, windows: int = 10) -> CauchyResult:
    """Sliding-window displacement test.

    Passes when the largest displacement over the last window is below a
    tenth of the largest over the first (or both vanish).
    """
    span = trajectory.times[-1] - trajectory.times[0]
    if not alpha > 0 or windows < 2 or not alpha < span / windows:
        raise DegenerateWindow("need 0 < alpha < span / windows and windows >= 2")
    tk, D = sliding_displacement(trajectory.times, trajectory.states, alpha)
    edges = np.linspace(tk[0], tk[-1], windows + 1)
    first = D[tk <= edges[1]]
    last = D[tk >= edges[-2]]
    d_first = float(first.max()) if first.size else 0.0
    d_last = float(last.max()) if last.size else 0.0
    passed = d_last < 0.1 * d_first or d_last == 0.0
    return CauchyResult(passed, alpha, d_first, d_last, tk, D)


@dataclass(frozen=True)
class L2Result:
    integral: float
    tail_integral: float
    tail_vanishes: bool

    def to_dict(self):
        return asdict(self)


def l2_derivative_test(trajectory, tail_fraction: float = 0.1, threshold: float = 0.05) -> L2Result:
    """Trapezoid ``int |u'|^2 dt``; the tail is the last ``tail_fraction`` of the span."""
    t = trajectory.times
    q = np.einsum("ij,ij->i", trajectory.derivatives, trajectory.derivatives)
    cum = _cumtrapz(q, t)
    total = float(cum[-1])
    t_cut = t[-1] - tail_fraction * (t[-1] - t[0])
    tail = total - float(np.interp(t_cut, t, cum))
    return L2Result(total, tail, tail <= threshold * total if total > 0 else True)


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """``kind`` is ``"exponential"`` (``d ~ C e^{-rate t}``), ``"power"``
    (``d ~ C t^{-rate}``) or ``"no_decay"``."""

    kind: str
    rate: float
    constant: float
    residual: float
    window: tuple
    ambiguous: bool = False
    alternative: Optional[dict] = None

    def to_dict(self):
        return {"class": self.kind, "rate": self.rate, "constant": self.constant,
                "residual": self.residual, "window": list(self.window),
                "ambiguous": self.ambiguous, "alternative": self.alternative}


def _linfit(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return coef, float(math.sqrt(np.mean(res * res)))


def fit_decay(times, distances, window: Optional[tuple] = None, margin: float = 1.2,
              max_residual: float = 0.5, min_drop: float = 3.0, floor: float = 0.0) -> DecayFit:
    """Fit exponential and power-law models to ``distances`` on a window.

    The default window is the last half of the samples.  The model with the
    smaller rms log-residual wins; if the other one is within ``margin`` the
    fit is flagged ambiguous.  ``no_decay`` is returned when the best
    residual exceeds ``max_residual``, the rate is not positive, or the
    model's total log-drop over the window is below ``min_drop`` residuals.
    Samples with ``d <= floor`` (integration noise) are dropped before the
    window is chosen.
    """
    t = np.asarray(times, dtype=float)
    d = np.maximum(np.asarray(distances, dtype=float), DISTANCE_FLOOR)
    if floor > 0:
        keep = d > floor
        t, d = t[keep], d[keep]
    if window is None:
        sel = np.arange(t.size) >= t.size // 2
    else:
        sel = (t >= window[0]) & (t <= window[1])
    t, d = t[sel], d[sel]
    if t.size < 3 or not t[-1] > t[0]:
        raise DegenerateWindow("need at least 3 samples spanning a positive interval")
    y = np.log(d)
    win = (float(t[0]), float(t[-1]))

    (a_e, s_e), r_e = _linfit(t, y)
    exp_fit = {"class": "exponential", "rate": -s_e, "constant": math.exp(a_e), "residual": r_e,
               "drop": -s_e * (t[-1] - t[0])}
    fits = [exp_fit]
    pos = t > 0
    if pos.sum() >= 3 and t[pos][-1] > t[pos][0]:
        lt = np.log(t[pos])
        (a_p, s_p), r_p = _linfit(lt, y[pos])
        fits.append({"class": "power", "rate": -s_p, "constant": math.exp(a_p), "residual": r_p,
                     "drop": -s_p * (lt[-1] - lt[0])})
    fits.sort(key=lambda f: f["residual"])
    best = fits[0]
    other = fits[1] if len(fits) > 1 else None
    ambiguous = other is not None and other["residual"] < margin * best["residual"]
    alt = None if other is None else {k: other[k] for k in ("class", "rate", "residual")}
    if best["residual"] > max_residual or best["rate"] <= 0 or best["drop"] < min_drop * best["residual"]:
        return DecayFit("no_decay", best["rate"], best["constant"], best["residual"], win, ambiguous,
                        {k: best[k] for k in ("class", "rate", "residual")})
    return DecayFit(best["class"], best["rate"], best["constant"], best["residual"], win, ambiguous, alt)


def fit_model(times, distances, kind: str, window: Optional[tuple] = None) -> DecayFit:
    """Least-squares fit of a prescribed model (``"exponential"`` or ``"power"``)."""
    t = np.asarray(times, dtype=float)
    d = np.maximum(np.asarray(distances, dtype=float), DISTANCE_FLOOR)
    sel = (np.arange(t.size) >= t.size // 2) if window is None else ((t >= window[0]) & (t <= window[1]))
    if kind == "power":
        sel &= t > 0
    t, d = t[sel], d[sel]
    if t.size < 3 or not t[-1] > t[0]:
        raise DegenerateWindow("need at least 3 samples spanning a positive interval")
    x = t if kind == "exponential" else np.log(t)
    (a, s), r = _linfit(x, np.log(d))
    return DecayFit(kind, -s, math.exp(a), r, (float(t[0]), float(t[-1])))


# ---------------------------------------------------------------------------
# Zelenyak-type tail bounds


@dataclass(frozen=True)
class ZelenyakResult:
    hypothesis_holds: bool
    conclusion_holds: bool
    checked_times: np.ndarray
    hypothesis_ok: np.ndarray
    conclusion_ok: np.ndarray


def zelenyak_tail_check(times, p, mode: str, *, gamma: float = None, a: float = None,
                        alpha: float = None, K: float = None, rtol: float = 1e-6) -> ZelenyakResult:
    """Check the square-integrability hypothesis and the integral tail bound.

    ``mode="exp"`` uses ``int_t^T p^2 <= a e^{-gamma t}`` and concludes
    ``int_t^T p <= sqrt(a) b e^{-gamma t / 2}`` with
    ``b = e^{gamma/2} / (e^{gamma/2} - 1)``.  ``mode="pol"`` uses
    ``int_t^{2t} p^2 <= K t^{-2 alpha - 1}`` for every sample with
    ``2t <= T`` and concludes ``int_t^T p <= sqrt(K) / (1 - 2^{-alpha}) t^{-alpha}``.
    Integrals are cumulative trapezoids on the samples; ``rtol`` absorbs their
    quadrature error when a bound holds with equality.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("p must be non-negative")
    I1 = _cumtrapz(p, t)
    I2 = _cumtrapz(p * p, t)
    T = t[-1]
    slack = lambda bound: rtol * abs(bound) + 1e-300
    if mode == "exp":
        if not (gamma and gamma > 0 and a is not None and a >= 0):
            raise ValueError("exp mode needs gamma > 0 and a >= 0")
        b = math.exp(gamma / 2) / (math.exp(gamma / 2) - 1)
        tk = t[:-1]
        hyp_bound = a * np.exp(-gamma * tk)
        hyp = (I2[-1] - I2[:-1]) <= hyp_bound + slack(hyp_bound)
        con_bound = math.sqrt(a) * b * np.exp(-gamma * tk / 2)
        con = (I1[-1] - I1[:-1]) <= con_bound + slack(con_bound)
    elif mode == "pol":
        if not (alpha and alpha > 0 and K is not None and K >= 0):
            raise ValueError("pol mode needs alpha > 0 and K >= 0")
        tk = t[(t > 0) & (2 * t <= T)]
        hyp_bound = K * tk ** (-2 * alpha - 1)
        hyp = (np.interp(2 * tk, t, I2) - np.interp(tk, t, I2)) <= hyp_bound + slack(hyp_bound)
        con_bound = math.sqrt(K) / (1 - 2.0 ** (-alpha)) * tk ** (-alpha)
        con = (I1[-1] - np.interp(tk, t, I1)) <= con_bound + slack(con_bound)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ZelenyakResult(bool(np.all(hyp)), bool(np.all(con)), tk, hyp, con)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ConvergenceReport:
    """``verdict`` is ``"converged"``, ``"non_convergent"`` or ``"inconclusive"``."""

    verdict: str
    limit: Optional[np.ndarray]
    omega: OmegaEstimate
    fitted: Optional[DecayFit]
    predicted: Optional[object]
    cauchy: CauchyResult
    l2: L2Result
    limit_field_norm: Optional[float] = None
    notes: tuple = ()

    def to_dict(self) -> dict:
        pred = None
        if self.predicted is not None:
            pred = self.predicted.to_dict() if hasattr(self.predicted, "to_dict") else dict(self.predicted)
        return {
            "verdict": self.verdict,
            "limit": None if self.limit is None else [float(x) for x in self.limit],
            "limit_field_norm": self.limit_field_norm,
            "omega": self.omega.to_dict(),
            "fitted": None if self.fitted is None else self.fitted.to_dict(),
            "predicted": pred,
            "criteria": {"cauchy": self.cauchy.to_dict(), "l2": self.l2.to_dict()},
            "notes": list(self.notes),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def distances_to(trajectory, point) -> np.ndarray:
    return np.linalg.norm(trajectory.states - np.asarray(point, dtype=float), axis=1)


def default_alpha(trajectory, windows: int = 10) -> float:
    span = trajectory.times[-1] - trajectory.times[0]
    return min(1.0, 0.5 * span / windows)


def analyze(trajectory, system=None, *, limit=None, predicted=None, burn_in_fraction: float = 0.5,
            alpha: Optional[float] = None, windows: int = 10, projection=(0, 1),
            polish: bool = True) -> ConvergenceReport:
    """Run the omega, Cauchy, L2 and decay diagnostics and combine them.

    A singleton limit set gives ``converged``; a closed curve gives
    ``non_convergent``; otherwise a failed Cauchy test gives
    ``non_convergent`` and a passed one ``inconclusive``.  When ``system`` is
    given and no ``limit`` is supplied, the final state is refined by a
    Newton solve on the field before the decay fit.  For an inconclusive
    verdict the fit uses the equilibrium Newton finds from the final state,
    provided the tail moves toward it.
    """
    notes = []
    om = omega_estimate(trajectory, burn_in_fraction, projection=projection)
    a = default_alpha(trajectory, windows) if alpha is None else alpha
    ca = cauchy_convergence_test(trajectory, a, windows)
    l2 = l2_derivative_test(trajectory)
    if om.kind == "singleton":
        verdict = "converged"
    elif om.kind == "closed_curve":
        verdict = "non_convergent"
    else:
        verdict = "non_convergent" if not ca.passed else "inconclusive"

    lim = None if limit is None else np.asarray(limit, dtype=float)
    if lim is None and verdict == "converged":
        lim = trajectory.final_state.copy()
        if system is not None and polish:
            from .stability import newton_polish
            refined = newton_polish(system, lim)
            if refined is not None and np.linalg.norm(refined - lim) <= max(10 * om.diameter, 1e-8):
                lim = refined
                notes.append("limit refined by Newton on the field")
    elif lim is None and verdict == "inconclusive" and system is not None and polish:
        # slow convergence: fit against a nearby equilibrium the tail approaches
        from .stability import newton_polish
        cand = newton_polish(system, trajectory.final_state)
        if cand is not None and np.linalg.norm(system(cand)) <= 1e-10:
            d = distances_to(trajectory, cand)
            n0 = int(math.floor(burn_in_fraction * d.size))
            if d[-1] < d[n0]:
                lim = cand
                notes.append("candidate limit: equilibrium found by Newton from the final state")
    fnorm = None
    if lim is not None and system is not None:
        fnorm = float(np.linalg.norm(system(lim)))
    fitted = None
    if lim is not None:
        try:
            floor = 10.0 * (trajectory.abs_tol + trajectory.rel_tol * float(np.linalg.norm(lim)))
            fitted = fit_decay(trajectory.times, distances_to(trajectory, lim), floor=floor)
        except DegenerateWindow as exc:
            notes.append(f"decay fit skipped: {exc}")
    return ConvergenceReport(verdict, lim, om, fitted, predicted, ca, l2, fnorm, tuple(notes))
