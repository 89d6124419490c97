"""Adaptive Dormand-Prince 5(4) integration with dense sampling and events.

The stepper propagates the fifth-order solution, controls the embedded
error with a proportional-integral step-size rule and samples the solution
on a fixed output grid through the pair's quartic continuous extension.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Optional

import numpy as np

from .core import EnergyFunctional, FirstOrderSystem, as_state
from .errors import BlowUp, ParameterViolation, StepUnderflow

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order minus embedded fourth-order weights, including the FSAL stage
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + s h) = y + h * K^T P [s, s^2, s^3, s^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_EVENT_TTOL = 1e-10


class EventKind(str, Enum):
    GRAD_NORM_BELOW = "grad_norm_below"
    VELOCITY_NORM_BELOW = "velocity_norm_below"
    STATE_ENTERS = "state_enters"
    STATE_NORM_ABOVE = "state_norm_above"


class Termination(str, Enum):
    COMPLETED = "completed"
    HALTED = "halted"
    BLOW_UP = "blow_up"


@dataclass(frozen=True)
class EventSpec:
    """Threshold crossing to watch for.

    ``threshold`` is epsilon for the norm-below kinds, the radius for
    ``STATE_ENTERS`` and R for ``STATE_NORM_ABOVE``.  ``action`` is
    ``"record"`` or ``"halt"``.
    """

    kind: EventKind
    threshold: float
    center: Optional[tuple] = None
    action: str = "record"

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if not self.threshold > 0:
            raise ParameterViolation("event thresholds must be positive")
        if self.action not in ("record", "halt"):
            raise ParameterViolation(f"unknown event action {self.action!r}")
        if self.kind is EventKind.STATE_ENTERS:
            if self.center is None:
                raise ParameterViolation("state_enters needs a ball center")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def indicator(self, system: FirstOrderSystem, y: np.ndarray) -> float:
        # fires when the indicator goes from positive to non-positive
        if self.kind is EventKind.GRAD_NORM_BELOW:
            return float(np.linalg.norm(system(y))) - self.threshold
        if self.kind is EventKind.VELOCITY_NORM_BELOW:
            half = y.size // 2
            return float(np.linalg.norm(y[half:])) - self.threshold
        if self.kind is EventKind.STATE_ENTERS:
            return float(np.linalg.norm(y - np.asarray(self.center))) - self.threshold
        return self.threshold - float(np.linalg.norm(y))


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    t: float
    state: tuple
    action: str


@dataclass(frozen=True)
class IntegratorConfig:
    t_max: float = 10.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: Optional[float] = None
    min_step: float = 1e-12
    sample_interval: float = 0.01
    blow_up_norm: float = 1e8
    events: tuple = ()
    sample_times: Optional[tuple] = None

    def __post_init__(self):
        if not self.t_max > 0:
            raise ParameterViolation("t_max must be positive")
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterViolation(f"{name} must lie in (0, 1)")
        if not self.sample_interval > 0:
            raise ParameterViolation("sample_interval must be positive")
        if not self.min_step > 0 or not self.min_step < self.effective_max_step:
            raise ParameterViolation("need 0 < min_step < max_step")
        object.__setattr__(self, "events", tuple(self.events))
        if self.sample_times is not None:
            st = np.asarray(self.sample_times, dtype=float)
            if st[0] != 0.0 or np.any(np.diff(st) <= 0) or st[-1] > self.t_max * (1 + 1e-12):
                raise ParameterViolation("sample_times must start at 0, increase strictly and end by t_max")
            object.__setattr__(self, "sample_times", tuple(float(s) for s in st))

    @property
    def effective_max_step(self) -> float:
        return self.t_max if self.max_step is None else self.max_step

    def replace(self, **changes) -> "IntegratorConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def grid(self) -> np.ndarray:
        if self.sample_times is not None:
            return np.asarray(self.sample_times)
        n = int(math.floor(self.t_max / self.sample_interval * (1 + 1e-12)))
        return np.arange(n + 1) * self.sample_interval


def log_time_grid(t_max: float, n: int, t_first: float = 1.0) -> tuple:
    """Grid ``0, t_first, ..., t_max`` with geometric spacing after 0."""
    return (0.0,) + tuple(np.geomspace(t_first, t_max, n))


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Samples of a solution on the output grid."""

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    energy_series: dict = dc_field(default_factory=dict)
    events_fired: tuple = ()
    termination: Termination = Termination.COMPLETED
    t_end: float = 0.0
    n_steps: int = 0
    n_rejected: int = 0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(self.times))
        object.__setattr__(self, "states", _readonly(np.atleast_2d(self.states)))
        object.__setattr__(self, "derivatives", _readonly(np.atleast_2d(self.derivatives)))
        object.__setattr__(self, "energy_series",
                           {k: _readonly(v) for k, v in self.energy_series.items()})
        object.__setattr__(self, "events_fired", tuple(self.events_fired))

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.times.size

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def after(self, t0: float) -> "Trajectory":
        """The samples with ``t >= t0``, re-based so the first one is at 0."""
        m = self.times >= t0
        return Trajectory(self.times[m] - self.times[m][0], self.states[m], self.derivatives[m],
                          {k: v[m] for k, v in self.energy_series.items()}, (), self.termination,
                          self.t_end - self.times[m][0], self.n_steps, self.n_rejected,
                          self.abs_tol, self.rel_tol)

    def to_csv(self, path) -> None:
        n = self.dimension
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"dx{i + 1}" for i in range(n)]
        labels = list(self.energy_series)
        header += [f"E_{lab}" for lab in labels]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.times.size):
                row = [self.times[k], *self.states[k], *self.derivatives[k]]
                row += [self.energy_series[lab][k] for lab in labels]
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        n = sum(1 for h in header if h.startswith("x"))
        energies = {h[2:]: body[:, j] for j, h in enumerate(header) if h.startswith("E_")}
        t = body[:, 0]
        return cls(t, body[:, 1:1 + n], body[:, 1 + n:1 + 2 * n], energies,
                   t_end=float(t[-1]) if t.size else 0.0)


def _initial_step(system, t_span, y0, f0, rtol, atol, max_step):
    # Hairer, Norsett & Wanner, section II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_span, max_step)
    y1 = y0 + h0 * f0
    f1 = system(y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(y0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_span, max_step)


def _dense(y, h, K, theta):
    Q = K.T @ _P  # n x 4
    th = np.asarray(theta, dtype=float)
    powers = np.stack([th, th**2, th**3, th**4])
    return y[:, None] + h * (Q @ powers)


def _locate(event, system, y, h, K, t, g_lo, hi_theta=1.0):
    lo, hi = 0.0, hi_theta
    while (hi - lo) * h > _EVENT_TTOL:
        mid = 0.5 * (lo + hi)
        g = event.indicator(system, _dense(y, h, K, [mid])[:, 0])
        if g > 0:
            lo = mid
        else:
            hi = mid
    return hi


def integrate(system: FirstOrderSystem, u0, config: IntegratorConfig = IntegratorConfig(),
              *, strict: bool = False) -> Trajectory:
    """Integrate ``system`` from ``u0`` over ``[0, config.t_max]``.

    Blow-up (``|u| > blow_up_norm`` or a non-finite state) ends the run and
    is reported through ``Trajectory.termination``; with ``strict=True`` it
    raises :class:`BlowUp` instead.  Raises :class:`StepUnderflow` when the
    controller asks for a step below ``min_step``.
    """
    y = as_state(u0, system.dimension).copy()
    rtol, atol = config.rel_tol, config.abs_tol
    max_step = config.effective_max_step
    if system.max_step is not None:
        max_step = min(max_step, system.max_step)
    t_end = config.t_max
    grid = config.grid()
    events = config.events

    t = 0.0
    f = system(y)
    K = np.empty((7, y.size))
    h = _initial_step(system, t_end, y, f, rtol, atol, max_step)
    err_old = 1e-4

    out_t = [0.0]
    out_y = [y.copy()]
    gi = 1  # next grid index
    g_prev = [ev.indicator(system, y) for ev in events]
    fired = []
    termination = Termination.COMPLETED
    n_steps = n_rej = 0
    rejected_last = False

    while t < t_end:
        h = min(h, max_step)
        last = t + h >= t_end
        if last:
            h = t_end - t
        K[0] = f
        for s in range(1, 6):
            K[s] = system(y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        f_new = system(y_new)
        K[6] = f_new
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            err = math.inf
        else:
            scale = atol + rtol * math.sqrt(max(y @ y, y_new @ y_new))
            e = _E @ K
            err = abs(h) * math.sqrt(e @ e) / scale

        if err > 1.0:
            n_rej += 1
            if not math.isfinite(err) and np.linalg.norm(y) > config.blow_up_norm / 10:
                termination = Termination.BLOW_UP
                break
            factor = _MIN_FACTOR if not math.isfinite(err) else max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            h *= factor
            rejected_last = True
            if h < config.min_step:
                raise StepUnderflow(t, h)
            continue

        n_steps += 1
        theta_stop = 1.0
        halt = False
        for j, ev in enumerate(events):
            g_new = ev.indicator(system, y_new)
            if g_prev[j] > 0 and g_new <= 0:
                th = _locate(ev, system, y, h, K, t, g_prev[j])
                ye = _dense(y, h, K, [th])[:, 0]
                fired.append((t + th * h, j, ye))
                if ev.action == "halt" and th < theta_stop:
                    theta_stop, halt = th, True
            g_prev[j] = g_new
        fired.sort(key=lambda e: e[0])

        t_stop = t + theta_stop * h if halt else (t_end if last else t + h)
        while gi < grid.size and grid[gi] <= t_stop * (1 + 1e-14):
            th = min((grid[gi] - t) / h, 1.0)
            out_t.append(float(grid[gi]))
            out_y.append(_dense(y, h, K, [th])[:, 0] if th < 1.0 else y_new.copy())
            gi += 1

        if halt:
            y_stop = _dense(y, h, K, [theta_stop])[:, 0]
            fired = [e for e in fired if e[0] <= t_stop]
            if t_stop > out_t[-1]:
                out_t.append(t_stop)
                out_y.append(y_stop)
            t = t_stop
            termination = Termination.HALTED
            break

        t = t_end if last else t + h
        y, f = y_new, f_new

        if y @ y > config.blow_up_norm**2:
            termination = Termination.BLOW_UP
            if t > out_t[-1]:
                out_t.append(t)
                out_y.append(y.copy())
            break

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * err ** -_EXPO * err_old ** _BETA
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        if rejected_last:
            factor = min(1.0, factor)
        rejected_last = False
        err_old = max(err, 1e-4)
        h *= factor
        if h < config.min_step and not last and t_end - t > config.min_step:
            raise StepUnderflow(t, h)

    if termination is Termination.BLOW_UP and strict:
        raise BlowUp(t, float(np.linalg.norm(y)))

    states = np.array(out_y)
    derivs = np.array([system(s) for s in states])
    energies = {e.label: e.series(states) for e in system.energies}
    records = tuple(EventRecord(events[j].kind, te, tuple(ye), events[j].action) for te, j, ye in fired)
    return Trajectory(np.array(out_t), states, derivs, energies, records, termination, t,
                      n_steps, n_rej, atol, rtol)


@dataclass(frozen=True)
class EnergyAudit:
    is_nonincreasing: bool
    max_uptick: float
    series: np.ndarray
    tolerance: float
    is_constant: bool


def energy_audit(trajectory: Trajectory, functional: EnergyFunctional,
                 tolerance: Optional[float] = None, t_from: float = 0.0) -> EnergyAudit:
    """Check that ``functional`` does not increase along the samples.

    The default tolerance is ``10 (abs_tol + rel_tol * scale)`` with
    ``scale`` the largest magnitude of the series.  ``is_constant`` holds
    when the total spread is within ten tolerances.  ``t_from`` restricts the
    audit to the tail ``t >= t_from``.
    """
    m = trajectory.times >= t_from
    series = functional.series(trajectory.states[m])
    if tolerance is None:
        scale = float(np.max(np.abs(series))) if series.size else 0.0
        tolerance = 10.0 * (trajectory.abs_tol + trajectory.rel_tol * scale)
    diffs = np.diff(series)
    max_up = float(diffs.max()) if diffs.size else 0.0
    spread = float(series.max() - series.min()) if series.size else 0.0
    # drift accumulates over the run, so "constant" gets a 10x wider band
    return EnergyAudit(max_up <= tolerance, max_up, series, tolerance, spread <= 10.0 * tolerance)
