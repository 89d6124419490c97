"""Scenario files (TOML) and the runner that turns them into reports.

Schema (version 1)::

    name = "duffing"            # required
    seed = 0                    # required when "loja" is requested
    analyses = ["omega", "cauchy", "l2", "fit", "loja", "stability"]
    initial = [2.0, 0.0]        # optional; gallery default otherwise

    [system]                    # exactly one of gallery / potential / pde
    gallery = "duffing_damped"
    params = { }                # gallery parameters
    mode = "radial"             # palis_demelo only: integrate the radius ODE

    # inline potential: polynomial table or a named preset
    potential = { terms = [[0.25, [4]], [-0.5, [2]]] }   # or { preset = "pendulum" }
    order = 1                   # 1: gradient flow, 2: damped second-order flow
    damping = { kind = "linear", coefficient = 1.0 }     # or kind = "power", exponent = a

    # method-of-lines PDE
    pde = { equation = "heat", length = 3.14159, m = 64, nonlinearity = "bistable", gamma = 1.0 }

    [integrator]                # any IntegratorConfig field, plus log_grid = { n, t_first }
    [analysis]                  # burn_in_fraction, alpha, windows, limit, theta, loja_point,
                                # loja_radii, samples_per_shell, stability_seeds
"""

from __future__ import annotations

import json
import math
import re
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .analysis import analyze
from .core import DampingLaw, Potential
from .errors import BuildError, ConvergeLabError, ParameterViolation, ParseError, UnknownName
from .flows import (RadialReduction, gallery, gradient_flow, palis_demelo_potential,
                    polynomial_potential, second_order_flow)
from .integrate import IntegratorConfig, integrate, log_time_grid
from .lojasiewicz import (estimate_exponent, predict_first_order, predict_nonlinear_damping)
from .pde import Grid1D, Nonlinearity, discretize_heat, discretize_wave
from .stability import classify, find_equilibria, linearize

SCHEMA_VERSION = 1
ANALYSES = ("omega", "cauchy", "l2", "fit", "loja", "stability")
_TOP_KEYS = {"name", "seed", "analyses", "initial", "system", "integrator", "analysis"}
_INTEGRATOR_KEYS = {"t_max", "rel_tol", "abs_tol", "max_step", "min_step", "sample_interval",
                    "blow_up_norm", "log_grid"}
_ANALYSIS_KEYS = {"burn_in_fraction", "alpha", "windows", "limit", "theta", "loja_point",
                  "loja_radii", "samples_per_shell", "stability_seeds"}


@dataclass(frozen=True)
class Scenario:
    name: str
    system: dict
    initial: Optional[tuple] = None
    integrator: dict = dc_field(default_factory=dict)
    analyses: tuple = ("omega", "cauchy", "l2", "fit")
    analysis: dict = dc_field(default_factory=dict)
    seed: Optional[int] = None
    source: str = ""

    def echo(self) -> dict:
        out = {"name": self.name, "system": self.system, "analyses": list(self.analyses),
               "integrator": self.integrator, "analysis": self.analysis, "seed": self.seed}
        if self.initial is not None:
            out["initial"] = list(self.initial)
        return out

    def with_overrides(self, seed=None, t_max=None, tol=None) -> "Scenario":
        integ = dict(self.integrator)
        if t_max is not None:
            integ["t_max"] = float(t_max)
        if tol is not None:
            integ["rel_tol"] = float(tol)
            integ["abs_tol"] = float(tol) * 1e-2
        return Scenario(self.name, self.system, self.initial, integ, self.analyses, self.analysis,
                        self.seed if seed is None else int(seed), self.source)


_POS = re.compile(r"at line (\d+), column (\d+)")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate scenario text; raises :class:`ParseError`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _POS.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"{source}: {exc}", line, col) from None
    return scenario_from_dict(doc, source)


def _fail(source, msg):
    raise ParseError(f"{source}: {msg}")


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        _fail(source, f"unknown top-level keys {sorted(unknown)}")
    if not isinstance(doc.get("name"), str):
        _fail(source, "'name' must be a string")
    system = doc.get("system")
    if not isinstance(system, dict):
        _fail(source, "missing [system] table")
    kinds = [k for k in ("gallery", "potential", "pde") if k in system]
    if len(kinds) != 1:
        _fail(source, "[system] needs exactly one of gallery, potential, pde")
    analyses = tuple(doc.get("analyses", ("omega", "cauchy", "l2", "fit")))
    bad = [a for a in analyses if a not in ANALYSES]
    if bad:
        _fail(source, f"unknown analyses {bad}; allowed {list(ANALYSES)}")
    seed = doc.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        _fail(source, "'seed' must be a non-negative integer")
    if "loja" in analyses and seed is None:
        _fail(source, "'seed' is required when 'loja' is requested")
    integ = doc.get("integrator", {})
    if set(integ) - _INTEGRATOR_KEYS:
        _fail(source, f"unknown [integrator] keys {sorted(set(integ) - _INTEGRATOR_KEYS)}")
    an = doc.get("analysis", {})
    if set(an) - _ANALYSIS_KEYS:
        _fail(source, f"unknown [analysis] keys {sorted(set(an) - _ANALYSIS_KEYS)}")
    init = doc.get("initial")
    if init is not None:
        if not isinstance(init, list) or not all(isinstance(x, (int, float)) for x in init):
            _fail(source, "'initial' must be a list of numbers")
        init = tuple(float(x) for x in init)
    return Scenario(doc["name"], system, init, dict(integ), analyses, dict(an), seed, source)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{p}: {exc}") from None
    return parse_scenario(text, str(p))


# ---------------------------------------------------------------------------
# system resolution


@dataclass
class Resolved:
    system: object
    initial: np.ndarray
    t_max: float
    sample_interval: float
    potential: Optional[Potential] = None
    order: int = 1
    damping: Optional[DampingLaw] = None
    radial: Optional[RadialReduction] = None
    expected: Optional[object] = None
    log_grid: Optional[dict] = None


def _preset(name: str) -> Potential:
    if name == "palis_demelo":
        return palis_demelo_potential(1)
    if name == "pendulum":
        return Potential(1, lambda u: 1.0 - math.cos(float(np.ravel(u)[0])),
                         lambda u: np.array([math.sin(u[0])]),
                         lambda u: np.array([[math.cos(u[0])]]), label="1-cos u")
    if name == "double_well":
        return polynomial_potential([(0.25, (4,)), (-0.5, (2,))], label="u^4/4-u^2/2")
    raise UnknownName(f"unknown potential preset {name!r}")


def _damping(spec) -> DampingLaw:
    spec = spec or {"kind": "linear"}
    kind = spec.get("kind", "linear")
    if kind == "linear":
        return DampingLaw.linear(float(spec.get("coefficient", 1.0)))
    if kind == "power":
        return DampingLaw.power_law(float(spec["exponent"]), float(spec.get("coefficient", 1.0)))
    raise UnknownName(f"unknown damping kind {kind!r}")


def _nonlinearity(spec) -> Nonlinearity:
    if isinstance(spec, dict) and "linear" in spec:
        return Nonlinearity.linear(float(spec["linear"]))
    table = {"zero": Nonlinearity.zero, "cubic": Nonlinearity.cubic,
             "bistable": Nonlinearity.bistable, "sine": Nonlinearity.sine}
    if spec not in table:
        raise UnknownName(f"unknown nonlinearity {spec!r}")
    return table[spec]()


def resolve(sc: Scenario) -> Resolved:
    """Build the system; configuration errors surface as :class:`BuildError`."""
    try:
        return _resolve(sc)
    except (UnknownName, ParameterViolation, KeyError, TypeError, ValueError) as exc:
        raise BuildError(f"{sc.source or sc.name}: {exc}") from None


def _resolve(sc: Scenario) -> Resolved:
    s = sc.system
    if "gallery" in s:
        params = dict(s.get("params", {}))
        entry = gallery(s["gallery"], **params)
        if s.get("mode") == "radial":
            if entry.name != "palis_demelo":
                raise ParameterViolation("radial mode is only defined for palis_demelo")
            from .flows import palis_demelo_radial
            red = palis_demelo_radial(params.get("k", 1), params.get("r0", 0.5))
            r0 = sc.initial[0] if sc.initial else red.r0
            return Resolved(red.system, np.array([r0]), 1e30, 1.0, None, 1, None, red, entry.expected,
                            {"n": 4000, "t_first": 1.0})
        init = np.array(sc.initial) if sc.initial is not None else np.array(entry.default_initial)
        pot = None
        order = 1
        damping = None
        name = entry.name
        if name in ("power_decay",):
            from .flows import power_potential
            p = entry.params["p"]
            pot = power_potential(p + 1, 1.0 / (p + 1))
        elif name in ("duffing_damped", "weak_damping"):
            from .flows import double_well
            pot, order = double_well(), 2
            damping = (DampingLaw.linear() if name == "duffing_damped"
                       else DampingLaw.power_law(1 - entry.params["eps"], entry.params["delta"]))
        elif name == "power_damped_oscillator":
            pot, order = polynomial_potential([(0.5, (2,))]), 2
            damping = DampingLaw.power_law(entry.params["p"] - 1, entry.params["c"])
        elif name == "palis_demelo":
            pot = palis_demelo_potential(entry.params["k"])
        return Resolved(entry.system, init, entry.t_max, entry.sample_interval, pot, order, damping,
                        None, entry.expected)
    if "potential" in s:
        ps = s["potential"]
        if "preset" in ps:
            pot = _preset(ps["preset"])
        else:
            terms = [(float(c), tuple(int(e) for e in ex)) for c, ex in ps["terms"]]
            pot = polynomial_potential(terms)
        order = int(s.get("order", 1))
        if order == 1:
            sys_, damping = gradient_flow(pot), None
        elif order == 2:
            damping = _damping(s.get("damping"))
            sys_ = second_order_flow(pot, damping)
        else:
            raise ParameterViolation("order must be 1 or 2")
        if sc.initial is None:
            raise ParameterViolation("inline systems need an 'initial' state")
        return Resolved(sys_, np.array(sc.initial), 100.0, 0.05, pot, order, damping)
    ps = s["pde"]
    grid = Grid1D(float(ps.get("length", math.pi)), int(ps.get("m", 32)))
    nl = _nonlinearity(ps.get("nonlinearity", "bistable"))
    eq = ps.get("equation", "heat")
    if sc.initial is not None:
        init = np.array(sc.initial)
    else:
        prof = ps.get("initial_profile", {"amplitude": 0.8, "mode": 2})
        init = float(prof.get("amplitude", 0.8)) * np.sin(int(prof.get("mode", 2)) * math.pi
                                                           * grid.nodes / grid.length)
    if eq == "heat":
        sys_ = discretize_heat(nl, grid)
    elif eq == "wave":
        sys_ = discretize_wave(nl, float(ps.get("gamma", 1.0)), grid)
        if init.size == grid.m:
            init = np.concatenate([init, np.zeros(grid.m)])
    else:
        raise UnknownName(f"unknown equation {eq!r}")
    return Resolved(sys_, init, 20.0, 0.05)


def integrator_config(sc: Scenario, res: Resolved) -> IntegratorConfig:
    kw = dict(sc.integrator)
    lg = kw.pop("log_grid", res.log_grid)
    kw.setdefault("t_max", res.t_max)
    kw.setdefault("sample_interval", res.sample_interval)
    if lg:
        kw["sample_times"] = log_time_grid(kw["t_max"], int(lg.get("n", 2000)), float(lg.get("t_first", 1.0)))
    return IntegratorConfig(**kw)


# ---------------------------------------------------------------------------
# running


def _prediction(res: Resolved, theta: float):
    if res.order == 2 and res.damping is not None and res.damping.kind == "power":
        return predict_nonlinear_damping(min(theta, 0.5), res.damping.exponent)
    return predict_first_order(min(theta, 0.5))


def _rates_agree(pred, fit, rel: float = 0.25) -> Optional[bool]:
    if pred is None or fit is None:
        return None
    if pred.kind != fit.kind:
        return False
    if pred.kind == "power":
        return abs(fit.rate - pred.exponent) <= rel * pred.exponent
    return True


def run_scenario(sc: Scenario, out_prefix=None) -> dict:
    """Run one scenario and return its report document.

    With ``out_prefix`` the trajectory CSV and report JSON are written to
    ``<prefix>.csv`` and ``<prefix>.json``.
    """
    t0 = time.perf_counter()
    res = resolve(sc)
    rep = {"schema_version": SCHEMA_VERSION, "artifact_version": __version__,
           "scenario": sc.echo(), "errors": {}}
    try:
        cfg = integrator_config(sc, res)
        traj = integrate(res.system, res.initial, cfg)
    except (ConvergeLabError, ValueError) as exc:
        rep["integration"] = {"error": f"{type(exc).__name__}: {exc}"}
        rep["timing"] = {"wall_time": time.perf_counter() - t0}
        return rep
    rep["integration"] = {"termination": traj.termination.value, "t_end": traj.t_end,
                          "steps": traj.n_steps, "rejected": traj.n_rejected, "samples": len(traj),
                          "events": [{"kind": e.kind.value, "t": float(e.t)} for e in traj.events_fired]}
    an_traj = traj
    an_system = res.system
    an = sc.analysis
    center = None
    if res.radial is not None:
        an_traj = res.radial.reconstruct(traj, clamp=True)
        an_system = gradient_flow(palis_demelo_potential(res.radial.k))
        center = (0.0, 0.0)
    if out_prefix is not None:
        an_traj.to_csv(f"{out_prefix}.csv")
        rep["outputs"] = {"trajectory": f"{out_prefix}.csv", "report": f"{out_prefix}.json"}

    conv = None
    wanted = set(sc.analyses)
    if wanted & {"omega", "cauchy", "l2", "fit"}:
        try:
            conv = analyze(an_traj, an_system, limit=an.get("limit"),
                           burn_in_fraction=an.get("burn_in_fraction", 0.5),
                           alpha=an.get("alpha"), windows=an.get("windows", 10))
            if center is not None:
                from .analysis import omega_estimate
                om = omega_estimate(an_traj, an.get("burn_in_fraction", 0.5), center=center)
                d = conv.to_dict()
                d["omega"] = om.to_dict()
                if om.kind == "closed_curve":
                    d["verdict"] = "non_convergent"
                rep["convergence"] = d
            else:
                rep["convergence"] = conv.to_dict()
        except ConvergeLabError as exc:
            rep["errors"]["convergence"] = f"{type(exc).__name__}: {exc}"

    loja = None
    if "loja" in wanted:
        try:
            if res.potential is None:
                raise BuildError("no potential is available for this system")
            n = res.potential.dimension
            if "loja_point" in an:
                a = np.asarray(an["loja_point"], dtype=float)
            elif conv is not None and conv.limit is not None:
                a = conv.limit[:n]
            else:
                raise BuildError("no critical point: set analysis.loja_point")
            kw = {"seed": sc.seed}
            if "loja_radii" in an:
                kw["radii"] = an["loja_radii"]
            if "samples_per_shell" in an:
                kw["samples_per_shell"] = int(an["samples_per_shell"])
            loja = estimate_exponent(res.potential, a, **kw)
            rep["lojasiewicz"] = loja.to_dict()
        except ConvergeLabError as exc:
            rep["errors"]["loja"] = f"{type(exc).__name__}: {exc}"

    if "stability" in wanted:
        try:
            seeds = an.get("stability_seeds")
            if seeds is None:
                seeds = [res.initial, traj.final_state]
            eqs = find_equilibria(res.system, seeds, tol=1e-9)
            rep["stability"] = [{"point": [float(x) for x in p],
                                 **classify(linearize(res.system, p)).to_dict()} for p in eqs]
        except ConvergeLabError as exc:
            rep["errors"]["stability"] = f"{type(exc).__name__}: {exc}"

    theta = an.get("theta", None if loja is None else loja.theta)
    if theta is not None and conv is not None:
        try:
            pred = _prediction(res, float(theta))
            fit = conv.fitted
            rep["rates"] = {"theta": float(theta), "predicted": pred.to_dict(),
                            "fitted": None if fit is None else fit.to_dict(),
                            "agree": _rates_agree(pred, fit)}
        except ConvergeLabError as exc:
            rep["errors"]["rates"] = f"{type(exc).__name__}: {exc}"

    for a_ in wanted:
        key = {"omega": "convergence", "cauchy": "convergence", "l2": "convergence",
               "fit": "convergence", "loja": "lojasiewicz", "stability": "stability"}[a_]
        if key not in rep and key not in rep["errors"] and a_ not in rep["errors"]:
            rep["errors"][a_] = "not computed"
    rep["timing"] = {"wall_time": time.perf_counter() - t0}
    if out_prefix is not None:
        Path(f"{out_prefix}.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default))
    return rep


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def comparable(report: dict) -> dict:
    """The report without timing and output paths, for determinism checks."""
    return {k: v for k, v in report.items() if k not in ("timing", "outputs")}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default)
