import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from converge_lab.analysis import (analyze, cauchy_convergence_test, fit_decay, fit_model,
                                   l2_derivative_test, omega_estimate, sliding_displacement,
                                   winding_number, zelenyak_tail_check)
from converge_lab.core import DampingLaw, FirstOrderSystem
from converge_lab.errors import DegenerateWindow, TooFewSamples
from converge_lab.flows import double_well, gallery, gradient_flow, palis_demelo_radial, polynomial_potential, second_order_flow
from converge_lab.integrate import IntegratorConfig, Trajectory, integrate, log_time_grid


def harmonic_traj(t_max=200.0, dt=0.05):
    sys = FirstOrderSystem(2, lambda y: np.array([y[1], -y[0]]))
    return integrate(sys, [1.0, 0.0], IntegratorConfig(t_max=t_max, sample_interval=dt))


def synthetic(times, states):
    states = np.asarray(states, dtype=float).reshape(len(times), -1)
    deriv = np.gradient(states, times, axis=0)
    return Trajectory(np.asarray(times, dtype=float), states, deriv)


def test_omega_singleton_for_quadratic_flow():
    phi = polynomial_potential([(1.0, (2,))])
    tr = integrate(gradient_flow(phi), [1.0], IntegratorConfig(t_max=20.0))
    om = omega_estimate(tr)
    assert om.kind == "singleton"
    assert om.diameter < 1e-6
    assert abs(om.point[0]) < 1e-6


def test_omega_closed_curve_for_harmonic():
    om = omega_estimate(harmonic_traj())
    assert om.kind == "closed_curve"
    assert om.mean_radius == pytest.approx(1.0, abs=1e-3)
    assert abs(om.winding) > 10
    assert om.connected


def test_omega_closed_curve_for_reconstructed_spiral():
    red = palis_demelo_radial(1, 0.5)
    cfg = IntegratorConfig(t_max=1e30, sample_times=log_time_grid(1e30, 4000))
    tr = red.reconstruct(integrate(red.system, [0.5], cfg))
    om = omega_estimate(tr, center=(0.0, 0.0))
    assert om.kind == "closed_curve"
    assert 0.98 <= om.mean_radius <= 1.0


def test_omega_too_few_samples():
    tr = harmonic_traj(t_max=1.0, dt=0.05)
    with pytest.raises(TooFewSamples):
        omega_estimate(tr)


def test_omega_invariant_under_prefix_shift():
    sys = second_order_flow(double_well(), DampingLaw.linear())
    tr = integrate(sys, [2.0, 0.0], IntegratorConfig(t_max=60.0, sample_interval=0.02))
    base = omega_estimate(tr)
    for t0 in (5.0, 15.0, 25.0):
        shifted = omega_estimate(tr.after(t0))
        assert shifted.kind == base.kind == "singleton"
        assert np.linalg.norm(shifted.point - base.point) <= 1e-6


def test_omega_invariant_harmonic_shift():
    tr = harmonic_traj()
    base = omega_estimate(tr, center=(0.0, 0.0))
    for t0 in (10.0, 40.0, 77.0):
        om = omega_estimate(tr.after(t0), center=(0.0, 0.0))
        assert om.kind == base.kind == "closed_curve"
        assert abs(om.mean_radius - base.mean_radius) <= 1e-6


def test_omega_chain_connectivity_detects_gap():
    t = np.linspace(0, 1, 400)
    x = np.where(t < 0.5, 0.0, 10.0)
    tr = synthetic(t, np.column_stack([x, np.zeros_like(x)]))
    assert not omega_estimate(tr, burn_in_fraction=0.0, chain_eps=1.0).connected
    assert omega_estimate(tr, burn_in_fraction=0.0, chain_eps=20.0).connected


def test_winding_number_full_turns():
    a = np.linspace(0, 6 * math.pi, 1000)
    pts = np.column_stack([np.cos(a), np.sin(a)])
    assert winding_number(pts, np.zeros(2)) == pytest.approx(3.0)
    assert winding_number(pts[::-1], np.zeros(2)) == pytest.approx(-3.0)


def test_cauchy_duffing_converges():
    tr = integrate(second_order_flow(double_well(), DampingLaw.linear()), [2.0, 0.0],
                   IntegratorConfig(t_max=60.0, sample_interval=0.02))
    assert cauchy_convergence_test(tr, 1.0).passed


def test_cauchy_harmonic_fails():
    res = cauchy_convergence_test(harmonic_traj(), math.pi)
    assert not res.passed
    assert res.first_window == pytest.approx(2.0, abs=1e-3)
    assert res.last_window == pytest.approx(2.0, abs=1e-3)


def test_cauchy_constant_trajectory():
    t = np.linspace(0, 10, 201)
    tr = synthetic(t, np.ones((201, 2)))
    res = cauchy_convergence_test(tr, 0.5)
    assert res.passed
    assert np.all(res.displacement == 0)


def test_cauchy_window_guard():
    with pytest.raises(DegenerateWindow):
        cauchy_convergence_test(harmonic_traj(t_max=10.0), 2.0, windows=10)
    with pytest.raises(DegenerateWindow):
        cauchy_convergence_test(harmonic_traj(t_max=10.0), 0.0)


def test_sliding_displacement_brute_force(rng):
    t = np.sort(rng.uniform(0, 5, 120))
    x = rng.standard_normal((120, 2))
    tk, D = sliding_displacement(t, x, 0.4)
    for k, tt in enumerate(tk):
        i = np.searchsorted(t, tt)
        j = (t > tt) & (t <= tt + 0.4 * (1 + 1e-12))
        ref = np.linalg.norm(x[j] - x[i], axis=1).max() if j.any() else 0.0
        assert D[k] == pytest.approx(ref)


def test_l2_linear_decay():
    tr = integrate(FirstOrderSystem(1, lambda u: -u), [1.0], IntegratorConfig(t_max=30.0, sample_interval=0.005))
    res = l2_derivative_test(tr)
    assert abs(res.integral - 0.5) < 1e-3
    assert res.tail_vanishes


def test_l2_harmonic_does_not_vanish():
    assert not l2_derivative_test(harmonic_traj()).tail_vanishes


def test_l2_equilibrium_start():
    tr = integrate(FirstOrderSystem(1, lambda u: -u), [0.0], IntegratorConfig(t_max=5.0))
    assert l2_derivative_test(tr).integral == 0.0


def test_fit_exponential_exact():
    t = np.linspace(0, 10, 500)
    fit = fit_decay(t, 3 * np.exp(-2 * t))
    assert fit.kind == "exponential"
    assert fit.rate == pytest.approx(2.0, abs=0.01)
    assert fit.constant == pytest.approx(3.0, rel=1e-6)


def test_fit_power_exact():
    t = np.linspace(0, 1000, 5000)
    fit = fit_decay(t, (1 + 2 * t) ** -0.5)
    assert fit.kind == "power"
    assert fit.rate == pytest.approx(0.5, abs=0.02)


def test_fit_no_decay():
    t = np.linspace(0, 100, 2000)
    assert fit_decay(t, 1 + 0.1 * np.sin(t)).kind == "no_decay"


def test_fit_residual_nonnegative_and_window():
    t = np.linspace(0, 10, 101)
    fit = fit_decay(t, np.exp(-t), window=(2.0, 8.0))
    assert fit.residual >= 0
    assert fit.window == (2.0, 8.0)
    with pytest.raises(DegenerateWindow):
        fit_decay(t, np.exp(-t), window=(2.0, 2.05))


def test_fit_zero_distances_clipped():
    t = np.linspace(0, 10, 100)
    d = np.exp(-t)
    d[-5:] = 0.0
    fit = fit_decay(t, d)
    assert math.isfinite(fit.rate)


def test_fit_model_prescribed():
    t = np.linspace(1, 100, 300)
    assert fit_model(t, 5 * t**-1.5, "power").rate == pytest.approx(1.5, rel=1e-10)
    assert fit_model(t, np.exp(-0.1 * t), "exponential").rate == pytest.approx(0.1, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.1, max_value=5.0), st.floats(min_value=0.1, max_value=10.0))
def test_fit_recovers_exponential_rate(delta, C):
    t = np.linspace(0, 25.0 / delta, 400)
    fit = fit_decay(t, C * np.exp(-delta * t))
    assert fit.kind == "exponential"
    assert fit.rate == pytest.approx(delta, rel=0.01)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.2, max_value=3.0), st.floats(min_value=0.1, max_value=10.0))
def test_fit_recovers_power_rate(gamma, C):
    t_end = min(1e6, 1e12 ** (1.0 / gamma))
    t = np.geomspace(1.0, t_end, 400)
    fit = fit_decay(t, C * t**-gamma)
    assert fit.kind == "power"
    assert fit.rate == pytest.approx(gamma, rel=0.01)


def test_zelenyak_exponential():
    t = np.linspace(0, 30, 30001)
    res = zelenyak_tail_check(t, np.exp(-t), "exp", gamma=2.0, a=0.5)
    assert res.hypothesis_holds and res.conclusion_holds


def test_zelenyak_zero():
    t = np.linspace(0, 10, 101)
    assert zelenyak_tail_check(t, np.zeros(101), "exp", gamma=1.0, a=0.0).conclusion_holds
    res = zelenyak_tail_check(t, np.zeros(101), "pol", alpha=1.0, K=0.0)
    assert res.hypothesis_holds and res.conclusion_holds


def test_zelenyak_polynomial_hypothesis():
    # int_t^{2t} s^-2 ds = 1/(2t) is not O(t^-2): the per-window hypothesis must fail late
    t = np.geomspace(1.0, 1e4, 20000)
    res = zelenyak_tail_check(t, 1.0 / t, "pol", alpha=0.5, K=2.0)
    assert res.hypothesis_ok[0]
    assert not res.hypothesis_holds


def test_zelenyak_polynomial_valid_case():
    # p = t^-2: int_t^{2t} p^2 = 7/(24 t^3) <= K t^-3, alpha = 1
    t = np.geomspace(1.0, 1e3, 40000)
    res = zelenyak_tail_check(t, t**-2.0, "pol", alpha=1.0, K=0.3)
    assert res.hypothesis_holds and res.conclusion_holds


def test_zelenyak_rejects_negative():
    with pytest.raises(ValueError):
        zelenyak_tail_check([0.0, 1.0], [-1.0, 0.0], "exp", gamma=1.0, a=1.0)


def test_analyze_duffing():
    entry = gallery("duffing_damped")
    tr = integrate(entry.system, entry.default_initial,
                   IntegratorConfig(t_max=entry.t_max, sample_interval=entry.sample_interval))
    rep = analyze(tr, entry.system)
    assert rep.verdict == "converged"
    assert rep.omega.kind == "singleton"
    assert np.allclose(rep.limit, [1.0, 0.0], atol=1e-8)
    assert rep.limit_field_norm <= 1e-4
    assert rep.fitted.kind == "exponential"
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"verdict", "limit", "fitted", "predicted", "criteria"}
    assert set(doc["fitted"]) >= {"class", "rate", "residual"}


def test_analyze_harmonic_non_convergent():
    rep = analyze(harmonic_traj())
    assert rep.verdict == "non_convergent"
    assert rep.omega.kind == "closed_curve"
    assert rep.limit is None


def test_converged_implies_singleton():
    for name in ("duffing_damped", "naka_rushton", "robot_arm"):
        entry = gallery(name)
        tr = integrate(entry.system, entry.default_initial,
                       IntegratorConfig(t_max=entry.t_max, sample_interval=entry.sample_interval))
        rep = analyze(tr, entry.system)
        if rep.verdict == "converged":
            assert rep.omega.kind == "singleton"
            assert rep.limit_field_norm <= 1e-4
