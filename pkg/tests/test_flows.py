import math

import numpy as np
import pytest

from converge_lab.core import DampingLaw, grad_fd
from converge_lab.errors import DomainExit, ParameterViolation, UnknownName
from converge_lab.flows import (GALLERY_NAMES, ConvergesTo, EnergyConserved, NonConvergentCircle,
                                Oscillates, chergui_energy, coupled_oscillator, double_well, gallery,
                                gradient_flow, palis_demelo_potential, palis_demelo_radial,
                                perturbed_energy, polynomial_potential, second_order_flow,
                                second_order_lift, strict_liapunov_coupled)
from converge_lab.integrate import IntegratorConfig, energy_audit, integrate

HALF_SQ = polynomial_potential([(0.5, (2,))])
QUARTIC = polynomial_potential([(0.25, (4,))])


def test_gradient_flow_examples():
    assert gradient_flow(HALF_SQ)([3.0])[0] == -3.0
    assert gradient_flow(double_well())([1.0])[0] == 0.0
    disc = polynomial_potential([(0.5, (2, 0)), (0.5, (0, 2))])
    assert np.allclose(gradient_flow(disc)([1.0, 1.0]), [-1.0, -1.0])
    assert gradient_flow(HALF_SQ).energies[0]([2.0]) == 2.0


def test_second_order_flow_examples():
    assert np.allclose(second_order_flow(double_well(), DampingLaw.linear())([1.0, 0.0]), [0, 0])
    assert np.allclose(second_order_flow(HALF_SQ, DampingLaw.linear())([0.0, 1.0]), [1, -1])
    assert np.allclose(second_order_flow(HALF_SQ, DampingLaw.power_law(1, 1))([0.0, 2.0]), [2, -4])


def test_second_order_flow_matches_independent_evaluation():
    Phi = polynomial_potential([(1.0, (2, 0)), (0.5, (1, 1)), (0.25, (0, 4))])
    g = DampingLaw.power_law(0.5, 2.0)
    sys_ = second_order_flow(Phi, g)
    for u1 in np.linspace(-1, 1, 5):
        for v1 in np.linspace(-1, 1, 5):
            y = np.array([u1, 0.3, v1, -0.2])
            u, v = y[:2], y[2:]
            grad = np.array([2 * u[0] + 0.5 * u[1], 0.5 * u[0] + u[1] ** 3])
            damp = 2.0 * np.linalg.norm(v) ** 0.5 * v
            assert np.allclose(sys_(y), np.concatenate([v, -damp - grad]), atol=1e-14)


def test_perturbed_energy():
    assert abs(perturbed_energy(HALF_SQ, 0.1)([1.0, 1.0]) - 1.1) < 1e-14
    assert abs(perturbed_energy(QUARTIC, 0.1)([1.0, 0.0]) - 0.25) < 1e-14
    E = second_order_flow(double_well(), DampingLaw.linear()).energies[0]
    for y in ([0.3, -1.0], [2.0, 0.5]):
        assert perturbed_energy(double_well(), 0.0)(y) == pytest.approx(E(y))


def test_chergui_energy():
    assert abs(chergui_energy(HALF_SQ, 1.0, 0.1)([1.0, 1.0]) - 1.1) < 1e-14
    # alpha = 0 reduces to the perturbed energy shifted by e_inf
    y = [0.7, -0.4]
    assert chergui_energy(QUARTIC, 0.0, 0.2, 0.5)(y) == pytest.approx(perturbed_energy(QUARTIC, 0.2)(y) - 0.5)
    dw = double_well()
    assert chergui_energy(dw, 0.7, 0.3, -1.0)([1.0, 0.0]) == pytest.approx(-0.25 + 1.0)


def test_coupled_oscillator():
    assert np.allclose(coupled_oscillator(1.0, 0.5)([1, 0, 0, 0]), [0, 0, -1, -0.5])
    assert np.allclose(coupled_oscillator(1.0, 0.5)([0, 0, 0, 0]), 0)
    assert np.allclose(coupled_oscillator(2.0, 1.0)([0, 1, 0, 0]), [0, 0, -1, -2])
    with pytest.raises(ParameterViolation):
        coupled_oscillator(1.0, 1.0)


def test_strict_liapunov_coupled():
    H = strict_liapunov_coupled(1.0, 0.5, 2.0, 0.01)
    assert H([1, 0, 0, 0]) == pytest.approx(0.5)
    assert H([0, 0, 0, 0]) == 0.0
    E = coupled_oscillator(1.0, 0.5).energies[0]
    y = [0.3, -0.2, 0.5, 0.1]
    assert strict_liapunov_coupled(1.0, 0.5, 2.0, 0.0)(y) == pytest.approx(E(y))


def test_palis_demelo_values():
    phi = palis_demelo_potential(1)
    assert phi([0.0, 0.0]) == pytest.approx(math.exp(-1))
    for p in ([1.0, 0.0], [0.8, 0.6], [1.5, 0.0], [-3.0, 2.0]):
        assert phi(p) == 0.0
    assert np.array_equal(phi.grad([1.5, 0.0]), [0.0, 0.0])
    # close to the circle the exponential factor underflows without NaN
    assert phi([0.999999, 0.0]) == 0.0 and np.all(np.isfinite(phi.grad([0.99999, 0.0])))


@pytest.mark.parametrize("k", [1, 2])
def test_palis_demelo_gradient_matches_fd(k):
    phi = palis_demelo_potential(k)
    rng = np.random.default_rng(k)
    for _ in range(200):
        r, t = rng.uniform(0.2, 0.8), rng.uniform(0, 2 * np.pi)
        p = np.array([r * np.cos(t), r * np.sin(t)])
        assert np.max(np.abs(phi.grad(p) - grad_fd(phi, p))) < 1e-6


def test_radial_speed_positive():
    red = palis_demelo_radial(1, 0.5)
    for r in np.linspace(0.01, 0.99, 99):
        assert red.system([r])[0] > 0


def test_radial_solution_monotone_and_angle_grows():
    red = palis_demelo_radial(1, 0.5)
    tr = integrate(red.system, [0.5], IntegratorConfig(t_max=1000.0, sample_interval=1.0))
    r = tr.states[:, 0]
    assert np.all(np.diff(r) > 0) and r[-1] < 1.0
    theta = red.angle(r)
    assert np.all(np.diff(theta) > 0) and theta[-1] > 2 * theta[0]


def test_reconstruction_domain_exit():
    red = palis_demelo_radial(1, 0.5)
    from converge_lab.integrate import Trajectory
    bad = Trajectory([0.0, 1.0], [[0.5], [1.2]], [[0.0], [0.0]])
    with pytest.raises(DomainExit):
        red.reconstruct(bad)
    flagged = red.reconstruct(bad, clamp=True)
    assert flagged.energy_series["domain_exit"][1] == 1.0


def test_planar_flow_tracks_radial_reduction():
    red = palis_demelo_radial(1, 0.5)
    cfg = IntegratorConfig(t_max=50.0, sample_interval=0.5, rel_tol=1e-10, abs_tol=1e-12)
    rad = red.reconstruct(integrate(red.system, [0.5], cfg))
    planar = integrate(gradient_flow(palis_demelo_potential(1)), red.point(0.5), cfg)
    deviation = float(np.max(np.linalg.norm(planar.states - rad.states, axis=1)))
    assert deviation < 1e-3


def test_second_order_lift():
    assert abs(second_order_lift(HALF_SQ)([0.7])) < 1e-9
    const = polynomial_potential([(2.0, (0,))])
    assert second_order_lift(const)([0.3]) == 2.0
    assert second_order_lift(QUARTIC)([1.0]) == pytest.approx(-0.25)


def test_lifted_flow_contains_first_order_solutions():
    # u' = -grad phi solves u'' + u' + grad Phi(u) = 0 for the lifted Phi
    phi = double_well()
    lifted = second_order_flow(second_order_lift(phi), DampingLaw.linear())
    first = integrate(gradient_flow(phi), [0.3], IntegratorConfig(t_max=5.0, sample_interval=0.5))
    second = integrate(lifted, [0.3, -phi.grad([0.3])[0]], IntegratorConfig(t_max=5.0, sample_interval=0.5))
    assert np.max(np.abs(first.states[:, 0] - second.states[:, 0])) < 1e-5


def test_gallery_expectations():
    assert gallery("duffing_damped").expected == ConvergesTo(((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)))
    assert gallery("harmonic").expected == EnergyConserved()
    assert gallery("palis_demelo").expected == NonConvergentCircle(1.0)
    assert gallery("palis_demelo_lifted").expected == NonConvergentCircle(1.0)
    assert isinstance(gallery("quadratic_damping").expected, Oscillates)
    robot = gallery("robot_arm", c=0.3, p=0.6, m=1)
    assert robot.expected.points[0][0] == pytest.approx(math.asin(0.5) + 2 * math.pi)
    with pytest.raises(UnknownName):
        gallery("lorenz")
    with pytest.raises(ParameterViolation):
        gallery("robot_arm", c=2.0, p=1.0)
    with pytest.raises(ParameterViolation):
        gallery("harmonic", bogus=1)


@pytest.mark.parametrize("name", GALLERY_NAMES)
def test_gallery_entry_well_formed(name):
    e = gallery(name)
    assert e.default_initial.size == e.system.dimension
    assert np.all(np.isfinite(e.system(e.default_initial)))


@pytest.mark.slow
@pytest.mark.parametrize("name", GALLERY_NAMES)
def test_gallery_energies_nonincreasing(name):
    e = gallery(name)
    tr = integrate(e.system, e.default_initial, IntegratorConfig(t_max=e.t_max, sample_interval=e.sample_interval))
    for E in e.system.energies:
        audit = energy_audit(tr, E)
        assert audit.is_nonincreasing, (name, E.label, audit.max_uptick)
        if name == "harmonic":
            assert audit.is_constant
