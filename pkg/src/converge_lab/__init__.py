"""Numerical laboratory for dissipative systems and their convergence to equilibrium."""

__version__ = "0.1.0"

from .core import (DampingLaw, EnergyFunctional, FirstOrderSystem, Potential, as_state,
                   check_gradient, grad_fd, hessian_fd)
from .integrate import (EnergyAudit, EventKind, EventSpec, IntegratorConfig, Termination,
                        Trajectory, energy_audit, integrate, log_time_grid)
from .flows import (GALLERY_NAMES, GalleryEntry, chergui_energy, coupled_oscillator, gallery,
                    gradient_flow, palis_demelo_potential, palis_demelo_radial, perturbed_energy,
                    polynomial_potential, second_order_flow, second_order_lift,
                    strict_liapunov_coupled)
from .pde import Grid1D, Nonlinearity, discretize_heat, discretize_wave, gradient_consistency
from .analysis import (ConvergenceReport, DecayFit, OmegaEstimate, analyze,
                       cauchy_convergence_test, fit_decay, l2_derivative_test, omega_estimate,
                       zelenyak_tail_check)
from .lojasiewicz import (LojasiewiczEstimate, RatePrediction, estimate_exponent,
                          predict_first_order, predict_general, predict_nonlinear_damping,
                          uniformize_on_set)
from .stability import (classify, find_equilibria, hurwitz_check, linearize, lyapunov_quadratic,
                        perturbation_radius)
