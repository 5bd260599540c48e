"""Numerical laboratory for a noisy velocity-alignment model.

The package studies the mean-field Fokker-Planck dynamics of a flock
whose agents relax toward the population's mean velocity inside a
confining speed potential, under isotropic noise of strength D:

* phase transition: the critical noise below which polarized
  (symmetry-broken) stationary states exist, and the order parameter
  u(D) on the polarized branch (``stationary``);
* one-dimensional quadrature backbone for all moments of the
  stationary densities (``quadrature``), with in-repo special
  functions for closed-form cross-checks (``specfun``);
* free energy, relative entropy, Fisher information and the quadratic
  forms of the linearization, evaluated on conservative grids
  (``functionals``, ``grids``);
* structure-preserving time integration of the nonlinear, non-local
  dynamics (``evolution``);
* spectral gaps of the linearized operator: Poincare and coercivity
  constants with two-grid error estimates (``spectrum``);
* a deterministic command-line interface over all of it (``cli``).
"""

from .errors import (BracketError, ConvergenceError, FlockLabError,
                     GeometryError, IndefiniteMetricError,
                     MassConservationError, PositivityError,
                     QuadratureError, SupportMismatchError)
from .evolution import (EvolutionTrace, RateFit, RateGapReport, SolverConfig,
                        evolve, fit_decay_rate, load_checkpoint,
                        rate_vs_gap_report, save_checkpoint, step,
                        symmetric_preserving_evolve)
from .functionals import (FunctionalReport, csiszar_kullback_gap,
                          evaluate_report, fisher_information,
                          fourth_moment_bound, free_energy,
                          free_energy_lower_bound, free_energy_second_form,
                          gibbs_state, mean_velocity, perturbation_velocity,
                          q1_form, q2_form, relative_entropy)
from .grids import (DiscreteReference, GridDensity, LineGrid, PolarGrid,
                    discrete_reference, gibbs_density, self_consistent_mean)
from .quadrature import (DEFAULT_SETTINGS, ModelParams, QuadratureSettings,
                         StationaryMoments, H_of_u, H_prime_at_zero,
                         gauss_kronrod, h_function, j_moment, log_j,
                         log_partition, potential, sphere_area,
                         stationary_moments)
from .spectrum import (CoercivityResult, PoincareResult, SpectralAssembly,
                       SpectralReport, assemble_linearized,
                       coercivity_constant, poincare_constant,
                       spectral_report)
from .stationary import (BifurcationPoint, ClosedFormCheck, QualitativeReport,
                         StationaryState, axis_second_moment,
                         bifurcation_curve, critical_noise,
                         critical_noise_qualitative_suite, eta, kappa,
                         make_stationary, order_parameter,
                         special_function_check)

__version__ = "1.0.0"

__all__ = [
    "__version__",
    # errors
    "FlockLabError", "QuadratureError", "BracketError", "GeometryError",
    "SupportMismatchError", "PositivityError", "MassConservationError",
    "IndefiniteMetricError", "ConvergenceError",
    # quadrature
    "ModelParams", "QuadratureSettings", "DEFAULT_SETTINGS",
    "StationaryMoments", "gauss_kronrod", "potential", "sphere_area",
    "log_j", "j_moment", "h_function", "H_of_u", "H_prime_at_zero",
    "log_partition", "stationary_moments",
    # stationary
    "StationaryState", "BifurcationPoint", "ClosedFormCheck",
    "QualitativeReport", "critical_noise", "order_parameter",
    "make_stationary", "kappa", "axis_second_moment", "eta",
    "bifurcation_curve", "special_function_check",
    "critical_noise_qualitative_suite",
    # grids
    "LineGrid", "PolarGrid", "GridDensity", "DiscreteReference",
    "gibbs_density", "self_consistent_mean", "discrete_reference",
    # functionals
    "FunctionalReport", "mean_velocity", "free_energy",
    "free_energy_second_form", "free_energy_lower_bound",
    "relative_entropy", "gibbs_state", "fisher_information",
    "perturbation_velocity", "q1_form", "q2_form", "csiszar_kullback_gap",
    "fourth_moment_bound", "evaluate_report",
    # evolution
    "SolverConfig", "EvolutionTrace", "RateFit", "RateGapReport", "evolve",
    "symmetric_preserving_evolve", "step", "fit_decay_rate",
    "rate_vs_gap_report", "save_checkpoint", "load_checkpoint",
    # spectrum
    "SpectralAssembly", "PoincareResult", "CoercivityResult",
    "SpectralReport", "assemble_linearized", "poincare_constant",
    "coercivity_constant", "spectral_report",
]
