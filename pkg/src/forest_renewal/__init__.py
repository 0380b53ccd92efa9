"""Simulation and certification tools for a size-structured forest renewal equation.

The unknown is the birth rate b(t); the model is fixed by a death rate mu,
a minimal height x_m, a reproduction rate beta(x) and a growth rate g(x),
and the datum is the past of b on (-inf, 0].
"""
__version__ = "0.1.0"

from .model import (History, HypothesisReport, ModelError, ModelParams, RateSpec,
                    check_hypothesis_M, eval_rate, weighted_norm)
from .numerics import (BracketError, QuadTolerance, find_root_monotone, integrate_grid,
                       largest_root, truncation_horizon)
from .equilibrium import (AnalysisReport, Case, EnvelopeBundle, NonUniquenessWarning, NumericError,
                          UnsupportedRegimeError, C_eps, F_of_b, G_of_x, R1_of_c, R_of_b,
                          basic_reproduction_number, classify, derivative_bound, growth_envelope,
                          positive_equilibrium, theta2)
from .solver import (SolutionPath, SolverConfig, StepSizeError, apply_F, apply_F_change_of_vars,
                     r_phi_at, solve_ivp)
from .diagnostics import (CertificationResult, Tolerances, Witness, certify_classification,
                          check_attractor_box, check_envelope, check_positivity, check_squeeze,
                          check_ultimate_bound, check_volterra, convergence_study,
                          majorant_domination, monotone_pair_battery)
