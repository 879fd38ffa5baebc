"""Desk-scale numerical laboratory for the weakly forced Ito-Schroedinger equation.

The package simulates the equation with a split-step spectral solver, extracts
the compensated wave field, computes the kinetic (linear Boltzmann) limit
objects, samples the limiting Ornstein-Uhlenbeck field, and compares them with
ensemble statistics.
"""

__version__ = "0.1.0"

from .compensator import ProbeSpec, compensate
from .correlation import (CorrelationModel, diffusion_matrix, eval_R, eval_Rhat, mode_weights)
from .exceptions import *  # noqa: F401,F403
from .initial import GaussianBump, TabulatedInitial
from .kinetic import (DuhamelSeries, KineticSolution, SeriesConfig, fhat_series, sigma_sq,
                      solve_wtilde_grid, solve_wtilde_mc, solve_wtilde_series, u_density_series,
                      uhat)
from .lattice import GridSpec
from .limit_ou import OUParams, OUPath, analytic_cov, analytic_mean, sample_ou_paths
from .solver import (MartingaleTracker, NoiseStream, WaveField, init_field, l2_norm,
                     q_pathwise_bound, run_ensemble, run_trajectory, sample_noise_increment, step)
from .stats import (EnsembleAccumulator, TestReport, covariance_convergence_report,
                    fourth_moment_factorization_test, gaussianity_test,
                    intensity_exponential_test, second_moment_identity_test,
                    self_averaging_test)
