"""Ergodicity diagnostics for random walk and guided walk Metropolis samplers.

Submodules
----------
numerics
    Adaptive quadrature, log-sum-exp, root bracketing, power-law fits, RNG streams.
targets
    Polynomial-tailed and convex-potential one-dimensional densities.
kernels
    Random walk, guided walk and mixture proposals with MH transitions.
operator
    Grid discretization of the transition kernels, TV curves, spectral gaps.
diagnostics
    Drift ratios, acceptance integrals and Monte Carlo probes.
cli
    Config-driven experiment runner (``ergolab`` command).
"""

from .errors import CheckFailed, NumericFailure, UsageError
from .kernels import (CounterexampleProposal, GuidedState, GwmKernel, RwmProposal, Trajectory,
                      gwm_step, make_kernel, run_chain, rwm_step)
from .numerics import (RateFit, RngStream, fit_power_law, integrate, integrate_log,
                       log_sum_exp, rng_stream, sign_changes)
from .operator import (GridOperator, build_grid_operator, estimate_polynomial_rate, evolve,
                       spectral_gap, tv_curve, tv_to_target)
from .targets import ConvexPotentialTarget, PolyTailTarget, SquaredGaussianTarget, make_target

__version__ = "0.1.0"
