"""Continuous-time Markov networks.

Reversible continuous-time processes whose equilibrium is a log-linear
Markov network: simulation, exact generators, and parameter learning from
trajectories.
"""
from .acceptance import Acceptance, accept_prob
from .baselines import BaselineResult, ctbn_stationary, fit_ctbn_mle, fit_mn_dwell
from .ctbn import CtbnConditionalRates, amalgamate, to_ctbn
from .estimators import CTBNEstimator, CTMNEstimator, MNDwellEstimator
from .evaluation import expected_transition_time_unit, kl_divergence, trajectory_loglik_exact
from .learn import (
    EmConfig,
    em_fit,
    grad_acceptance,
    loglik_acceptance,
    loglik_proposal,
    maximize_acceptance_weights,
    mle_proposal_rates,
)
from .model import (
    CtmnModel,
    Equilibrium,
    Feature,
    InteractionGraph,
    RateMatrix,
    Variable,
    build_rate_matrix,
    example_4_1,
    g_ratio,
    induced_graph,
    log_unnormalized_weight,
    metropolis_generator,
    proposal_from_generator,
    stationary_exact,
    validate_model,
)
from .optimize import OptimizerConfig
from .simulate import (
    AugmentedTrajectory,
    InitialDistribution,
    Trajectory,
    sample_augmented_trajectory,
    sample_trajectories,
    strip_proposals,
)
from .stats import SufficientStats, collect_augmented_stats, collect_observed_stats, expected_rejections

__version__ = "0.1.0"

__all__ = [
    "Acceptance",
    "AugmentedTrajectory",
    "BaselineResult",
    "CTBNEstimator",
    "CTMNEstimator",
    "CtbnConditionalRates",
    "CtmnModel",
    "EmConfig",
    "Equilibrium",
    "Feature",
    "InitialDistribution",
    "InteractionGraph",
    "MNDwellEstimator",
    "OptimizerConfig",
    "RateMatrix",
    "SufficientStats",
    "Trajectory",
    "Variable",
    "accept_prob",
    "amalgamate",
    "build_rate_matrix",
    "collect_augmented_stats",
    "collect_observed_stats",
    "ctbn_stationary",
    "em_fit",
    "example_4_1",
    "expected_rejections",
    "expected_transition_time_unit",
    "fit_ctbn_mle",
    "fit_mn_dwell",
    "g_ratio",
    "grad_acceptance",
    "induced_graph",
    "kl_divergence",
    "log_unnormalized_weight",
    "loglik_acceptance",
    "loglik_proposal",
    "maximize_acceptance_weights",
    "metropolis_generator",
    "mle_proposal_rates",
    "proposal_from_generator",
    "sample_augmented_trajectory",
    "sample_trajectories",
    "stationary_exact",
    "strip_proposals",
    "to_ctbn",
    "trajectory_loglik_exact",
    "validate_model",
]
