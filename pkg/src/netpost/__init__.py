"""Bayesian reconstruction of sparse weighted networks from node dynamics."""

__version__ = "0.1.0"

from .bli import BLIConfig
from .estimator import NetworkReconstructor, sample_posterior
from .estimators import (
    PosteriorAccumulator,
    autocorrelation,
    integrated_time,
    mp_estimate,
    pairwise_baselines,
)
from .exceptions import ConfigError, DataError, DomainError, NumericalError
from .graph import Dichotomization, WeightedGraphState, jaccard_similarity
from .models import Dataset, log_likelihood, simulate_kinetic_ising
from .posterior import FactorizedTarget, ReconstructionPosterior
from .sampler import ProposalConfig, greedy_map, run_chain
from .synthetic import make_instance

__all__ = [
    "BLIConfig",
    "ConfigError",
    "DataError",
    "Dataset",
    "Dichotomization",
    "DomainError",
    "FactorizedTarget",
    "NetworkReconstructor",
    "NumericalError",
    "PosteriorAccumulator",
    "ProposalConfig",
    "ReconstructionPosterior",
    "WeightedGraphState",
    "autocorrelation",
    "greedy_map",
    "integrated_time",
    "jaccard_similarity",
    "log_likelihood",
    "make_instance",
    "mp_estimate",
    "pairwise_baselines",
    "run_chain",
    "sample_posterior",
    "simulate_kinetic_ising",
]
