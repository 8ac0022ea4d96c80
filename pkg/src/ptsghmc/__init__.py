"""Parallel-tempered stochastic-gradient Nose-Hoover sampling with a noise-corrected exchange test."""

from .diagnostics import (
    RunRecord,
    autocorrelation_ess,
    mode_coverage,
    summarize,
    tv_distance,
)
from .dynamics import DynamicsConfig, ReplicaState, hmc_sample, leapfrog, nh_step, sgnht_sample
from .estimators import HMCSampler, PTSGNHTSampler, SGNHTSampler
from .exceptions import ConfigError, CorrectionValidityError, DivergenceError, SigmaTooLargeError
from .exchange_test import (
    AcceptanceTest,
    CorrectionTable,
    barker_accept,
    build_correction_table,
    correction_density,
    estimate_deltaE_variance,
    minibatch_accept,
    sample_correction,
)
from .model import (
    GaussianMixture,
    LinearRegressionModel,
    PotentialOracle,
    analytic_density_grid,
    get_preset,
)
from .tempering import TemperatureLadder, delta_E, exchange_sweep, make_ladder, run_pt

__version__ = "0.1.0"

__all__ = [
    "AcceptanceTest", "ConfigError", "CorrectionTable", "CorrectionValidityError",
    "DivergenceError", "DynamicsConfig", "GaussianMixture", "HMCSampler",
    "LinearRegressionModel", "PTSGNHTSampler", "PotentialOracle", "ReplicaState",
    "RunRecord", "SGNHTSampler", "SigmaTooLargeError", "TemperatureLadder",
    "analytic_density_grid", "autocorrelation_ess", "barker_accept",
    "build_correction_table", "correction_density", "delta_E",
    "estimate_deltaE_variance", "exchange_sweep", "get_preset", "hmc_sample",
    "leapfrog", "make_ladder", "minibatch_accept", "mode_coverage", "nh_step",
    "run_pt", "sample_correction", "sgnht_sample", "summarize", "tv_distance",
]
