"""Scikit-learn style front ends for the samplers.

Hyperparameters are stored untouched by ``__init__`` and validated in
``fit``, which takes the target (a model or a :class:`PotentialOracle`)
in place of a data matrix. Fitted attributes end in an underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .diagnostics import mode_coverage, summarize, tv_distance
from .dynamics import DynamicsConfig, hmc_sample, sgnht_sample
from .exchange_test import DEFAULT_SIGMA_LEVELS, AcceptanceTest
from .model import PotentialOracle
from .tempering import make_ladder, run_pt
from .utils.validation import check_count


def _as_oracle(target, mode, noise_variance, batch_size):
    if isinstance(target, PotentialOracle):
        return target
    if not hasattr(target, "grad_potential"):
        raise TypeError(f"cannot sample from {type(target).__name__}; pass a model or PotentialOracle")
    return PotentialOracle(target, mode, noise_variance, batch_size)


class _SamplerMixin:
    """Post-fit helpers shared by every sampler."""

    def _finish(self, record, oracle):
        self.record_ = record
        self.oracle_ = oracle
        self.samples_ = record.after_burn_in(self.burn_in)
        self.n_features_in_ = oracle.dim
        return self

    def summary(self, target=None, **kwargs):
        """Diagnostics report of the fitted run (see :func:`summarize`)."""
        check_is_fitted(self, "record_")
        if target is None and hasattr(self.oracle_.model, "n_components"):
            target = self.oracle_.model
        return summarize(self.record_, target, burn_in=self.burn_in, **kwargs)

    def score(self, target=None):
        """Negative TV distance of the retained samples to the analytic target (higher is better)."""
        check_is_fitted(self, "record_")
        target = self.oracle_.model if target is None else target
        return -tv_distance(self.samples_, target)

    def mode_fractions(self, target=None, radius_multiplier=3.0):
        check_is_fitted(self, "record_")
        target = self.oracle_.model if target is None else target
        return mode_coverage(self.samples_, target, radius_multiplier).fractions


class PTSGNHTSampler(_SamplerMixin, BaseEstimator):
    """Parallel-tempered stochastic-gradient Nose-Hoover sampler.

    Parameters
    ----------
    n_rungs : int, default 10
    t_max : float, default 10.0
    spacing : {'linear', 'geometric'}
    pairing : {'adjacent', 'base-vs-all'}
    step_size, steps_per_epoch, mass, thermal_inertia
        Integrator settings (see :class:`DynamicsConfig`).
    n_epochs : int, default 1000
    acceptance : {'exact-barker', 'minibatch-corrected', 'always', 'never'}
    noise_model : {'known', 'estimated'}
    sigma_levels : tuple of float
    gamma : 'auto' or float
    K : int
    oracle_mode, noise_variance, batch_size
        How a bare model passed to ``fit`` is observed.
    burn_in : float
        Leading fraction of the chain dropped from ``samples_``.
    theta0 : array-like, optional
    random_state : int, SeedSequence or None

    Attributes
    ----------
    record_ : RunRecord
    samples_ : ndarray of shape (n_retained, D)
    ladder_ : TemperatureLadder
    acceptance_rates_ : ndarray of shape (n_rungs - 1,)
    """

    def __init__(self, n_rungs=10, t_max=10.0, spacing="linear", pairing="adjacent",
                 step_size=0.01, steps_per_epoch=50, mass=1.0, thermal_inertia=1.0,
                 n_epochs=1000, acceptance="exact-barker", noise_model="known",
                 sigma_levels=DEFAULT_SIGMA_LEVELS, gamma="auto", K=8,
                 oracle_mode="exact", noise_variance=0.0, batch_size=None,
                 burn_in=0.1, theta0=None, random_state=None):
        self.n_rungs = n_rungs
        self.t_max = t_max
        self.spacing = spacing
        self.pairing = pairing
        self.step_size = step_size
        self.steps_per_epoch = steps_per_epoch
        self.mass = mass
        self.thermal_inertia = thermal_inertia
        self.n_epochs = n_epochs
        self.acceptance = acceptance
        self.noise_model = noise_model
        self.sigma_levels = sigma_levels
        self.gamma = gamma
        self.K = K
        self.oracle_mode = oracle_mode
        self.noise_variance = noise_variance
        self.batch_size = batch_size
        self.burn_in = burn_in
        self.theta0 = theta0
        self.random_state = random_state

    def fit(self, target, y=None):
        """Run the sampler on ``target``; ``y`` is ignored."""
        _check_burn_in(self.burn_in)
        oracle = _as_oracle(target, self.oracle_mode, self.noise_variance, self.batch_size)
        cfg = DynamicsConfig(self.step_size, self.steps_per_epoch, self.mass, self.thermal_inertia)
        ladder = make_ladder(self.n_rungs, self.t_max, self.spacing)
        test = AcceptanceTest(self.acceptance, self.noise_model, self.sigma_levels, self.gamma, self.K)
        record = run_pt(oracle, ladder, cfg, test, self.n_epochs, self.random_state,
                        theta0=self.theta0, pairing=self.pairing)
        self.ladder_ = ladder
        self.acceptance_rates_ = record.acceptance_rates
        return self._finish(record, oracle)


class SGNHTSampler(_SamplerMixin, BaseEstimator):
    """Single-chain stochastic-gradient Nose-Hoover sampler at ``T = 1``.

    ``n_samples`` positions are kept, one every ``thin`` steps.
    """

    def __init__(self, step_size=0.01, mass=1.0, thermal_inertia=1.0, n_samples=1000, thin=50,
                 oracle_mode="exact", noise_variance=0.0, batch_size=None,
                 burn_in=0.1, theta0=None, random_state=None):
        self.step_size = step_size
        self.mass = mass
        self.thermal_inertia = thermal_inertia
        self.n_samples = n_samples
        self.thin = thin
        self.oracle_mode = oracle_mode
        self.noise_variance = noise_variance
        self.batch_size = batch_size
        self.burn_in = burn_in
        self.theta0 = theta0
        self.random_state = random_state

    def fit(self, target, y=None):
        _check_burn_in(self.burn_in)
        oracle = _as_oracle(target, self.oracle_mode, self.noise_variance, self.batch_size)
        cfg = DynamicsConfig(self.step_size, 1, self.mass, self.thermal_inertia)
        record = sgnht_sample(cfg, oracle, self.n_samples, self.random_state,
                              theta0=self.theta0, thin=self.thin)
        return self._finish(record, oracle)


class HMCSampler(_SamplerMixin, BaseEstimator):
    """Classic HMC; with a noisy oracle the Metropolis test uses noisy energies uncorrected.

    Attributes
    ----------
    acceptance_rate_ : float
        Fraction of accepted trajectories.
    """

    def __init__(self, step_size=0.05, leapfrog_steps=30, mass=1.0, n_samples=1000,
                 oracle_mode="exact", noise_variance=0.0, batch_size=None,
                 burn_in=0.1, theta0=None, random_state=None):
        self.step_size = step_size
        self.leapfrog_steps = leapfrog_steps
        self.mass = mass
        self.n_samples = n_samples
        self.oracle_mode = oracle_mode
        self.noise_variance = noise_variance
        self.batch_size = batch_size
        self.burn_in = burn_in
        self.theta0 = theta0
        self.random_state = random_state

    def fit(self, target, y=None):
        _check_burn_in(self.burn_in)
        oracle = _as_oracle(target, self.oracle_mode, self.noise_variance, self.batch_size)
        cfg = DynamicsConfig(self.step_size, 1, self.mass)
        record = hmc_sample(cfg, oracle, self.leapfrog_steps, self.n_samples, self.random_state,
                            theta0=self.theta0)
        n = check_count(self.n_samples, "n_samples")
        self.acceptance_rate_ = record.mh_accepts / n if n else float("nan")
        return self._finish(record, oracle)


def _check_burn_in(fraction):
    if not (isinstance(fraction, (int, float, np.floating)) and 0 <= fraction < 1):
        raise ValueError(f"burn_in must be a fraction in [0, 1), got {fraction!r}")
