"""Time-discretized samplers: Nose-Hoover thermostatted dynamics and classic HMC.

One thermostatted step at temperature ``T`` updates, in this order::

    p   <- p - eps * grad U(theta) / T - eps * xi * p
    theta <- theta + eps * M^-1 p
    xi  <- xi + eps * (p' M^-1 p - D) / Q

so the thermostat reacts to the freshly updated momentum. Momenta are
temperature-free: the potential, not the kinetic energy, is rescaled.
"""

from dataclasses import dataclass, replace
import time

import numpy as np

from . import _kernels
from .diagnostics import RunRecord
from .exceptions import DivergenceError
from .utils.validation import check_count, check_positions, check_positive, check_seed_sequence

#: Integration steps per kernel call in single-chain SGNHT (bounds noise memory).
SGNHT_BLOCK_STEPS = 1 << 16

#: Energy-error magnitude beyond which an HMC trajectory counts as divergent.
HMC_DIVERGENCE_THRESHOLD = 1e3


@dataclass
class DynamicsConfig:
    """Integrator settings shared by every replica.

    ``mass`` is a scalar or a length-D vector (diagonal mass matrix).
    """

    step_size: float = 0.01
    steps_per_epoch: int = 50
    mass: object = 1.0
    thermal_inertia: float = 1.0

    def __post_init__(self):
        self.step_size = check_positive(self.step_size, "step_size")
        self.steps_per_epoch = check_count(self.steps_per_epoch, "steps_per_epoch", minimum=1)
        self.thermal_inertia = check_positive(self.thermal_inertia, "thermal_inertia")
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim > 1 or np.any(~np.isfinite(mass)) or np.any(mass <= 0):
            raise ValueError("mass must be a positive scalar or a positive vector")

    def mass_vector(self, dim):
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim == 0:
            return np.full(dim, float(mass))
        if mass.shape != (dim,):
            raise ValueError(f"mass has length {mass.shape[0]}, expected {dim}")
        return mass.copy()


@dataclass
class ReplicaState:
    """Phase-space point ``(theta, p, xi)`` of the replica on ladder rung ``rung``."""

    theta: np.ndarray
    p: np.ndarray
    xi: float = 0.0
    T: float = 1.0
    rung: int = 0

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.xi = float(self.xi)
        if self.theta.shape != self.p.shape or self.theta.ndim != 1:
            raise ValueError("theta and p must be vectors of equal length")
        if self.T < 1:
            raise ValueError(f"replica temperature must be >= 1, got {self.T}")

    @property
    def is_finite(self):
        return bool(np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.p)) and np.isfinite(self.xi))


def spawn_streams(random_state, n_replicas):
    """Independent generators ``[exchange, rung 1, ..., rung R]``.

    Child ``j`` of the seed sequence does not depend on ``n_replicas``, so
    rung 1 sees the same stream whatever the ladder size.
    """
    ss = check_seed_sequence(random_state)
    return [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(n_replicas + 1)]


def initial_state(dim, cfg, rng, T=1.0, rung=0, theta0=None):
    """Fresh replica: ``theta0`` (default ``N(0, I)``), ``p ~ N(0, M)``, ``xi = 0``.

    The position is drawn before the momentum even when ``theta0`` is
    given, so the momentum stream does not depend on the initialization.
    """
    draw = rng.standard_normal(dim)
    theta = draw if theta0 is None else check_positions(theta0, dim, "theta0").copy()
    p = np.sqrt(cfg.mass_vector(dim)) * rng.standard_normal(dim)
    return ReplicaState(theta, p, 0.0, T, rung)


class _Accumulator:
    """Running per-rung sums of kinetic energy and position moments."""

    def __init__(self, n_rungs, dim):
        self.kin = np.zeros(n_rungs)
        self.th = np.zeros((n_rungs, dim))
        self.th2 = np.zeros((n_rungs, dim))
        self.n = 0

    def summary(self):
        if self.n == 0:
            nan = np.full_like(self.th, np.nan)
            return np.full_like(self.kin, np.nan), nan, nan.copy()
        mean = self.th / self.n
        return self.kin / self.n, mean, self.th2 / self.n - mean**2


def integrate_nh(theta, p, xi, temps, cfg, oracle, draws, n_steps, acc, step_offset=0,
                 thin=1, trace=None):
    """Advance an ensemble of replicas ``n_steps`` thermostatted steps in place.

    ``theta`` and ``p`` have shape ``(R, D)``; ``draws`` is the output of
    :meth:`PotentialOracle.draw_gradient_noise` stacked along axis 1, i.e.
    shape ``(n_steps, R, ...)``, or ``None`` for exact gradients. When
    ``trace`` of shape ``(n_steps // thin, R, D)`` is given, positions after
    every ``thin``-th step are stored in it.
    """
    R, D = theta.shape
    minv = 1.0 / cfg.mass_vector(D)
    eps = cfg.step_size
    Q = cfg.thermal_inertia
    if oracle.uses_kernels():
        noise = np.empty((0, R, D)) if draws is None else np.ascontiguousarray(draws)
        out = np.empty((0, R, D)) if trace is None else trace
        step, rung = _kernels.nh_block(
            theta, p, xi, temps, eps, minv, Q, noise, n_steps,
            *oracle.model.kernel_params(), acc.kin, acc.th, acc.th2, thin, out,
        )
        if step >= 0:
            raise DivergenceError(step_offset + step, int(rung))
    else:
        for t in range(n_steps):
            g = oracle.grad_from_draw(theta, None if draws is None else draws[t])
            p_new = p - eps * g / temps[:, None] - eps * xi[:, None] * p
            p[...] = p_new
            theta += eps * minv * p_new
            kin = np.sum(p_new * minv * p_new, axis=1)
            xi += eps * (kin - D) / Q
            acc.kin += kin
            acc.th += theta
            acc.th2 += theta * theta
            bad = ~(np.isfinite(theta).all(axis=1) & np.isfinite(p).all(axis=1) & np.isfinite(xi))
            if bad.any():
                raise DivergenceError(step_offset + t, int(np.argmax(bad)))
            if trace is not None and (t + 1) % thin == 0:
                trace[(t + 1) // thin - 1] = theta
    acc.n += n_steps


def nh_step(state, cfg, oracle, rng=None, step_index=0):
    """One thermostatted step of ``state`` at its own temperature.

    Returns a new :class:`ReplicaState`; the input is left untouched.
    Raises :class:`DivergenceError` (carrying ``step_index``) if the new
    state is not finite.
    """
    theta = state.theta[None, :].copy()
    p = state.p[None, :].copy()
    xi = np.array([state.xi])
    temps = np.array([float(state.T)])
    draws = oracle.draw_gradient_noise(rng, 1, (1,))
    acc = _Accumulator(1, theta.shape[1])
    try:
        integrate_nh(theta, p, xi, temps, cfg, oracle, draws, 1, acc, step_offset=step_index)
    except DivergenceError as exc:
        raise DivergenceError(step_index, state.rung) from exc
    return replace(state, theta=theta[0], p=p[0], xi=float(xi[0]))


def sgnht_sample(cfg, oracle, n_samples, random_state=None, theta0=None, thin=1):
    """Single-chain SGNHT: one replica at ``T = 1`` evolved by :func:`nh_step`.

    The position is retained every ``thin`` steps; ``n_samples * thin``
    steps are run in total. With ``thin = cfg.steps_per_epoch`` the output
    coincides with a one-rung :func:`~ptsghmc.tempering.run_pt`.
    """
    n_samples = check_count(n_samples, "n_samples")
    thin = check_count(thin, "thin", minimum=1)
    _, rng = spawn_streams(random_state, 1)
    dim = oracle.dim
    start = time.perf_counter()
    s = initial_state(dim, cfg, rng, theta0=theta0)
    theta, p = s.theta[None, :].copy(), s.p[None, :].copy()
    xi = np.zeros(1)
    temps = np.ones(1)
    acc = _Accumulator(1, dim)
    samples = np.empty((n_samples, 1, dim))
    # blocks of whole samples; chunked noise draws equal per-step draws
    per_block = max(1, SGNHT_BLOCK_STEPS // thin)
    for i in range(0, n_samples, per_block):
        n = min(per_block, n_samples - i)
        draws = oracle.draw_gradient_noise(rng, n * thin, (1,))
        integrate_nh(theta, p, xi, temps, cfg, oracle, draws, n * thin, acc,
                     step_offset=i * thin, thin=thin, trace=samples[i:i + n])
    samples = samples[:, 0]
    kin, mean, var = acc.summary()
    return RunRecord(
        sampler="sgnht",
        samples=samples,
        sample_index=np.arange(1, n_samples + 1) * thin,
        temperatures=temps.copy(),
        n_steps=n_samples * thin,
        n_grad_evals=n_samples * thin,
        kinetic_mean=kin,
        position_mean=mean,
        position_var=var,
        wall_time=time.perf_counter() - start,
    )


def _leapfrog_numpy(theta, p, eps, minv, n_leapfrog, grad):
    th, mom = theta.copy(), p.copy()
    if n_leapfrog == 0:
        return th, mom
    mom -= 0.5 * eps * grad(th, 0)
    for i in range(n_leapfrog):
        th += eps * minv * mom
        scale = eps if i < n_leapfrog - 1 else 0.5 * eps
        mom -= scale * grad(th, i + 1)
    return th, mom


def leapfrog(theta, p, cfg, oracle, n_leapfrog, draws=None):
    """Integrate unit-temperature Hamiltonian dynamics for ``n_leapfrog`` steps.

    ``draws`` holds the oracle randomness for the ``n_leapfrog + 1``
    gradient evaluations (``None`` for exact gradients).
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    minv = 1.0 / cfg.mass_vector(theta.shape[0])
    if oracle.uses_kernels():
        noise = np.empty((0, theta.shape[0])) if draws is None else np.ascontiguousarray(draws)
        return _kernels.leapfrog(theta, p, cfg.step_size, minv, n_leapfrog, noise,
                                 *oracle.model.kernel_params())

    def grad(th, i):
        return oracle.grad_from_draw(th, None if draws is None else draws[i])

    return _leapfrog_numpy(theta, p, cfg.step_size, minv, n_leapfrog, grad)


def hmc_sample(cfg, oracle, leapfrog_steps, n_samples, random_state=None, theta0=None):
    """Classic HMC with a Metropolis test on oracle-evaluated energies.

    Each trajectory resamples ``p ~ N(0, M)``, reads the current energy,
    integrates ``leapfrog_steps`` leapfrog steps, reads the proposal energy
    and accepts with probability ``min(1, exp(-dH))``. With a noisy oracle
    both energy reads are noisy and nothing corrects for it. Trajectories
    with ``|dH| > 1e3`` or a non-finite end point are rejected and counted
    as divergences.
    """
    leapfrog_steps = check_count(leapfrog_steps, "leapfrog_steps")
    n_samples = check_count(n_samples, "n_samples")
    _, rng = spawn_streams(random_state, 1)
    dim = oracle.dim
    mass = cfg.mass_vector(dim)
    minv = 1.0 / mass
    start = time.perf_counter()
    theta = initial_state(dim, cfg, rng, theta0=theta0).theta
    samples = np.empty((n_samples, dim))
    accepts = divergences = 0
    for i in range(n_samples):
        p0 = np.sqrt(mass) * rng.standard_normal(dim)
        if leapfrog_steps == 0:
            # identity proposal: dH is zero by construction
            accepts += 1
            samples[i] = theta
            continue
        U0 = float(oracle.potential(theta, rng))
        draws = oracle.draw_gradient_noise(rng, leapfrog_steps + 1)
        th1, p1 = leapfrog(theta, p0, cfg, oracle, leapfrog_steps, draws)
        finite = np.all(np.isfinite(th1)) and np.all(np.isfinite(p1))
        U1 = float(oracle.potential(th1, rng)) if finite else np.inf
        dH = (U1 + 0.5 * np.sum(p1 * minv * p1)) - (U0 + 0.5 * np.sum(p0 * minv * p0))
        u = rng.random()
        if not np.isfinite(dH) or abs(dH) > HMC_DIVERGENCE_THRESHOLD:
            divergences += 1
        elif np.log(u) < -dH:
            theta = th1
            accepts += 1
        samples[i] = theta
    return RunRecord(
        sampler="hmc",
        samples=samples,
        sample_index=np.arange(1, n_samples + 1),
        temperatures=np.ones(1),
        n_steps=n_samples * leapfrog_steps,
        n_grad_evals=n_samples * (leapfrog_steps + 1) if leapfrog_steps else 0,
        n_divergences=divergences,
        mh_accepts=accepts,
        wall_time=time.perf_counter() - start,
    )
