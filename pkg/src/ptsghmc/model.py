"""Target distributions and the potential-energy oracles that sample them.

A *model* knows the exact potential ``U(theta) = -log pi(theta | data)``
and its gradient. A :class:`PotentialOracle` wraps a model and decides how
the samplers see it: exactly, with injected Gaussian noise, or through
random minibatches of the dataset.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
import tomli

from . import _kernels
from .utils.validation import check_count, check_positions, check_positive, check_random_state

ORACLE_MODES = ("exact", "injected-noise", "minibatch")


class GaussianMixture:
    """Finite mixture of multivariate normals.

    Parameters
    ----------
    weights : array-like of shape (K,)
        Positive mixing proportions summing to one.
    means : array-like of shape (K, D)
    covariances : array-like of shape (K, D, D)
        Symmetric positive-definite component covariances.
    """

    def __init__(self, weights, means, covariances):
        weights = np.asarray(weights, dtype=float).ravel()
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        covariances = np.asarray(covariances, dtype=float)
        K, D = means.shape
        if covariances.ndim == 1 and D == 1:
            covariances = covariances[:, None, None]
        if weights.shape != (K,) or covariances.shape != (K, D, D):
            raise ValueError(
                f"inconsistent shapes: weights {weights.shape}, means {means.shape},"
                f" covariances {covariances.shape}"
            )
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if not np.allclose(covariances, np.swapaxes(covariances, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("component covariances must be symmetric")
        eig = np.linalg.eigvalsh(covariances)
        if np.any(eig <= 0):
            raise ValueError("component covariances must be positive definite")
        self.weights = weights
        self.means = means
        self.covariances = covariances
        self.dim = D
        self._precisions = np.ascontiguousarray(np.linalg.inv(covariances))
        _, logdet = np.linalg.slogdet(covariances)
        self._logc = np.log(weights) - 0.5 * (D * math.log(2 * math.pi) + logdet)
        self._chol = np.linalg.cholesky(covariances)

    @property
    def n_components(self):
        return len(self.weights)

    def component_std(self):
        """Largest per-axis standard deviation of each component, shape (K,)."""
        return np.sqrt(np.linalg.eigvalsh(self.covariances).max(axis=1))

    def kernel_params(self):
        return self._logc, self.means, self._precisions

    def potential(self, theta):
        """``U(theta) = -log sum_k w_k N(theta; mu_k, Sigma_k)``, normalizers included."""
        X = check_positions(theta, self.dim)
        flat = np.ascontiguousarray(X.reshape(-1, self.dim))
        out = _kernels.mixture_potential_rows(flat, *self.kernel_params())
        return out.reshape(X.shape[:-1]) if X.ndim > 1 else out[0]

    def grad_potential(self, theta):
        X = check_positions(theta, self.dim)
        flat = np.ascontiguousarray(X.reshape(-1, self.dim))
        out = _kernels.mixture_grad_rows(flat, *self.kernel_params())
        return out.reshape(X.shape)

    def pdf(self, theta):
        return np.exp(-self.potential(theta))

    def sample(self, n, random_state=None):
        """Draw ``n`` exact samples by picking a component, then a normal draw."""
        rng = check_random_state(random_state)
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[labels] + np.einsum("nab,nb->na", self._chol[labels], z)

    def __repr__(self):
        return f"GaussianMixture(n_components={self.n_components}, dim={self.dim})"


def mix1d_4():
    """Four equal-weight 1d modes at -6, -2, 2, 6 with variance 0.25."""
    means = np.array([[-6.0], [-2.0], [2.0], [6.0]])
    return GaussianMixture(np.full(4, 0.25), means, np.full((4, 1, 1), 0.25))


def mix2d_5():
    """Five equal-weight 2d modes at the origin and (+-4, +-4), covariance 0.5 I."""
    means = np.array([[0.0, 0.0], [-4.0, -4.0], [-4.0, 4.0], [4.0, -4.0], [4.0, 4.0]])
    covs = np.tile(0.5 * np.eye(2), (5, 1, 1))
    return GaussianMixture(np.full(5, 0.2), means, covs)


def gauss1d(variance=1.0):
    return GaussianMixture([1.0], [[0.0]], [[[variance]]])


PRESETS = {
    "mix1d-4": mix1d_4,
    "mix2d-5": mix2d_5,
    "gauss1d": gauss1d,
}


def get_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


class LinearRegressionModel:
    """Bayesian linear regression ``y ~ N(X w, noise_std^2)`` with prior ``w ~ N(0, prior_std^2 I)``.

    Small synthetic problem used to exercise minibatch gradients and
    energies; the potential is the exact full-data negative log posterior.
    """

    def __init__(self, X, y, noise_std=1.0, prior_std=10.0):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError("X must be (n, d) and y (n,) with n >= 1")
        self.X = X
        self.y = y
        self.noise_std = check_positive(noise_std, "noise_std")
        self.prior_std = check_positive(prior_std, "prior_std")
        self.dim = X.shape[1]

    @property
    def n_data(self):
        return self.X.shape[0]

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        s2 = self.prior_std**2
        return -0.5 * np.sum(theta**2, axis=-1) / s2 - 0.5 * self.dim * math.log(2 * math.pi * s2)

    def grad_log_prior(self, theta):
        return -np.asarray(theta, dtype=float) / self.prior_std**2

    def _residuals(self, theta, idx):
        if idx is None:
            idx = np.arange(self.n_data)
        theta = np.asarray(theta, dtype=float)
        X, y = self.X[idx], self.y[idx]
        return y - np.einsum("...bd,...d->...b", X, theta), X

    def log_likelihood(self, theta, idx=None):
        """Per-datum log-likelihood terms for batch ``idx`` (all data if ``None``).

        ``idx`` has shape ``(b,)``, shared by every row of ``theta``, or
        ``theta.shape[:-1] + (b,)`` for one batch per row.
        """
        resid, _ = self._residuals(theta, idx)
        s2 = self.noise_std**2
        return -0.5 * resid**2 / s2 - 0.5 * math.log(2 * math.pi * s2)

    def grad_log_likelihood(self, theta, idx=None):
        """Sum over the batch of per-datum log-likelihood gradients."""
        resid, X = self._residuals(theta, idx)
        return np.einsum("...b,...bd->...d", resid, X) / self.noise_std**2

    def potential(self, theta):
        theta = check_positions(theta, self.dim)
        return -(self.log_prior(theta) + self.log_likelihood(theta).sum(axis=-1))

    def grad_potential(self, theta):
        theta = check_positions(theta, self.dim)
        return -(self.grad_log_prior(theta) + self.grad_log_likelihood(theta))


def make_regression(n_data=200, dim=2, noise_std=1.0, random_state=None):
    """Synthetic regression dataset wrapped in a :class:`LinearRegressionModel`."""
    rng = check_random_state(random_state)
    X = rng.standard_normal((n_data, dim))
    w = rng.standard_normal(dim)
    y = X @ w + noise_std * rng.standard_normal(n_data)
    return LinearRegressionModel(X, y, noise_std=noise_std)


class PotentialOracle:
    """How a sampler observes the potential energy of ``model``.

    Parameters
    ----------
    model : GaussianMixture or LinearRegressionModel
    mode : {'exact', 'injected-noise', 'minibatch'}
    noise_variance : float
        Variance of the zero-mean Gaussian noise added to the energy and to
        every gradient coordinate on each call (``injected-noise`` only).
    batch_size : int
        Minibatch size ``|S|`` (``minibatch`` only); batches are drawn
        uniformly without replacement, fresh on every call.
    """

    def __init__(self, model, mode="exact", noise_variance=0.0, batch_size=None):
        if mode not in ORACLE_MODES:
            raise ValueError(f"unknown oracle mode {mode!r}; choose from {ORACLE_MODES}")
        self.model = model
        self.mode = mode
        self.noise_variance = check_positive(noise_variance, "noise_variance", strict=False)
        self.batch_size = batch_size
        if mode == "minibatch":
            if not hasattr(model, "n_data"):
                raise ValueError("minibatch mode needs a model with a dataset")
            self.batch_size = check_count(batch_size, "batch_size", minimum=1)
            if self.batch_size > model.n_data:
                raise ValueError(
                    f"batch_size {self.batch_size} exceeds dataset size {model.n_data}"
                )
        self._noise_std = math.sqrt(self.noise_variance)

    @property
    def dim(self):
        return self.model.dim

    @property
    def is_exact(self):
        return self.mode == "exact" or (self.mode == "injected-noise" and self.noise_variance == 0)

    def uses_kernels(self):
        return isinstance(self.model, GaussianMixture) and self.mode != "minibatch"

    def potential(self, theta, rng=None):
        """Energy at ``theta`` as seen through this oracle."""
        if self.mode == "minibatch":
            return self.minibatch_potential(theta, rng)[0]
        U = self.model.potential(theta)
        if self.mode == "injected-noise" and self.noise_variance > 0:
            rng = check_random_state(rng)
            U = U + self._noise_std * rng.standard_normal(np.shape(U))
        return U

    def grad_potential(self, theta, rng=None):
        """Gradient of the energy as seen through this oracle."""
        theta = check_positions(theta, self.dim)
        draw = self.draw_gradient_noise(rng, 1, theta.shape[:-1])
        return self.grad_from_draw(theta, None if draw is None else draw[0])

    def draw_gradient_noise(self, rng, n_steps, batch_shape=()):
        """Pre-draw the randomness for ``n_steps`` gradient calls.

        Returns ``None`` (exact), an array of additive gradient noise of
        shape ``(n_steps,) + batch_shape + (D,)``, or minibatch indices of
        shape ``(n_steps,) + batch_shape + (|S|,)``. Consuming the stream in
        blocks or one call at a time gives identical draws.
        """
        if self.mode == "exact" or (self.mode == "injected-noise" and self.noise_variance == 0):
            return None
        rng = check_random_state(rng)
        if self.mode == "injected-noise":
            return self._noise_std * rng.standard_normal((n_steps,) + tuple(batch_shape) + (self.dim,))
        n = self.model.n_data
        shape = (n_steps,) + tuple(batch_shape)
        idx = np.empty(shape + (self.batch_size,), dtype=np.intp)
        for pos in np.ndindex(*shape):
            idx[pos] = rng.choice(n, size=self.batch_size, replace=False)
        return idx

    def grad_from_draw(self, theta, draw):
        if draw is None:
            return self.model.grad_potential(theta)
        if self.mode == "injected-noise":
            return self.model.grad_potential(theta) + draw
        scale = self.model.n_data / self.batch_size
        m = self.model
        return -(m.grad_log_prior(theta) + scale * m.grad_log_likelihood(theta, draw))

    def draw_batch(self, rng):
        rng = check_random_state(rng)
        return rng.choice(self.model.n_data, size=self.batch_size, replace=False)

    def minibatch_potential(self, theta, rng=None, batch=None):
        """Minibatch energy estimate and its scaled per-datum terms.

        Returns ``(U_tilde, terms)`` where ``terms[..., i]`` is
        ``-(|D|/|S|) log l(theta; x_i)`` for the ``i``-th batch member, so
        ``U_tilde = -log prior + terms.sum(-1)``.
        """
        if self.mode != "minibatch":
            raise ValueError("minibatch_potential requires an oracle in minibatch mode")
        theta = check_positions(theta, self.dim)
        if batch is None:
            batch = self.draw_batch(rng)
        scale = self.model.n_data / self.batch_size
        terms = -scale * self.model.log_likelihood(theta, batch)
        U = -self.model.log_prior(theta) + terms.sum(axis=-1)
        if theta.ndim == 1:
            U = float(U)
        return U, terms

    def __repr__(self):
        extra = ""
        if self.mode == "injected-noise":
            extra = f", noise_variance={self.noise_variance}"
        elif self.mode == "minibatch":
            extra = f", batch_size={self.batch_size}"
        return f"PotentialOracle({self.model!r}, mode={self.mode!r}{extra})"


@dataclass(frozen=True)
class GridSpec:
    """Regular histogram grid: ``bins[i]`` cells over ``[lows[i], highs[i]]`` per axis."""

    lows: tuple
    highs: tuple
    bins: tuple

    @property
    def dim(self):
        return len(self.bins)

    def edges(self):
        return [np.linspace(lo, hi, n + 1) for lo, hi, n in zip(self.lows, self.highs, self.bins)]

    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges()]

    @property
    def cell_volume(self):
        return float(np.prod([(hi - lo) / n for lo, hi, n in zip(self.lows, self.highs, self.bins)]))


def default_grid(dim):
    """200 bins on [-10, 10] in 1d; 100 x 100 on [-8, 8]^2 in 2d."""
    if dim == 1:
        return GridSpec((-10.0,), (10.0,), (200,))
    if dim == 2:
        return GridSpec((-8.0, -8.0), (8.0, 8.0), (100, 100))
    raise ValueError(f"density grids are only supported for D in (1, 2), got D={dim}")


def analytic_density_grid(target, T=1.0, grid=None):
    """Tempered density ``exp(-U/T)`` tabulated at grid-cell centres.

    The table is normalized so that ``table.sum() * grid.cell_volume == 1``.
    Returns ``(table, grid)``; ``table`` has shape ``grid.bins``.
    """
    if target.dim > 2:
        raise ValueError(f"density grids are only supported for D in (1, 2), got D={target.dim}")
    T = check_positive(T, "T")
    grid = default_grid(target.dim) if grid is None else grid
    if grid.dim != target.dim:
        raise ValueError("grid dimension does not match the target")
    reach = 5.0 * target.component_std()[:, None] * math.sqrt(T)
    lo, hi = np.asarray(grid.lows), np.asarray(grid.highs)
    if np.any(target.means - reach < lo) or np.any(target.means + reach > hi):
        warnings.warn("grid does not cover 5 standard deviations around every mode", stacklevel=2)
    mesh = np.meshgrid(*grid.centers(), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    U = target.potential(pts)
    logd = -(U - U.min()) / T
    table = np.exp(logd).reshape(grid.bins)
    table /= table.sum() * grid.cell_volume
    return table, grid


def load_model_file(path):
    """Read a mixture target from a TOML model file.

    Keys: ``dimension`` (int), ``weights`` (list), ``means`` (list of
    vectors), ``covariances`` (list of matrices, or of scalars in 1d),
    and optional ``noise_variance`` (float, default 0).

    Returns ``(GaussianMixture, noise_variance)``.
    """
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    return model_from_mapping(data)


def model_from_mapping(data):
    missing = {"dimension", "weights", "means", "covariances"} - set(data)
    if missing:
        raise ValueError(f"model file is missing keys: {sorted(missing)}")
    D = check_count(data["dimension"], "dimension", minimum=1)
    means = np.asarray(data["means"], dtype=float).reshape(-1, D)
    covs = np.asarray(data["covariances"], dtype=float)
    if covs.ndim == 1 and D == 1:
        covs = covs[:, None, None]
    mixture = GaussianMixture(data["weights"], means, covs)
    noise = check_positive(data.get("noise_variance", 0.0), "noise_variance", strict=False)
    return mixture, noise


def dump_model_file(mixture, noise_variance=0.0):
    """Serialize ``mixture`` in the model-file format accepted by :func:`load_model_file`."""
    def fmt(a):
        return repr(np.asarray(a).tolist())

    return (
        f"dimension = {mixture.dim}\n"
        f"weights = {fmt(mixture.weights)}\n"
        f"means = {fmt(mixture.means)}\n"
        f"covariances = {fmt(mixture.covariances)}\n"
        f"noise_variance = {float(noise_variance)!r}\n"
    )
