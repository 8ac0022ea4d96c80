"""Checks of sampler output against analytic ground truth."""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .model import analytic_density_grid, default_grid
from .utils.validation import check_count, check_samples


@dataclass
class RunRecord:
    """Output of one sampler run.

    ``samples`` holds the retained standard-temperature positions, one row
    per retained draw, with ``sample_index`` giving the epoch (tempering),
    step (SGNHT) or trajectory (HMC) at which each was taken. Exchange
    count arrays have one slot per adjacent pair, indexed by its lower
    rung; base-vs-all pairs ``(0, k)`` are counted in slot ``k - 1``.
    """

    sampler: str
    samples: np.ndarray
    sample_index: np.ndarray
    temperatures: np.ndarray
    rung_samples: np.ndarray = None
    exchange_attempts: np.ndarray = None
    exchange_accepts: np.ndarray = None
    exchange_skipped: np.ndarray = None
    events: np.ndarray = None
    n_divergences: int = 0
    n_steps: int = 0
    n_grad_evals: int = 0
    mh_accepts: int = 0
    kinetic_mean: np.ndarray = None
    position_mean: np.ndarray = None
    position_var: np.ndarray = None
    config: dict = field(default_factory=dict)
    seed: object = None
    wall_time: float = 0.0

    def __post_init__(self):
        n_pairs = max(len(self.temperatures) - 1, 0)
        for name in ("exchange_attempts", "exchange_accepts", "exchange_skipped"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n_pairs, dtype=np.int64))
        if np.any(self.exchange_accepts > self.exchange_attempts):
            raise ValueError("exchange accepts exceed attempts")

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def acceptance_rates(self):
        """Accepted / attempted exchanges per adjacent pair (NaN if never attempted)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.exchange_accepts / self.exchange_attempts

    def after_burn_in(self, fraction=0.1):
        """Retained samples with the leading ``fraction`` of the run discarded."""
        n = len(self.samples)
        return self.samples[int(math.floor(fraction * n)):]

    def same_as(self, other):
        """Equality of everything except wall-clock time."""
        for name in self.__dataclass_fields__:
            if name == "wall_time":
                continue
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.dtype != b.dtype or a.shape != b.shape:
                    return False
                if a.dtype.names is not None:
                    if a.tobytes() != b.tobytes():
                        return False
                elif not np.array_equal(a, b, equal_nan=True):
                    return False
            elif a != b:
                return False
        return True


def tv_between(mass_a, mass_b):
    """Total variation between two mass vectors: half their L1 distance."""
    a = np.asarray(mass_a, dtype=float).ravel()
    b = np.asarray(mass_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("mass vectors differ in shape")
    return 0.5 * float(np.abs(a - b).sum())


def empirical_cell_mass(samples, grid):
    """Fraction of ``samples`` in each grid cell; the remainder fell outside."""
    X = check_samples(samples)
    counts, _ = np.histogramdd(X, bins=grid.edges())
    return counts / X.shape[0]


def tv_distance(samples, target, T=1.0, grid=None):
    """TV distance between binned samples and the tempered analytic density.

    Samples outside the grid count as mass the analytic table does not
    have, so the result stays a true distance on (cells + outside).
    """
    X = check_samples(samples)
    if X.shape[0] < 1000:
        warnings.warn("fewer than 1000 samples; TV will be dominated by binning noise", stacklevel=2)
    table, grid = analytic_density_grid(target, T, grid)
    analytic = table * grid.cell_volume
    empirical = empirical_cell_mass(X, grid)
    outside = 1.0 - empirical.sum()
    return float(0.5 * (np.abs(empirical - analytic).sum() + max(outside, 0.0)))


@dataclass
class ModeCoverage:
    fractions: np.ndarray
    overlapping: bool

    def n_covered(self, threshold=0.02):
        return int(np.sum(self.fractions >= threshold))


def mode_coverage(samples, target, radius_multiplier=3.0):
    """Fraction of samples within ``radius_multiplier`` component standard deviations of each mean.

    A sample inside several balls is credited to the one it is closest to
    in units of that ball's radius, so fractions never sum past 1.
    ``overlapping`` flags mixtures whose balls intersect.
    """
    X = check_samples(samples)
    radius = radius_multiplier * target.component_std()
    dist = np.linalg.norm(X[:, None, :] - target.means[None, :, :], axis=-1) / radius
    inside = dist <= 1.0
    nearest = np.argmin(np.where(inside, dist, np.inf), axis=1)
    hit = inside.any(axis=1)
    counts = np.bincount(nearest[hit], minlength=target.n_components)
    gaps = np.linalg.norm(target.means[:, None] - target.means[None, :], axis=-1)
    reach = radius[:, None] + radius[None, :]
    off_diag = ~np.eye(target.n_components, dtype=bool)
    overlapping = bool(np.any(gaps[off_diag] < reach[off_diag]))
    return ModeCoverage(counts / X.shape[0], overlapping)


def autocorrelation(x, max_lag):
    """Normalized autocorrelation of a 1d chain for lags ``0 .. max_lag`` via FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    if acov[0] <= 0:
        return None
    return acov / acov[0]


@dataclass
class AutocorrelationResult:
    tau: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray


def autocorrelation_ess(samples, max_lag=1000):
    """Integrated autocorrelation time and effective sample size per coordinate.

    Uses Geyer's initial positive sequence: sums of adjacent-lag pairs
    ``rho(2k) + rho(2k+1)`` are accumulated while positive, giving
    ``tau = -1 + 2 * sum``. The estimate is capped at ``max_lag``;
    constant chains report the cap with ``degenerate`` set.
    """
    X = check_samples(samples)
    max_lag = check_count(max_lag, "max_lag", minimum=1)
    n, dim = X.shape
    if n < 10 * max_lag:
        raise ValueError(f"chain of length {n} is shorter than 10 * max_lag = {10 * max_lag}")
    tau = np.empty(dim)
    degenerate = np.zeros(dim, dtype=bool)
    for d in range(dim):
        rho = autocorrelation(X[:, d], max_lag)
        if rho is None:
            tau[d] = max_lag
            degenerate[d] = True
            continue
        total = 0.0
        for k in range((max_lag + 1) // 2):
            pair = rho[2 * k] + rho[2 * k + 1]
            if pair <= 0:
                break
            total += pair
        tau[d] = min(max(-1.0 + 2.0 * total, 1.0 / n), float(max_lag))
        degenerate[d] = tau[d] >= max_lag
    return AutocorrelationResult(tau, n / tau, degenerate)


def summarize(record, target=None, grid=None, burn_in=0.1, radius_multiplier=3.0, max_lag=200):
    """Structured report of a run: TV per temperature, mode fractions, ESS and exchange rates.

    All values are plain Python types so the report serializes to JSON.
    Wall-clock time is left out to keep reports reproducible.
    """
    out = {
        "sampler": record.sampler,
        "seed": record.seed,
        "n_retained": int(len(record.samples)),
        "burn_in_fraction": burn_in,
        "temperatures": [float(t) for t in record.temperatures],
        "n_steps": int(record.n_steps),
        "n_grad_evals": int(record.n_grad_evals),
        "n_divergences": int(record.n_divergences),
    }
    if record.sampler == "hmc" and len(record.samples):
        out["mh_acceptance_rate"] = record.mh_accepts / len(record.samples)
    if len(record.temperatures) > 1:
        out["exchange"] = {
            "attempts": record.exchange_attempts.tolist(),
            "accepts": record.exchange_accepts.tolist(),
            "skipped": record.exchange_skipped.tolist(),
            "acceptance_rates": [None if np.isnan(r) else float(r) for r in record.acceptance_rates],
        }
    if record.kinetic_mean is not None:
        out["kinetic_mean"] = [None if np.isnan(k) else float(k) for k in record.kinetic_mean]
    kept = record.after_burn_in(burn_in)
    out["n_after_burn_in"] = int(len(kept))
    if len(kept) == 0:
        return out
    if target is not None and target.dim <= 2:
        grid = default_grid(target.dim) if grid is None else grid
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tv = {"1": tv_distance(kept, target, 1.0, grid)}
            if record.rung_samples is not None and len(record.temperatures) > 1:
                start = len(record.samples) - len(kept)
                for j, T in enumerate(record.temperatures[1:], start=1):
                    tv[f"{T:g}"] = tv_distance(record.rung_samples[start:, j], target, T, grid)
        out["tv_distance"] = tv
    if target is not None:
        cov = mode_coverage(kept, target, radius_multiplier)
        out["mode_fractions"] = cov.fractions.tolist()
        out["modes_overlapping"] = cov.overlapping
        out["modes_covered"] = cov.n_covered()
    lag = min(max_lag, len(kept) // 10)
    if lag >= 1:
        ac = autocorrelation_ess(kept, lag)
        out["tau"] = ac.tau.tolist()
        out["ess"] = ac.ess.tolist()
        out["tau_capped"] = ac.degenerate.tolist()
    return out
