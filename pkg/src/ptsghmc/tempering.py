"""Parallel tempering: the temperature ladder, configuration exchanges and the epoch loop.

Rungs are indexed from 0 (the ``T = 1`` rung) to ``R - 1``. An epoch
advances every replica ``steps_per_epoch`` thermostatted steps, then runs
one exchange sweep. Exchanges swap positions only; momenta and thermostat
variables stay with their rung.
"""

from dataclasses import dataclass
import time

import numpy as np

from .diagnostics import RunRecord
from .dynamics import DynamicsConfig, _Accumulator, initial_state, integrate_nh, spawn_streams
from .exceptions import DivergenceError
from .exchange_test import AcceptanceTest, estimate_deltaE_variance
from .model import PotentialOracle
from .utils.validation import check_count, check_random_state

PAIRINGS = ("adjacent", "base-vs-all")

EVENT_DTYPE = np.dtype([
    ("epoch", np.int64),
    ("j", np.int32),
    ("k", np.int32),
    ("delta_E", np.float64),
    ("correction", np.float64),
    ("accepted", np.bool_),
    ("skipped", np.bool_),
])


@dataclass(frozen=True)
class TemperatureLadder:
    """Strictly increasing temperatures starting at exactly 1."""

    temperatures: tuple

    def __post_init__(self):
        temps = tuple(float(t) for t in self.temperatures)
        if len(temps) < 1:
            raise ValueError("a ladder needs at least one rung")
        if temps[0] != 1.0:
            raise ValueError(f"the first rung must have T = 1, got {temps[0]}")
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValueError("ladder temperatures must be strictly increasing")
        object.__setattr__(self, "temperatures", temps)

    @property
    def R(self):
        return len(self.temperatures)

    def as_array(self):
        return np.array(self.temperatures)


def make_ladder(R, T_max, spacing="linear"):
    """Ladder of ``R`` rungs from ``T = 1`` to ``T_max``.

    ``linear`` spaces temperatures evenly, ``geometric`` with a constant
    ratio. A single rung is always ``(1,)``.
    """
    R = check_count(R, "R", minimum=1)
    T_max = float(T_max)
    if not np.isfinite(T_max) or T_max < 1:
        raise ValueError(f"T_max must be >= 1, got {T_max}")
    if R == 1:
        return TemperatureLadder((1.0,))
    if T_max == 1:
        raise ValueError("T_max must exceed 1 for a ladder with more than one rung")
    if spacing == "linear":
        temps = np.linspace(1.0, T_max, R)
    elif spacing == "geometric":
        temps = np.geomspace(1.0, T_max, R)
    else:
        raise ValueError(f"unknown spacing {spacing!r}; use 'linear' or 'geometric'")
    temps[0], temps[-1] = 1.0, T_max
    return TemperatureLadder(tuple(temps))


def delta_E(U_j, U_k, T_j, T_k):
    """``(U_k - U_j) * (T_k - T_j) / (T_j * T_k)`` for rungs ``T_j < T_k``.

    Swapping the two positions changes the log product density by
    ``-delta_E``, so the exchange tests are applied to ``-delta_E``.
    """
    return (U_k - U_j) * ((T_k - T_j) / (T_j * T_k))


@dataclass(frozen=True)
class ExchangeEvent:
    epoch: int
    j: int
    k: int
    delta_E: float
    correction: float = None
    accepted: bool = False
    skipped: bool = False


def events_from_array(arr):
    """Turn a structured event array into :class:`ExchangeEvent` objects."""
    return [
        ExchangeEvent(int(e["epoch"]), int(e["j"]), int(e["k"]), float(e["delta_E"]),
                      None if np.isnan(e["correction"]) else float(e["correction"]),
                      bool(e["accepted"]), bool(e["skipped"]))
        for e in arr
    ]


def sweep_pairs(R, parity, pairing="adjacent", rng=None):
    """Rung pairs attempted by one sweep.

    ``adjacent`` with parity ``even`` gives (0, 1), (2, 3), ...; ``odd``
    gives (1, 2), (3, 4), .... ``base-vs-all`` attempts one pair (0, k)
    with ``k`` drawn uniformly from the other rungs.
    """
    if R < 2:
        return np.empty((0, 2), dtype=int)
    if pairing == "adjacent":
        start = {"even": 0, "odd": 1}[parity]
        lo = np.arange(start, R - 1, 2)
        return np.stack([lo, lo + 1], axis=1)
    if pairing == "base-vs-all":
        k = int(check_random_state(rng).integers(1, R))
        return np.array([[0, k]])
    raise ValueError(f"unknown pairing {pairing!r}; choose from {PAIRINGS}")


def _pair_statistics(theta, temps, pairs, oracle, test, rng):
    """Noisy log swap ratios, their variances and literal delta_E per pair."""
    j, k = pairs[:, 0], pairs[:, 1]
    scale = 1.0 / temps[j] - 1.0 / temps[k]
    if oracle.mode == "minibatch":
        n = len(pairs)
        U = np.empty((n, 2))
        var = np.empty(n)
        for i in range(n):
            batch = oracle.draw_batch(rng)
            U[i, 0], tj = oracle.minibatch_potential(theta[j[i]], batch=batch)
            U[i, 1], tk = oracle.minibatch_potential(theta[k[i]], batch=batch)
            if oracle.batch_size == oracle.model.n_data:
                var[i] = 0.0
            else:
                var[i] = estimate_deltaE_variance(scale[i], tj, tk, n_data=oracle.model.n_data)
        Uj, Uk = U[:, 0], U[:, 1]
    elif oracle.is_exact:
        U = oracle.potential(theta[np.concatenate([j, k])])
        Uj, Uk = U[: len(j)], U[len(j):]
        var = np.zeros(len(pairs))
    elif test.noise_model == "estimated" and test.kind == "minibatch-corrected":
        m = test.n_reads
        rows = np.repeat(theta[np.concatenate([j, k])], m, axis=0)
        reads = oracle.potential(rows, rng).reshape(-1, m)
        means, s2 = reads.mean(axis=1), reads.var(axis=1, ddof=1) / m
        Uj, Uk = means[: len(j)], means[len(j):]
        var = scale**2 * (s2[: len(j)] + s2[len(j):])
    else:
        U = oracle.potential(theta[np.concatenate([j, k])], rng)
        Uj, Uk = U[: len(j)], U[len(j):]
        var = estimate_deltaE_variance(scale, noise_variance=oracle.noise_variance)
    dE = delta_E(Uj, Uk, temps[j], temps[k])
    return -dE, var, dE


def _exchange_in_place(theta, temps, oracle, test, pairs, rng, epoch, out):
    """Attempt ``pairs`` on ``theta`` (shape ``(R, D)``), writing events into ``out``."""
    n = len(pairs)
    if n == 0:
        return
    log_ratio, var, dE = _pair_statistics(theta, temps, pairs, oracle, test, rng)
    accepted, corr, skipped = test.decide_many(log_ratio, var, rng)
    for i in range(n):
        if accepted[i]:
            a, b = pairs[i]
            theta[[a, b]] = theta[[b, a]]
    out["epoch"][:n] = epoch
    out["j"][:n] = pairs[:, 0]
    out["k"][:n] = pairs[:, 1]
    out["delta_E"][:n] = dE
    out["correction"][:n] = corr
    out["accepted"][:n] = accepted
    out["skipped"][:n] = skipped


def exchange_sweep(replicas, ladder, oracle, test, parity="even", rng=None, epoch=0, pairing="adjacent"):
    """One sweep of configuration exchanges over rung-sorted ``replicas``.

    Every attempted pair gets an :class:`ExchangeEvent`; accepted pairs swap
    positions. Returns ``(new_replicas, events)``; inputs are not modified.
    """
    rng = check_random_state(rng)
    replicas = sorted(replicas, key=lambda s: s.rung)
    temps = ladder.as_array()
    if len(replicas) != ladder.R:
        raise ValueError("one replica per rung is required")
    theta = np.stack([s.theta for s in replicas]).astype(float)
    pairs = sweep_pairs(ladder.R, parity, pairing, rng)
    out = np.zeros(len(pairs), dtype=EVENT_DTYPE)
    _exchange_in_place(theta, temps, oracle, test, pairs, rng, epoch, out)
    new = [
        type(s)(theta[i].copy(), s.p.copy(), s.xi, s.T, s.rung) for i, s in enumerate(replicas)
    ]
    return new, events_from_array(out)


def run_pt(target, ladder, cfg=None, test=None, epochs=1000, random_state=None, theta0=None,
           pairing="adjacent", keep_rung_samples=True):
    """Parallel-tempered SGNHT.

    Alternates ``cfg.steps_per_epoch`` thermostatted steps of every replica
    with one exchange sweep (even and odd adjacent pairs on alternate
    epochs). The ``T = 1`` position after each epoch is kept as a
    posterior sample.

    Parameters
    ----------
    target : PotentialOracle or model
        A bare model is sampled with exact gradients and energies.
    ladder : TemperatureLadder
    cfg : DynamicsConfig, optional
    test : AcceptanceTest, optional
        Defaults to the exact Barker test.
    epochs : int
    random_state : int, SeedSequence or None
        Rung ``j`` uses its own child stream; exchanges use another.
    theta0 : array-like, optional
        Initial position for every replica (``(D,)``) or per rung
        (``(R, D)``); defaults to independent ``N(0, I)`` draws.

    Raises
    ------
    DivergenceError
        If any replica becomes non-finite. The partial run is attached as
        ``exc.record``.
    """
    oracle = target if isinstance(target, PotentialOracle) else PotentialOracle(target)
    cfg = DynamicsConfig() if cfg is None else cfg
    test = AcceptanceTest() if test is None else test
    epochs = check_count(epochs, "epochs")
    if pairing not in PAIRINGS:
        raise ValueError(f"unknown pairing {pairing!r}; choose from {PAIRINGS}")
    R, dim = ladder.R, oracle.dim
    temps = ladder.as_array()
    streams = spawn_streams(random_state, R)
    ex_rng, rung_rngs = streams[0], streams[1:]
    start = time.perf_counter()

    init = None if theta0 is None else np.asarray(theta0, dtype=float)
    states = []
    for j in range(R):
        t0 = None if init is None else (init if init.ndim <= 1 else init[j])
        states.append(initial_state(dim, cfg, rung_rngs[j], temps[j], j, t0))
    theta = np.stack([s.theta for s in states])
    p = np.stack([s.p for s in states])
    xi = np.zeros(R)

    steps = cfg.steps_per_epoch
    per_sweep = 1 if pairing == "base-vs-all" else (R // 2)
    events = np.zeros(epochs * per_sweep if R > 1 else 0, dtype=EVENT_DTYPE)
    n_events = 0
    rung_samples = np.empty((epochs, R, dim))
    acc = _Accumulator(R, dim)

    def record(n_done, divergences=0):
        kin, mean, var = acc.summary()
        ev = events[:n_events].copy()
        attempts = np.zeros(max(R - 1, 0), dtype=np.int64)
        accepts = np.zeros_like(attempts)
        skipped = np.zeros_like(attempts)
        if pairing == "adjacent" and R > 1:
            np.add.at(attempts, ev["j"][~ev["skipped"]], 1)
            np.add.at(accepts, ev["j"][ev["accepted"]], 1)
            np.add.at(skipped, ev["j"][ev["skipped"]], 1)
        elif R > 1:
            # base-vs-all: index by the hot partner, k - 1
            np.add.at(attempts, ev["k"][~ev["skipped"]] - 1, 1)
            np.add.at(accepts, ev["k"][ev["accepted"]] - 1, 1)
            np.add.at(skipped, ev["k"][ev["skipped"]] - 1, 1)
        return RunRecord(
            sampler="pt-sgnht",
            samples=rung_samples[:n_done, 0].copy(),
            sample_index=np.arange(1, n_done + 1),
            temperatures=temps.copy(),
            rung_samples=rung_samples[:n_done].copy() if keep_rung_samples else None,
            exchange_attempts=attempts,
            exchange_accepts=accepts,
            exchange_skipped=skipped,
            events=ev,
            n_divergences=divergences,
            n_steps=n_done * steps,
            n_grad_evals=n_done * steps * R,
            kinetic_mean=kin,
            position_mean=mean,
            position_var=var,
            wall_time=time.perf_counter() - start,
        )

    for epoch in range(epochs):
        blocks = [oracle.draw_gradient_noise(rung_rngs[j], steps) for j in range(R)]
        draws = None if blocks[0] is None else np.stack(blocks, axis=1)
        try:
            integrate_nh(theta, p, xi, temps, cfg, oracle, draws, steps, acc, step_offset=epoch * steps)
        except DivergenceError as exc:
            exc.record = record(epoch, divergences=1)
            raise
        if R > 1:
            parity = "even" if epoch % 2 == 0 else "odd"
            pairs = sweep_pairs(R, parity, pairing, ex_rng)
            _exchange_in_place(theta, temps, oracle, test, pairs, ex_rng, epoch,
                               events[n_events:n_events + len(pairs)])
            n_events += len(pairs)
        rung_samples[epoch] = theta
    return record(epochs)
