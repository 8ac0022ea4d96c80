"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary."""

import time
from pathlib import Path

import numpy as np
import pytest
from conftest import record_criterion, record_info
from scipy import special

from ptsghmc.cli import build_sampler, main
from ptsghmc.config import load_config
from ptsghmc.dynamics import DynamicsConfig
from ptsghmc.exceptions import SigmaTooLargeError
from ptsghmc.exchange_test import barker_accept, barker_probability, build_correction_table, logistic_ks, minibatch_accept
from ptsghmc.model import PotentialOracle, gauss1d
from ptsghmc.tempering import delta_E, make_ladder, run_pt

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def fit_from_config(name, which="pt", **overrides):
    cfg = load_config(CONFIGS / name)
    for key, value in overrides.items():
        cfg.set(key.replace("__", "."), value)
    est, mixture = build_sampler(cfg, which)
    return est.fit(mixture), mixture


# --- 1, 2: multimodal reproductions -------------------------------------------


def test_criterion_1_four_mode_1d():
    start = time.perf_counter()
    est, mixture = fit_from_config("fig1.cfg")
    elapsed = time.perf_counter() - start
    tv = -est.score()
    fractions = est.mode_fractions()
    n = len(est.samples_)
    passed = n >= 2 * 10**4 and tv <= 0.08 and fractions.min() >= 0.10
    record_criterion(1, "1d four-mode mixture", passed,
                     f"retained {n}, TV {tv:.4f} (<= 0.08), mode fractions "
                     f"{np.round(fractions, 3).tolist()} (each >= 0.10), {elapsed:.0f} s")
    assert passed


def test_criterion_2_five_mode_2d():
    start = time.perf_counter()
    est, mixture = fit_from_config("fig2.cfg")
    elapsed = time.perf_counter() - start
    tv = -est.score()
    fractions = est.mode_fractions()
    passed = tv <= 0.15 and fractions.min() >= 0.05
    record_criterion(2, "2d five-mode mixture", passed,
                     f"TV {tv:.4f} (<= 0.15), mode fractions {np.round(fractions, 3).tolist()} "
                     f"(each >= 0.05), {elapsed:.0f} s")
    assert passed


# --- 3: baselines fail under the same gradient budget ------------------------

SEEDS = range(10)


def median_modes_covered(which, epochs):
    covered = []
    for seed in SEEDS:
        est, _ = fit_from_config("fig1.cfg", which, run__epochs=epochs, run__seed=seed,
                                 dynamics__theta0="mode:0")
        covered.append(int(np.sum(est.mode_fractions() >= 0.02)))
    return float(np.median(covered)), covered


def test_criterion_3_baseline_contrast():
    # 200 epochs x 50 steps x 10 rungs = 1e5 gradient evaluations per sampler
    pt, pt_all = median_modes_covered("pt", 200)
    sg, sg_all = median_modes_covered("sgnht", 200)
    hmc, hmc_all = median_modes_covered("hmc", 200)
    passed = pt == 4 and sg <= 2 and hmc <= 2
    record_criterion(3, "baseline contrast at 1e5 gradient evaluations", passed,
                     f"median modes covered PT {pt:g} (== 4), SGNHT {sg:g} (<= 2), HMC {hmc:g} (<= 2); "
                     f"per seed PT {pt_all} SGNHT {sg_all} HMC {hmc_all}")
    for epochs in (1000, 5000):
        medians = [median_modes_covered(w, epochs)[0] for w in ("pt", "sgnht", "hmc")]
        record_info(3, f"budget {epochs * 500:.2g} gradient evaluations: median modes covered "
                       f"PT {medians[0]:g}, SGNHT {medians[1]:g}, HMC {medians[2]:g} (informational)")
    assert passed


# --- 4: thermostat invariants on every rung ----------------------------------


def test_criterion_4_thermostat_invariants():
    # 20000 epochs x 50 steps = 1e6 thermostatted steps per rung
    rec = run_pt(PotentialOracle(gauss1d()), make_ladder(10, 10), DynamicsConfig(), epochs=20000,
                 random_state=0, keep_rung_samples=False)
    T = np.asarray(rec.temperatures)
    D = 1
    kin_err = np.abs(rec.kinetic_mean / D - 1)
    rungs = [list(T).index(t) for t in (1.0, 4.0, 10.0)]
    ratio = rec.position_var.ravel()[rungs] / T[rungs]
    passed = kin_err.max() < 0.05 and np.all(np.abs(ratio - 1) < 0.05)
    record_criterion(4, "thermostat invariants", passed,
                     f"max |<p'M^-1p>/D - 1| over rungs {kin_err.max():.4f} (< 0.05); "
                     f"var/(T v) at T=1,4,10 {np.round(ratio, 4).tolist()} (within 0.05 of 1)")
    assert passed


# --- 5: swap kernel detailed balance -----------------------------------------


def test_criterion_5_swap_detailed_balance():
    U = np.array([0.3, 2.1, -0.4, 1.7, 0.9])
    T_j, T_k = 1.0, 3.0
    n = len(U)
    P = np.zeros((n * n, n * n))
    for a in range(n):
        for b in range(n):
            alpha = barker_probability(-delta_E(U[a], U[b], T_j, T_k))
            P[a * n + b, b * n + a] += alpha
            P[a * n + b, a * n + b] += 1 - alpha
    pi = np.exp(-np.add.outer(U / T_j, U / T_k)).ravel()
    pi /= pi.sum()
    flow = pi[:, None] * P
    balance = np.max(np.abs(flow - flow.T))
    stationarity = np.max(np.abs(pi @ P - pi))
    passed = balance < 1e-12 and stationarity < 1e-12
    record_criterion(5, "swap kernel detailed balance", passed,
                     f"max balance residual {balance:.1e}, max stationarity residual {stationarity:.1e} (< 1e-12)")
    assert passed


# --- 6: correction distribution ------------------------------------------------


def test_criterion_6_correction_distribution():
    rng = np.random.default_rng(2024)
    ks, clipped = {}, {}
    for sigma in (0.1, 0.25, 0.5, 1.0):
        table = build_correction_table(sigma**2)
        draws = table.sample(rng, 10**5) + sigma * rng.standard_normal(10**5)
        ks[sigma] = logistic_ks(draws)
        clipped[sigma] = table.clipped_mass
    try:
        build_correction_table(25.0)
        raised = False
    except SigmaTooLargeError:
        raised = True
    passed = max(ks.values()) < 0.01 and max(clipped.values()) < 1e-3 and raised
    record_criterion(6, "correction distribution", passed,
                     f"KS at 1e5 draws {[round(v, 4) for v in ks.values()]} (< 0.01), clipped mass "
                     f"{[float(f'{v:.1e}') for v in clipped.values()]} (< 1e-3), sigma=5 raises: {raised}")
    assert passed


# --- 7: minibatch-corrected swaps on a discrete toy -----------------------------


def discrete_tempering(decide, U, temps, n_chains, n_steps, rng):
    """Two replicas on a line of states; local Metropolis moves then one swap attempt per step."""
    n = len(U)
    pi1 = np.exp(-U / temps[0]) / np.exp(-U / temps[0]).sum()
    pi2 = np.exp(-U / temps[1]) / np.exp(-U / temps[1]).sum()
    x = np.stack([rng.choice(n, n_chains, p=pi1), rng.choice(n, n_chains, p=pi2)])
    counts = np.zeros(n * n, dtype=np.int64)
    for _ in range(n_steps):
        for r, T in enumerate(temps):
            prop = x[r] + rng.choice([-1, 1], n_chains)
            inside = (prop >= 0) & (prop < n)
            prop = np.where(inside, prop, x[r])
            accept = inside & (rng.random(n_chains) < np.exp(-(U[prop] - U[x[r]]) / T))
            x[r] = np.where(accept, prop, x[r])
        s = -delta_E(U[x[0]], U[x[1]], temps[0], temps[1])
        swap = decide(s, rng)
        x[:, swap] = x[::-1, swap]
        counts += np.bincount(x[0] * n + x[1], minlength=n * n)
    return counts / counts.sum(), np.outer(pi1, pi2).ravel()


def test_criterion_7_minibatch_swaps_preserve_target():
    U = np.array([0.0, 2.5, 0.8, 3.0, 1.2])
    temps = (1.0, 3.0)
    sigma2 = 0.25
    table = build_correction_table(sigma2)

    def corrected(s, rng):
        return minibatch_accept(s + np.sqrt(sigma2) * rng.standard_normal(s.shape), sigma2, table, rng)

    def naive(s, rng):
        return barker_accept(s + np.sqrt(sigma2) * rng.standard_normal(s.shape), rng)

    # 1000 chains x 1000 steps = 1e6 steps, started from the exact stationary law
    emp, pi = discrete_tempering(corrected, U, temps, 1000, 1000, np.random.default_rng(7))
    tv = 0.5 * np.abs(emp - pi).sum()
    passed = tv < 0.01
    record_criterion(7, "minibatch-corrected swaps on a discrete toy", passed,
                     f"TV to the exact-Barker stationary law {tv:.4f} (< 0.01) over 1e6 steps")
    emp_naive, _ = discrete_tempering(naive, U, temps, 1000, 1000, np.random.default_rng(7))
    record_info(7, f"uncorrected noisy Barker on the same toy: TV {0.5 * np.abs(emp_naive - pi).sum():.4f} "
                   f"(swap acceptance shifted by up to "
                   f"{np.max(np.abs(special.expit(np.linspace(-3, 3, 61)) - _smoothed_barker(sigma2))):.3f})")
    assert passed


def _smoothed_barker(sigma2, n=20001):
    s = np.linspace(-3, 3, 61)
    z = np.linspace(-8, 8, n)
    w = np.exp(-0.5 * z**2)
    w /= w.sum()
    return special.expit(s[:, None] + np.sqrt(sigma2) * z[None, :]) @ w


# --- 8: determinism of every command ------------------------------------------


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


def test_criterion_8_determinism(tmp_path):
    commands = {
        "run": ["run", "--config", str(CONFIGS / "fig1.cfg"), "--epochs", "500"],
        "run-2d": ["run", "--config", str(CONFIGS / "fig2.cfg"), "--epochs", "300"],
        "baseline-sgnht": ["baseline", "sgnht", "--config", str(CONFIGS / "fig1.cfg"), "--epochs", "100"],
        "baseline-hmc": ["baseline", "hmc", "--config", str(CONFIGS / "fig1.cfg"), "--epochs", "100"],
    }
    identical = {}
    for name, argv in commands.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / rep / name
            assert main(argv + ["--out", str(out)]) == 0
            outs.append(_files(out))
        identical[name] = outs[0] == outs[1] and len(outs[0]) == 6
    tables = []
    for rep in ("a", "b"):
        out = tmp_path / rep / "table.json"
        assert main(["correction-table", "--sigma2", "0.25", "--seed", "3", "--out", str(out)]) == 0
        tables.append(out.read_bytes())
    identical["correction-table"] = tables[0] == tables[1]
    reports = []
    for rep in ("a", "b"):
        out = tmp_path / rep / "diagnose.json"
        assert main(["diagnose", str(tmp_path / "a" / "run"), "--out", str(out)]) == 0
        reports.append(out.read_bytes())
    identical["diagnose"] = reports[0] == reports[1]
    passed = all(identical.values())
    record_criterion(8, "bitwise determinism", passed,
                     ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in identical.items()))
    assert passed
