"""Command-line entry point: ``ptsghmc {run, baseline, correction-table, diagnose}``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 correction-validity failure.

Files written by ``run`` and ``baseline`` into ``output.dir``:

``samples.csv``
    Header ``epoch,theta_1,...,theta_D`` (``run``), ``step,...`` (SGNHT)
    or ``trajectory,...`` (HMC); one row per retained ``T = 1`` sample,
    burn-in included.
``exchanges.log``
    One JSON object per exchange attempt with keys ``epoch, j, k,
    delta_E, C, accepted, skipped``. Rungs are 0-based; ``C`` is null when
    no correction was drawn. Empty for baselines.
``summary.json``
    Diagnostics plus the resolved configuration under ``"config"``.
``config.cfg``
    The resolved configuration minus ``output.dir``; rerunning with it
    reproduces every file.
``density_empirical.csv``, ``density_analytic.csv``
    ``x,density`` (1d) or ``x,y,density`` (2d) at grid-cell centres, for
    post-burn-in samples and the analytic target at ``T = 1``.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import RunConfig, load_config, parse_override
from .diagnostics import RunRecord, empirical_cell_mass, summarize
from .exceptions import ConfigError, CorrectionValidityError, DivergenceError, SigmaTooLargeError
from .exchange_test import build_correction_table, logistic_ks
from .model import analytic_density_grid, default_grid, get_preset, load_model_file
from .estimators import HMCSampler, PTSGNHTSampler, SGNHTSampler

# where the files go is not part of the experiment, so it stays out of the echo
ECHO_EXCLUDE = ("output.dir",)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_CORRECTION = 0, 2, 3, 4

SAMPLE_INDEX_COLUMN = {"pt-sgnht": "epoch", "sgnht": "step", "hmc": "trajectory"}

# shorthand flags and the config keys they override
FLAG_KEYS = {
    "preset": "target.preset",
    "model_file": "target.model_file",
    "oracle": "oracle.mode",
    "noise_variance": "oracle.noise_variance",
    "R": "ladder.R",
    "T_max": "ladder.T_max",
    "step_size": "dynamics.step_size",
    "test": "exchange.test",
    "epochs": "run.epochs",
    "seed": "run.seed",
    "n_samples": "baseline.n_samples",
    "out": "output.dir",
}


def resolve_config(args):
    """Config file (or defaults) with ``--set`` and shorthand flags applied, in that order."""
    cfg = load_config(args.config) if args.config else RunConfig()
    values = cfg.to_dict()
    for item in args.set or []:
        key, value = parse_override(item)
        values[key] = value
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    return RunConfig(values)


def load_target(cfg):
    """``(mixture, noise_variance)``; a model file's own noise level takes precedence."""
    if cfg["target.model_file"]:
        try:
            mixture, file_noise = load_model_file(cfg["target.model_file"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"target.model_file: {exc}") from None
        return mixture, file_noise if file_noise > 0 else cfg["oracle.noise_variance"]
    return get_preset(cfg["target.preset"]), cfg["oracle.noise_variance"]


def initial_position(cfg, mixture):
    spec = cfg["dynamics.theta0"]
    if spec == "random":
        return None
    if isinstance(spec, str):
        i = int(spec.split(":")[1])
        if i >= mixture.n_components:
            raise ConfigError(f"dynamics.theta0: mixture has no component {i}")
        return mixture.means[i].copy()
    theta0 = np.asarray(spec, dtype=float)
    if theta0.shape != (mixture.dim,):
        raise ConfigError(f"dynamics.theta0: expected {mixture.dim} coordinates, got {theta0.size}")
    return theta0


def _oracle_kwargs(cfg, noise):
    return {"oracle_mode": cfg["oracle.mode"], "noise_variance": noise}


def build_sampler(cfg, which="pt"):
    mixture, noise = load_target(cfg)
    theta0 = initial_position(cfg, mixture)
    seed = cfg["run.seed"]
    steps, R, epochs = cfg["dynamics.steps_per_epoch"], cfg["ladder.R"], cfg["run.epochs"]
    budget = epochs * steps * R
    n_samples = cfg["baseline.n_samples"]
    if which == "pt":
        est = PTSGNHTSampler(
            n_rungs=R, t_max=cfg["ladder.T_max"], spacing=cfg["ladder.spacing"],
            pairing=cfg["ladder.pairing"], step_size=cfg["dynamics.step_size"],
            steps_per_epoch=steps, mass=cfg["dynamics.mass"],
            thermal_inertia=cfg["dynamics.thermal_inertia"], n_epochs=epochs,
            acceptance=cfg["exchange.test"], noise_model=cfg["exchange.noise_model"],
            sigma_levels=tuple(cfg["exchange.sigma_levels"]), gamma=cfg["exchange.gamma"],
            K=cfg["exchange.K"], burn_in=cfg["run.burn_in"], theta0=theta0, random_state=seed,
            **_oracle_kwargs(cfg, noise))
    elif which == "sgnht":
        # matched budget: as many gradient calls as the tempered run, thinned per epoch
        est = SGNHTSampler(
            step_size=cfg["dynamics.step_size"], mass=cfg["dynamics.mass"],
            thermal_inertia=cfg["dynamics.thermal_inertia"],
            n_samples=budget // steps if n_samples < 0 else n_samples, thin=steps,
            burn_in=cfg["run.burn_in"], theta0=theta0, random_state=seed,
            **_oracle_kwargs(cfg, noise))
    elif which == "hmc":
        L = cfg["hmc.leapfrog_steps"]
        est = HMCSampler(
            step_size=cfg["hmc.step_size"], leapfrog_steps=L, mass=cfg["dynamics.mass"],
            n_samples=budget // (L + 1) if n_samples < 0 else n_samples,
            burn_in=cfg["run.burn_in"], theta0=theta0, random_state=seed,
            **_oracle_kwargs(cfg, noise))
    else:
        raise ValueError(f"unknown sampler {which!r}")
    return est, mixture


def _fmt(x):
    return repr(float(x))


def write_samples(path, record):
    name = SAMPLE_INDEX_COLUMN[record.sampler]
    dim = record.samples.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([name] + [f"theta_{d + 1}" for d in range(dim)]) + "\n")
        for i, row in zip(record.sample_index, record.samples):
            fh.write(",".join([str(int(i))] + [_fmt(v) for v in row]) + "\n")


def write_events(path, record):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if record.events is None:
            return
        for ev in record.events:
            c = float(ev["correction"])
            fh.write(json.dumps({
                "epoch": int(ev["epoch"]), "j": int(ev["j"]), "k": int(ev["k"]),
                "delta_E": float(ev["delta_E"]), "C": None if math.isnan(c) else c,
                "accepted": bool(ev["accepted"]), "skipped": bool(ev["skipped"]),
            }) + "\n")


def _write_grid(path, grid, values):
    centers = grid.centers()
    mesh = np.meshgrid(*centers, indexing="ij")
    cols = ["x", "y"][: grid.dim] + ["density"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for idx in np.ndindex(*grid.bins):
            fh.write(",".join([_fmt(m[idx]) for m in mesh] + [_fmt(values[idx])]) + "\n")


def write_densities(outdir, record, mixture, burn_in):
    if mixture.dim > 2:
        return False
    grid = default_grid(mixture.dim)
    kept = record.after_burn_in(burn_in)
    if len(kept):
        empirical = empirical_cell_mass(kept, grid) / grid.cell_volume
    else:
        empirical = np.zeros(grid.bins)
    analytic, _ = analytic_density_grid(mixture, 1.0, grid)
    _write_grid(os.path.join(outdir, "density_empirical.csv"), grid, empirical)
    _write_grid(os.path.join(outdir, "density_analytic.csv"), grid, analytic)
    return True


def write_summary(path, report):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def emit_artifacts(cfg, record, mixture, extra=None):
    outdir = cfg["output.dir"]
    os.makedirs(outdir, exist_ok=True)
    record.seed = cfg["run.seed"]
    with open(os.path.join(outdir, "config.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.to_text(exclude=ECHO_EXCLUDE))
    write_samples(os.path.join(outdir, "samples.csv"), record)
    write_events(os.path.join(outdir, "exchanges.log"), record)
    has_grid = write_densities(outdir, record, mixture, cfg["run.burn_in"])
    report = summarize(record, mixture, burn_in=cfg["run.burn_in"],
                       radius_multiplier=cfg["diagnostics.radius_multiplier"])
    report["density_files"] = has_grid
    report["config"] = cfg.to_dict(exclude=ECHO_EXCLUDE)
    report.update(extra or {})
    write_summary(os.path.join(outdir, "summary.json"), _nan_to_none(report))
    return report


def _sample(cfg, which):
    est, mixture = build_sampler(cfg, which)
    try:
        est.fit(mixture)
    except DivergenceError as exc:
        record = getattr(exc, "record", None)
        if record is not None:
            emit_artifacts(cfg, record, mixture,
                           {"divergence": {"step": exc.step, "rung": exc.rung}})
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    report = emit_artifacts(cfg, est.record_, mixture)
    _print_brief(report, cfg["output.dir"])
    return EXIT_OK


def _print_brief(report, outdir):
    parts = [f"{report['sampler']}: {report['n_retained']} samples"]
    if "tv_distance" in report:
        parts.append(f"TV(T=1) {report['tv_distance']['1']:.4f}")
    if "mode_fractions" in report:
        parts.append("modes " + " ".join(f"{f:.3f}" for f in report["mode_fractions"]))
    print("; ".join(parts) + f" -> {outdir}")


def cmd_run(args):
    return _sample(resolve_config(args), "pt")


def cmd_baseline(args):
    return _sample(resolve_config(args), args.which)


def cmd_correction_table(args):
    if args.sigma2 <= 0:
        print("error: sigma2 = 0 means the exchange statistic is exact; "
              "zero noise needs no correction (use the exact Barker test)", file=sys.stderr)
        return EXIT_CONFIG
    gamma = "auto" if args.gamma == "auto" else float(args.gamma)
    table = build_correction_table(args.sigma2, gamma, args.K, args.x_max, args.n_grid)
    report = table.report()
    if table.valid and args.draws > 0:
        rng = np.random.default_rng(args.seed)
        c = table.sample(rng, args.draws)
        noise = math.sqrt(args.sigma2) * rng.standard_normal(args.draws)
        report["sampled_ks"] = logistic_ks(c + noise)
        report["sampled_draws"] = args.draws
        report["seed"] = args.seed
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        write_summary(args.out, report)
    brief = {k: report[k] for k in ("sigma2", "gamma", "clipped_mass", "convolution_ks", "valid")}
    if "sampled_ks" in report:
        brief["sampled_ks"] = report["sampled_ks"]
    print(json.dumps(brief))
    if not table.valid:
        print("error: correction table is invalid at this bandwidth", file=sys.stderr)
        return EXIT_CORRECTION
    return EXIT_OK


def read_samples(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return header, data


def cmd_diagnose(args):
    cfg = load_config(os.path.join(args.run_dir, "config.cfg"))
    header, data = read_samples(os.path.join(args.run_dir, "samples.csv"))
    sampler = {v: k for k, v in SAMPLE_INDEX_COLUMN.items()}.get(header[0])
    if sampler is None:
        raise ConfigError(f"samples.csv: unrecognized first column {header[0]!r}")
    mixture, _ = load_target(cfg)
    record = RunRecord(sampler=sampler, samples=data[:, 1:], sample_index=data[:, 0].astype(np.int64),
                       temperatures=np.ones(1), seed=cfg["run.seed"])
    burn_in = cfg["run.burn_in"] if args.burn_in is None else args.burn_in
    report = _nan_to_none(summarize(record, mixture, burn_in=burn_in,
                                    radius_multiplier=cfg["diagnostics.radius_multiplier"],
                                    max_lag=args.max_lag))
    if args.out:
        write_summary(args.out, report)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", help="flat dotted-key config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--preset")
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--oracle", choices=["exact", "injected-noise"])
    p.add_argument("--noise-variance", dest="noise_variance", type=float)
    p.add_argument("--R", type=int)
    p.add_argument("--T-max", dest="T_max", type=float)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--test", dest="test")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="ptsghmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="parallel-tempered SGNHT run")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="single-chain SGNHT or classic HMC")
    p.add_argument("which", choices=["hmc", "sgnht"])
    _add_run_flags(p)
    p.add_argument("--n-samples", dest="n_samples", type=int,
                   help="samples to keep (default: match the tempered run's gradient budget)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("correction-table", help="build and report a correction table")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--gamma", default="auto")
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--x-max", dest="x_max", type=float, default=12.0)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=4001)
    p.add_argument("--draws", type=int, default=100000,
                   help="Monte Carlo draws for the sampled KS check (0 to skip)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the full report (grid, density, CDF) as JSON")
    p.set_defaults(func=cmd_correction_table)

    p = sub.add_parser("diagnose", help="recompute diagnostics for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--max-lag", dest="max_lag", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SigmaTooLargeError, CorrectionValidityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRECTION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
