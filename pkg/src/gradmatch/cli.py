"""Command-line interface: simulate, fit, evaluate, replicate.

Exit codes: 0 success, 2 input error, 3 finished without convergence
(results are still written), 4 numerical failure.  Log verbosity comes from
the GRADMATCH_LOG environment variable (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    NonFiniteEncountered,
    NonFiniteState,
    NotPositiveDefinite,
    OptimFailed,
    Singular,
)
from .experiment import Experiment, load_experiment, run_experiment
from .model_text import ModelFormatError, format_model
from .presets import REPLICATE_NAMES, SIMULATE_PRESETS, replicate_plan, simulate_preset
from .report import (
    evaluation_metrics,
    read_dataset_csv,
    read_json,
    validate_result_document,
    write_dataset_csv,
    write_json,
    write_series_csv,
)
from .simulator import make_dataset

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4

NUMERICAL_ERRORS = (NotPositiveDefinite, Singular, NonFiniteEncountered, NonFiniteState, OptimFailed)


def _configure_logging():
    level = os.environ.get("GRADMATCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)


def _outdir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    if args.preset is not None:
        cfg = simulate_preset(args.preset, noise_variance=args.noise, seed=args.seed)
        model_echo = args.preset
    else:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        exp = load_experiment(raw)
        if exp.sim is None:
            raise ConfigError("simulate: config must carry an inline simulation under 'data'")
        cfg = exp.sim
        model_echo = exp.echo["model"]
    grid, Y, X = make_dataset(cfg)
    out = _outdir(args.out)
    write_dataset_csv(out / "dataset.csv", grid.times, Y)
    write_dataset_csv(out / "truth.csv", grid.times, X)
    write_json(
        out / "sim_meta.json",
        {
            "model": model_echo,
            "model_text": format_model(cfg.system),
            "theta_true": cfg.theta_true.tolist(),
            "x0": cfg.x0.tolist(),
            "times": cfg.sample_times.tolist(),
            "integrator_step": cfg.integrator_step,
            "noise_variance": cfg.noise_variance.tolist(),
            "seed": cfg.seed,
            "versions": {"gradmatch": __version__},
        },
    )
    print(f"wrote {out / 'dataset.csv'} ({len(grid)} rows), truth.csv, sim_meta.json")
    return EXIT_OK


def _write_fit_artifacts(out: Path, outcome, with_figures: bool = True) -> None:
    write_json(out / "result.json", outcome.result_doc)
    write_json(out / "fit_meta.json", {"timings_s": outcome.timings})
    proxy_mean = outcome.result.proxy.means
    proxy_sd = np.sqrt(outcome.result.proxy.variances)
    series = {
        "observations": outcome.observations,
        "proxy_mean": proxy_mean,
        "proxy_lo": proxy_mean - proxy_sd,
        "proxy_hi": proxy_mean + proxy_sd,
        "reintegrated": outcome.reintegrated,
    }
    if outcome.truth is not None:
        series["truth"] = outcome.truth
    write_series_csv(out / "series.csv", outcome.grid.times, series)
    if with_figures:
        from . import plots

        plots.save_state_trajectories(
            out / "trajectories.png",
            outcome.grid.times,
            observations=outcome.observations,
            truth=outcome.truth,
            proxy_mean=proxy_mean,
            proxy_sd=proxy_sd,
            reintegrated=outcome.reintegrated,
        )
        plots.save_parameter_estimates(
            out / "parameters.png",
            outcome.result.theta.mean,
            outcome.result.theta.sd,
        )
        plots.save_elbo_trace(out / "elbo.png", outcome.result.elbo_trace)


def cmd_fit(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        raw["seed"] = args.seed
    exp = load_experiment(raw)
    outcome = run_experiment(exp)
    out = _outdir(args.out)
    _write_fit_artifacts(out, outcome, with_figures=not args.no_figures)
    status = "converged" if outcome.result.converged else "max_iter reached"
    print(
        f"wrote {out / 'result.json'} ({status} after {outcome.result.iterations} sweeps, "
        f"theta = {np.array2string(outcome.result.theta.mean, precision=4)})"
    )
    return EXIT_OK if outcome.result.converged else EXIT_NOT_CONVERGED


def cmd_evaluate(args) -> int:
    result_doc = read_json(args.result)
    validate_result_document(result_doc)
    truth_dir = Path(args.truth)
    if truth_dir.is_dir():
        truth_csv = truth_dir / "truth.csv"
        meta_path = truth_dir / "sim_meta.json"
    else:
        truth_csv = truth_dir
        meta_path = truth_dir.parent / "sim_meta.json"
    times, truth = read_dataset_csv(truth_csv)
    if not meta_path.exists():
        raise ConfigError(f"evaluate: no sim_meta.json next to {truth_csv} (need true parameters)")
    meta = read_json(meta_path)
    proxy = np.asarray(result_doc["proxy"]["means"], dtype=float)
    if proxy.shape != truth.shape:
        raise ConfigError(
            f"evaluate: result has proxy shape {proxy.shape} but truth is {truth.shape}"
        )
    metrics = evaluation_metrics(result_doc, truth, meta["theta_true"])
    out = _outdir(args.out)
    write_json(out / "metrics.json", metrics)
    print(
        f"wrote {out / 'metrics.json'} (spearman {metrics['parameters']['spearman']:.3f}, "
        f"max rel error {max(metrics['parameters']['rel_error']):.3f})"
    )
    return EXIT_OK


def cmd_replicate(args) -> int:
    plan = replicate_plan(args.name)
    out = _outdir(args.out)
    worst = EXIT_OK
    per_seed = []
    for seed in plan.seeds:
        seed_dir = _outdir(out / f"seed-{seed}")
        sim = plan.sim_config(seed)
        grid, Y, X = make_dataset(sim)
        write_dataset_csv(seed_dir / "dataset.csv", grid.times, Y)
        write_dataset_csv(seed_dir / "truth.csv", grid.times, X)
        raw = {
            "model": plan.model_name,
            "data": {
                "preset": plan.model_name,
                "noise_variance": plan.noise_variance,
                "seed": seed,
            },
            "kernel": plan.kernel,
            "kernel_kind": plan.kernel_kind,
            "sigma": list(plan.sigma) if not isinstance(plan.sigma, str) else plan.sigma,
            "gamma": plan.gamma,
            "select_gamma": plan.select_gamma,
            "prior_precision": plan.prior_precision,
            "max_iter": plan.max_iter,
            "seed": seed,
        }
        write_json(seed_dir / "config.json", raw)
        exp = load_experiment(raw)
        outcome = run_experiment(exp)
        _write_fit_artifacts(seed_dir, outcome, with_figures=not args.no_figures)
        metrics = evaluation_metrics(outcome.result_doc, X, plan.theta_true)
        write_json(seed_dir / "metrics.json", metrics)
        per_seed.append((seed, outcome, metrics))
        if not outcome.result.converged:
            worst = max(worst, EXIT_NOT_CONVERGED)
        log.info("%s seed %d: theta=%s", plan.name, seed, outcome.result.theta.mean)

    zetas = np.array([o.result.theta.mean for _, o, _ in per_seed])
    sds = np.array([o.result.theta.sd for _, o, _ in per_seed])
    truth = np.asarray(plan.theta_true, dtype=float)
    mean_zeta = zetas.mean(axis=0)
    mean_sd = sds.mean(axis=0)
    summary = {
        "preset": plan.name,
        "seeds": list(plan.seeds),
        "theta_true": truth.tolist(),
        "theta_mean_over_seeds": mean_zeta.tolist(),
        "theta_sd_mean_over_seeds": mean_sd.tolist(),
        "rel_error_of_mean": (np.abs(mean_zeta - truth) / np.abs(truth)).tolist(),
        "abs_z_of_mean": (np.abs(mean_zeta - truth) / mean_sd).tolist(),
        "spearman": [m["parameters"]["spearman"] for _, _, m in per_seed],
        "rmse_proxy_mean": [m["rmse_proxy_mean"] for _, _, m in per_seed],
        "rmse_reintegrated": [m["rmse_reintegrated"] for _, _, m in per_seed],
        "converged": [bool(o.result.converged) for _, o, _ in per_seed],
    }
    write_json(out / "summary.json", summary)
    print(
        f"wrote {out / 'summary.json'} (mean theta {np.array2string(mean_zeta, precision=4)}, "
        f"true {np.array2string(truth, precision=4)})"
    )
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradmatch",
        description="ODE parameter estimation by variational gradient matching with Gaussian processes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a benchmark dataset (CSV + truth sidecar)")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=SIMULATE_PRESETS, help="built-in benchmark system")
    group.add_argument("--config", help="experiment config with an inline simulation")
    p_sim.add_argument("--noise", type=float, default=None, help="override noise variance")
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run inference from an experiment config")
    p_fit.add_argument("--config", required=True, help="path to the experiment config (JSON)")
    p_fit.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_fit.add_argument("--out", default=".", help="output directory")
    p_fit.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("evaluate", help="compare a result document against ground truth")
    p_eval.add_argument("--result", required=True, help="result.json from fit")
    p_eval.add_argument("--truth", required=True, help="simulate output dir (or truth.csv path)")
    p_eval.add_argument("--out", default=".", help="output directory")
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("replicate", help="run a full benchmark replication")
    p_rep.add_argument("name", choices=REPLICATE_NAMES, help="replication preset")
    p_rep.add_argument("--out", default=".", help="output directory")
    p_rep.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_rep.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INPUT
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
