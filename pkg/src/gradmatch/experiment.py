"""Config-driven experiment orchestration shared by the CLI commands.

An experiment configuration is a JSON object; :func:`load_experiment`
validates it into an :class:`Experiment` with every default resolved, and
:func:`run_experiment` executes data loading or simulation, inference,
reintegration, and document building.  The resolved configuration is echoed
into the result document so a run can be reproduced from its own output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kernels import KernelSpec, TimeGrid
from .model_text import format_model, parse_model
from .ode_model import BUILTIN_SYSTEMS, OdeSystem
from .presets import SIMULATE_PRESETS, simulate_preset
from .report import build_result_document, read_dataset_csv
from .simulator import SimConfig, integrate_rk4, make_dataset
from .vi_engine import InferenceConfig, run_inference

INFERENCE_DEFAULTS = {
    "kernel": "fit",
    "kernel_kind": "rbf",
    "sigma": "fit",
    "gamma": 1e-2,
    "select_gamma": None,
    "prior_precision": 0.0,
    "tol_theta": 1e-6,
    "tol_elbo": 1e-8,
    "max_iter": 200,
    "seed": 0,
    "center": True,
    "e_step": "block",
    "anneal_decades": 5,
    "anneal_max_sweeps": 40,
}


@dataclass
class Experiment:
    system: OdeSystem
    inference: InferenceConfig
    echo: dict
    data_path: str | None = None
    sim: SimConfig | None = None
    reintegrate_step: float | None = None


def _parse_spec(obj, where: str) -> KernelSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{where}: kernel spec must be an object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "rbf":
            return KernelSpec("rbf", float(obj["signal_variance"]), lengthscale=float(obj["lengthscale"]))
        if kind == "neural_net":
            return KernelSpec(
                "neural_net",
                float(obj["signal_variance"]),
                nn_offset=float(obj["nn_offset"]),
                nn_scale=float(obj["nn_scale"]),
            )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing kernel field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown kernel kind {kind!r}")


def _spec_echo(spec: KernelSpec) -> dict:
    out = {"kind": spec.kind, "signal_variance": spec.signal_variance}
    if spec.kind == "rbf":
        out["lengthscale"] = spec.lengthscale
    else:
        out["nn_offset"] = spec.nn_offset
        out["nn_scale"] = spec.nn_scale
    return out


def _resolve_model(value) -> tuple:
    if isinstance(value, str):
        if value in BUILTIN_SYSTEMS:
            return BUILTIN_SYSTEMS[value](), value
        raise ConfigError(
            f"model: unknown builtin {value!r} (available: {sorted(BUILTIN_SYSTEMS)}); "
            "use {'path': ...} or {'text': ...} for custom systems"
        )
    if isinstance(value, dict) and "path" in value:
        from pathlib import Path

        path = Path(value["path"])
        if not path.exists():
            raise ConfigError(f"model: file not found: {path}")
        system = parse_model(path.read_text(encoding="utf-8"))
        return system, {"path": str(value["path"])}
    if isinstance(value, dict) and "text" in value:
        system = parse_model(value["text"])
        return system, {"text": value["text"]}
    raise ConfigError("model: expected a builtin name, {'path': ...} or {'text': ...}")


def _resolve_sim(value, system: OdeSystem, model_echo) -> tuple:
    """Inline simulation spec -> (SimConfig, echo)."""
    if "preset" in value:
        name = value["preset"]
        if name not in SIMULATE_PRESETS:
            raise ConfigError(f"data.preset: unknown preset {name!r} (available: {SIMULATE_PRESETS})")
        cfg = simulate_preset(
            name,
            noise_variance=value.get("noise_variance"),
            seed=int(value.get("seed", 1)),
        )
        echo = {
            "preset": name,
            "noise_variance": cfg.noise_variance.tolist(),
            "seed": cfg.seed,
        }
        return cfg, echo
    try:
        times = value["times"]
        if isinstance(times, dict):
            times = np.arange(
                float(times["start"]),
                float(times["stop"]) + 1e-12,
                float(times["step"]),
            ).tolist()
        cfg = SimConfig(
            system=system,
            theta_true=value["theta_true"],
            x0=value["x0"],
            sample_times=times,
            integrator_step=float(value["integrator_step"]),
            noise_variance=value["noise_variance"],
            seed=int(value.get("seed", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"data: missing simulation field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data: {exc}") from exc
    echo = {
        "theta_true": cfg.theta_true.tolist(),
        "x0": cfg.x0.tolist(),
        "times": cfg.sample_times.tolist(),
        "integrator_step": cfg.integrator_step,
        "noise_variance": cfg.noise_variance.tolist(),
        "seed": cfg.seed,
    }
    return cfg, echo


def load_experiment(raw: dict) -> Experiment:
    """Validate a configuration dict and resolve every default."""
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a JSON object")
    known = {"model", "data", "reintegrate_step", *INFERENCE_DEFAULTS}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
    if "model" not in raw:
        raise ConfigError("config needs a 'model' field")
    if "data" not in raw:
        raise ConfigError("config needs a 'data' field (path or inline simulation)")

    system, model_echo = _resolve_model(raw["model"])

    data = raw["data"]
    data_path = None
    sim = None
    if isinstance(data, str):
        data_path = data
        data_echo = data
    elif isinstance(data, dict):
        sim, data_echo = _resolve_sim(data, system, model_echo)
    else:
        raise ConfigError("data: expected a CSV path or an inline simulation object")

    settings = dict(INFERENCE_DEFAULTS)
    for key in INFERENCE_DEFAULTS:
        if key in raw:
            settings[key] = raw[key]

    kernel = settings["kernel"]
    kernel_echo = kernel
    if isinstance(kernel, str):
        if kernel not in ("fit", "select"):
            raise ConfigError('kernel: expected "fit", "select", a spec object, or a list')
    elif isinstance(kernel, dict):
        kernel = _parse_spec(kernel, "kernel")
        kernel_echo = _spec_echo(kernel)
    elif isinstance(kernel, (list, tuple)):
        kernel = [_parse_spec(s, f"kernel[{i}]") for i, s in enumerate(kernel)]
        kernel_echo = [_spec_echo(s) for s in kernel]
    else:
        raise ConfigError('kernel: expected "fit", "select", a spec object, or a list')

    sigma = settings["sigma"]
    if isinstance(sigma, str) and sigma != "fit":
        raise ConfigError('sigma: expected "fit", a number, or a per-state list')
    if isinstance(sigma, (list, tuple)):
        sigma = [float(v) for v in sigma]
    elif not isinstance(sigma, str):
        sigma = float(sigma)

    gamma = settings["gamma"]
    gamma = [float(v) for v in gamma] if isinstance(gamma, (list, tuple)) else float(gamma)

    inference = InferenceConfig(
        kernel=kernel,
        kernel_kind=str(settings["kernel_kind"]),
        sigma=sigma,
        gamma=gamma,
        prior_precision=float(settings["prior_precision"]),
        tol_theta=float(settings["tol_theta"]),
        tol_elbo=float(settings["tol_elbo"]),
        max_iter=int(settings["max_iter"]),
        seed=int(settings["seed"]),
        center=bool(settings["center"]),
        e_step=str(settings["e_step"]),
        anneal_decades=int(settings["anneal_decades"]),
        anneal_max_sweeps=int(settings["anneal_max_sweeps"]),
        select_gamma=None if settings["select_gamma"] is None else float(settings["select_gamma"]),
    )

    echo = {
        "model": model_echo,
        "data": data_echo,
        "kernel": kernel_echo,
        "kernel_kind": inference.kernel_kind,
        "sigma": sigma,
        "gamma": gamma,
        "select_gamma": inference.select_gamma,
        "prior_precision": inference.prior_precision,
        "tol_theta": inference.tol_theta,
        "tol_elbo": inference.tol_elbo,
        "max_iter": inference.max_iter,
        "seed": inference.seed,
        "center": inference.center,
        "e_step": inference.e_step,
        "anneal_decades": inference.anneal_decades,
        "anneal_max_sweeps": inference.anneal_max_sweeps,
        "reintegrate_step": raw.get("reintegrate_step"),
    }
    return Experiment(
        system=system,
        inference=inference,
        echo=echo,
        data_path=data_path,
        sim=sim,
        reintegrate_step=raw.get("reintegrate_step"),
    )


@dataclass
class ExperimentOutput:
    grid: TimeGrid
    observations: np.ndarray
    truth: np.ndarray | None
    result: object
    result_doc: dict
    reintegrated: np.ndarray
    timings: dict = field(default_factory=dict)


def _load_data(exp: Experiment):
    if exp.sim is not None:
        grid, Y, X = make_dataset(exp.sim)
        return grid, Y, X
    times, states = read_dataset_csv(exp.data_path)
    try:
        grid = TimeGrid(times)
    except ValueError as exc:
        raise ConfigError(f"{exp.data_path}: {exc}") from exc
    if states.shape[0] != exp.system.num_states:
        raise ConfigError(
            f"{exp.data_path}: data has K={states.shape[0]} states but the model "
            f"expects K={exp.system.num_states}"
        )
    return grid, states, None


def run_experiment(exp: Experiment) -> ExperimentOutput:
    timings = {}
    t0 = time.perf_counter()
    grid, Y, truth = _load_data(exp)
    timings["data_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = run_inference(Y, grid, exp.system, exp.inference)
    timings["inference_s"] = time.perf_counter() - t0

    step = exp.reintegrate_step
    if step is None:
        step = float(np.min(np.diff(grid.times))) / 20.0
    reintegrated = integrate_rk4(
        exp.system, result.theta.mean, result.proxy.means[:, 0], grid, step
    )

    doc = build_result_document(exp.echo, format_model(exp.system), grid, result, reintegrated)
    return ExperimentOutput(
        grid=grid,
        observations=Y,
        truth=truth,
        result=result,
        result_doc=doc,
        reintegrated=reintegrated,
        timings=timings,
    )
