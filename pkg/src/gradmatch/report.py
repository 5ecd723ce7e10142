"""Result documents, evaluation metrics, and delimited report files.

A result document is a schema-versioned JSON object that is fully
reproducible: rerunning the echoed configuration with the same package build
yields byte-identical output.  Wall-clock timings therefore live in a
separate sidecar file, never in the document itself.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.stats

import gradmatch

SCHEMA = "gradmatch-result/1"


def _spec_to_dict(spec) -> dict:
    out = {"kind": spec.kind, "signal_variance": spec.signal_variance}
    if spec.kind == "rbf":
        out["lengthscale"] = spec.lengthscale
    else:
        out["nn_offset"] = spec.nn_offset
        out["nn_scale"] = spec.nn_scale
    return out


def build_result_document(config_echo: dict, model_text: str, grid, result, reintegrated) -> dict:
    """Assemble the result document for one inference run."""
    theta = result.theta
    return {
        "schema": SCHEMA,
        "config": config_echo,
        "model": model_text,
        "kernel": [_spec_to_dict(s) for s in result.kernel_specs],
        "sigma": [float(v) for v in result.noise_variances],
        "gamma": [float(v) for v in result.gammas],
        "theta": {
            "mean": theta.mean.tolist(),
            "cov": theta.cov.tolist(),
            "sd": theta.sd.tolist(),
        },
        "proxy": {
            "times": grid.times.tolist(),
            "means": result.proxy.means.tolist(),
            "variances": result.proxy.variances.tolist(),
        },
        "elbo_trace": list(result.elbo_trace),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "reintegrated": {
            "times": grid.times.tolist(),
            "states": np.asarray(reintegrated).tolist(),
        },
        "versions": {
            "gradmatch": gradmatch.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


_RESULT_FIELDS = {
    "schema": str,
    "config": dict,
    "model": str,
    "kernel": list,
    "sigma": list,
    "gamma": list,
    "theta": dict,
    "proxy": dict,
    "elbo_trace": list,
    "iterations": int,
    "converged": bool,
    "reintegrated": dict,
    "versions": dict,
}


def validate_result_document(doc: dict) -> None:
    """Check a result document against the pinned schema.

    Raises:
        ConfigError: naming the first offending field.
    """
    from .errors import ConfigError

    if not isinstance(doc, dict):
        raise ConfigError("result document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported result schema {doc.get('schema')!r} (expected {SCHEMA!r})")
    for name, typ in _RESULT_FIELDS.items():
        if name not in doc:
            raise ConfigError(f"result document missing field {name!r}")
        if not isinstance(doc[name], typ):
            raise ConfigError(f"result field {name!r} should be {typ.__name__}")
    for name in ("mean", "cov", "sd"):
        if name not in doc["theta"]:
            raise ConfigError(f"result field 'theta' missing {name!r}")
    for name in ("times", "means", "variances"):
        if name not in doc["proxy"]:
            raise ConfigError(f"result field 'proxy' missing {name!r}")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def rmse_per_state(a, b) -> list:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.sqrt(((a - b) ** 2).mean(axis=1)).tolist()


def spearman_rank_correlation(a, b) -> float:
    """Rank correlation, exact (+-1.0) for perfectly aligned or reversed
    orders.  Uses the squared rank-difference formula without ties and the
    Pearson correlation of average ranks otherwise; a single pair gives 1.0
    by convention."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if n < 2:
        return 1.0
    ra = scipy.stats.rankdata(a)
    rb = scipy.stats.rankdata(b)
    if np.unique(a).size == n and np.unique(b).size == n:
        d = ra - rb
        return float(1.0 - 6.0 * float(d @ d) / (n * (n * n - 1)))
    return float(np.corrcoef(ra, rb)[0, 1])


def parameter_metrics(zeta, theta_true) -> dict:
    zeta = np.asarray(zeta, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if zeta.shape != theta_true.shape:
        raise ValueError(f"shape mismatch {zeta.shape} vs {theta_true.shape}")
    abs_err = np.abs(zeta - theta_true)
    rel_err = abs_err / np.maximum(np.abs(theta_true), 1e-300)
    spearman = spearman_rank_correlation(zeta, theta_true)
    return {
        "estimate": zeta.tolist(),
        "truth": theta_true.tolist(),
        "abs_error": abs_err.tolist(),
        "rel_error": rel_err.tolist(),
        "spearman": spearman,
    }


def evaluation_metrics(result_doc: dict, truth_states, theta_true) -> dict:
    """Per-parameter errors plus trajectory RMSEs of proxy means and the
    reintegrated trajectory against the ground truth."""
    proxy_means = np.asarray(result_doc["proxy"]["means"], dtype=float)
    reintegrated = np.asarray(result_doc["reintegrated"]["states"], dtype=float)
    return {
        "parameters": parameter_metrics(result_doc["theta"]["mean"], theta_true),
        "rmse_proxy_mean": rmse_per_state(proxy_means, truth_states),
        "rmse_reintegrated": rmse_per_state(reintegrated, truth_states),
    }


def write_dataset_csv(path, times, states) -> None:
    """Observations or truth: header t,x1..xK, one row per sample time."""
    states = np.asarray(states, dtype=float)
    lines = ["t," + ",".join(f"x{k + 1}" for k in range(states.shape[0]))]
    for i, t in enumerate(np.asarray(times, dtype=float)):
        lines.append(",".join(repr(float(v)) for v in [t, *states[:, i]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset_csv(path):
    """Parse a dataset CSV back into (times, K x N states)."""
    from .errors import ConfigError

    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if header[0].strip() != "t" or len(header) < 2:
        raise ConfigError(f"{path}: line 1: expected header 't,x1,...', got {lines[0]!r}")
    num_states = len(header) - 1
    for k, name in enumerate(header[1:]):
        if name.strip() != f"x{k + 1}":
            raise ConfigError(f"{path}: line 1: column {k + 2} should be x{k + 1}")
    times = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != num_states + 1:
            raise ConfigError(
                f"{path}: line {lineno}: expected {num_states + 1} columns, got {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
        if not all(np.isfinite(vals)):
            raise ConfigError(f"{path}: line {lineno}: non-finite value")
        times.append(vals[0])
        rows.append(vals[1:])
    return np.asarray(times), np.asarray(rows).T


SERIES_ORDER = ("truth", "observations", "proxy_mean", "proxy_lo", "proxy_hi", "reintegrated")


def write_series_csv(path, times, series_by_name: dict) -> None:
    """Long-format plot data: series,state,t,value (one standard deviation band
    is carried as the proxy_lo / proxy_hi series)."""
    times = np.asarray(times, dtype=float)
    lines = ["series,state,t,value"]
    for name in SERIES_ORDER:
        if name not in series_by_name:
            continue
        states = np.asarray(series_by_name[name], dtype=float)
        for k in range(states.shape[0]):
            for i, t in enumerate(times):
                lines.append(f"{name},{k + 1},{float(t)!r},{float(states[k, i])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
