"""Figure rendering for fit and replication reports.

Renders to files only (headless backend); every figure has a delimited
counterpart in the report directory, so plots are a convenience view, never
the primary output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_state_trajectories(
    path,
    times,
    observations=None,
    truth=None,
    proxy_mean=None,
    proxy_sd=None,
    reintegrated=None,
):
    """One panel per state: data, truth, proxy mean with a 1-sd band, and the
    trajectory reintegrated under the estimated parameters."""
    times = np.asarray(times, dtype=float)
    num_states = None
    for arr in (observations, truth, proxy_mean, reintegrated):
        if arr is not None:
            num_states = np.asarray(arr).shape[0]
            break
    if num_states is None:
        raise ValueError("nothing to plot")
    fig, axes = plt.subplots(
        num_states, 1, figsize=(7, 2.2 * num_states), sharex=True, squeeze=False
    )
    for k in range(num_states):
        ax = axes[k, 0]
        if proxy_mean is not None and proxy_sd is not None:
            mean = np.asarray(proxy_mean)[k]
            sd = np.asarray(proxy_sd)[k]
            ax.fill_between(times, mean - sd, mean + sd, alpha=0.25, color="tab:blue", lw=0)
        if truth is not None:
            ax.plot(times, np.asarray(truth)[k], color="tab:red", lw=1.5, label="truth")
        if proxy_mean is not None:
            ax.plot(times, np.asarray(proxy_mean)[k], color="tab:blue", lw=1.5, label="proxy mean")
        if reintegrated is not None:
            ax.plot(
                times, np.asarray(reintegrated)[k], color="tab:green", lw=1.2, ls="--",
                label="reintegrated",
            )
        if observations is not None:
            ax.plot(times, np.asarray(observations)[k], "k.", ms=5, label="observations")
        ax.set_ylabel(f"x{k + 1}")
    axes[0, 0].legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_parameter_estimates(path, zeta, sd, truth=None):
    """Estimated rates with one-standard-deviation error bars."""
    zeta = np.asarray(zeta, dtype=float)
    sd = np.asarray(sd, dtype=float)
    idx = np.arange(zeta.size)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.errorbar(idx, zeta, yerr=sd, fmt="o", color="tab:blue", capsize=4, label="estimate")
    if truth is not None:
        ax.plot(idx, np.asarray(truth, dtype=float), "s", color="tab:red", label="truth")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"theta{i + 1}" for i in idx])
    ax.set_ylabel("rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_elbo_trace(path, trace):
    fig, ax = plt.subplots(figsize=(6, 3.0))
    ax.plot(np.arange(1, len(trace) + 1), trace, "-o", ms=3)
    ax.set_xlabel("sweep")
    ax.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
