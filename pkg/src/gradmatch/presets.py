"""Benchmark presets: simulation settings and replication plans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ode_model import OdeSystem, builtin_lotka_volterra, builtin_protein_pathway
from .simulator import SimConfig

LV_THETA = (2.0, 1.0, 4.0, 1.0)
LV_X0 = (5.0, 3.0)  # prey starts at 5, predator at 3
LV_TIMES = tuple(np.linspace(0.0, 2.0, 21))
LV_STEP = 0.01

PROTEIN_THETA = (0.07, 0.6, 0.05, 0.3, 0.017)
PROTEIN_X0 = (1.0, 0.0, 1.0, 0.0, 0.0)
PROTEIN_TIMES = (0.0, 1.0, 2.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0)
PROTEIN_STEP = 0.05
PROTEIN_NOISE = 0.01

SIMULATE_PRESETS = ("lotka-volterra", "protein")
REPLICATE_NAMES = ("lv-0.1", "lv-0.25", "protein")


def simulate_preset(name: str, noise_variance: float | None = None, seed: int = 1) -> SimConfig:
    """Simulation settings for a named benchmark system."""
    if name == "lotka-volterra":
        return SimConfig(
            system=builtin_lotka_volterra(),
            theta_true=LV_THETA,
            x0=LV_X0,
            sample_times=LV_TIMES,
            integrator_step=LV_STEP,
            noise_variance=0.1 if noise_variance is None else noise_variance,
            seed=seed,
        )
    if name == "protein":
        return SimConfig(
            system=builtin_protein_pathway(),
            theta_true=PROTEIN_THETA,
            x0=PROTEIN_X0,
            sample_times=PROTEIN_TIMES,
            integrator_step=PROTEIN_STEP,
            noise_variance=PROTEIN_NOISE if noise_variance is None else noise_variance,
            seed=seed,
        )
    raise KeyError(f"unknown preset {name!r}; available: {SIMULATE_PRESETS}")


@dataclass(frozen=True)
class ReplicatePlan:
    """Everything a replication run needs: data settings plus inference settings."""

    name: str
    model_name: str
    noise_variance: float
    seeds: tuple
    kernel: str  # "fit" or "select"
    kernel_kind: str
    sigma: object  # "fit" or per-state variances
    gamma: float
    select_gamma: float | None = None
    prior_precision: float = 0.0
    max_iter: int = 200

    def sim_config(self, seed: int) -> SimConfig:
        return simulate_preset(self.model_name, noise_variance=self.noise_variance, seed=seed)

    @property
    def theta_true(self):
        return LV_THETA if self.model_name == "lotka-volterra" else PROTEIN_THETA


def replicate_plan(name: str) -> ReplicatePlan:
    if name == "lv-0.1":
        return ReplicatePlan(
            name=name,
            model_name="lotka-volterra",
            noise_variance=0.1,
            seeds=(1, 2, 3),
            kernel="fit",
            kernel_kind="rbf",
            sigma="fit",
            gamma=0.3,
        )
    if name == "lv-0.25":
        return ReplicatePlan(
            name=name,
            model_name="lotka-volterra",
            noise_variance=0.25,
            seeds=(1, 2, 3),
            kernel="fit",
            kernel_kind="rbf",
            sigma="fit",
            gamma=0.3,
        )
    if name == "protein":
        return ReplicatePlan(
            name=name,
            model_name="protein",
            noise_variance=PROTEIN_NOISE,
            seeds=(28,),
            kernel="select",
            kernel_kind="neural_net",
            sigma=(PROTEIN_NOISE,) * 5,
            gamma=3e-3,
            select_gamma=1e-2,
        )
    raise KeyError(f"unknown replication preset {name!r}; available: {REPLICATE_NAMES}")
