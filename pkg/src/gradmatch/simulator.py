"""Dataset generation: fixed-step RK4 integration plus seeded Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteState
from .kernels import TimeGrid
from .ode_model import OdeSystem, evaluate


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved simulation settings for one dataset."""

    system: OdeSystem
    theta_true: np.ndarray
    x0: np.ndarray
    sample_times: np.ndarray
    integrator_step: float
    noise_variance: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "theta_true", np.asarray(self.theta_true, dtype=float))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "sample_times", np.asarray(self.sample_times, dtype=float))
        nv = np.asarray(self.noise_variance, dtype=float)
        if nv.ndim == 0:
            nv = np.full(self.system.num_states, float(nv))
        object.__setattr__(self, "noise_variance", nv)
        if self.theta_true.shape != (self.system.num_params,):
            raise DimensionMismatch("theta_true length must match the system's parameters")
        if self.x0.shape != (self.system.num_states,):
            raise DimensionMismatch("x0 length must match the system's states")
        if self.noise_variance.shape != (self.system.num_states,):
            raise DimensionMismatch("noise_variance needs one entry per state")
        if np.any(self.noise_variance < 0.0):
            raise ValueError("noise variances must be nonnegative")
        gaps = np.diff(self.sample_times)
        if self.sample_times.size < 2 or np.any(gaps <= 0.0):
            raise ValueError("sample_times must be strictly increasing with at least two points")
        if not 0.0 < self.integrator_step <= float(np.min(gaps)) + 1e-12:
            raise ValueError("integrator_step must be positive and at most the smallest gap")


def _rk4_step(system: OdeSystem, theta, x, h):
    k1 = evaluate(system, theta, x)
    k2 = evaluate(system, theta, x + 0.5 * h * k1)
    k3 = evaluate(system, theta, x + 0.5 * h * k2)
    k4 = evaluate(system, theta, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(system: OdeSystem, theta, x0, grid: TimeGrid, step: float) -> np.ndarray:
    """Classical 4th-order Runge-Kutta with a fixed internal step.

    Integrates through consecutive grid times, shortening the final sub-step
    of each interval so every sample time is hit exactly.  Returns the K x N
    state matrix (x0 is the state at the first grid time).

    Raises:
        NonFiniteState: at the first sub-step producing a non-finite value.
    """
    if not step > 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (system.num_states,):
        raise DimensionMismatch("x0 length must match the system's states")
    times = grid.times
    out = np.empty((system.num_states, times.size))
    out[:, 0] = x
    for i in range(times.size - 1):
        gap = times[i + 1] - times[i]
        n_full = int(np.floor(gap / step + 1e-12))
        remainder = gap - n_full * step
        sub_steps = [step] * n_full
        if remainder > 1e-12 * max(gap, 1.0):
            sub_steps.append(remainder)
        t_local = times[i]
        for h in sub_steps:
            x = _rk4_step(system, theta, x, h)
            t_local += h
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(f"trajectory became non-finite near t={t_local:g}")
        out[:, i + 1] = x
    return out


def add_noise(X, noise_variance, seed: int) -> np.ndarray:
    """Add i.i.d. Gaussian noise with per-state variance; zero variance rows
    are returned bit-exactly."""
    X = np.asarray(X, dtype=float)
    noise_variance = np.asarray(noise_variance, dtype=float)
    if noise_variance.ndim == 0:
        noise_variance = np.full(X.shape[0], float(noise_variance))
    if noise_variance.shape != (X.shape[0],):
        raise DimensionMismatch("noise_variance needs one entry per state")
    if np.any(noise_variance < 0.0):
        raise ValueError("noise variances must be nonnegative")
    rng = np.random.default_rng(seed)
    Y = X.copy()
    for k in range(X.shape[0]):
        if noise_variance[k] > 0.0:
            Y[k] += rng.normal(0.0, np.sqrt(noise_variance[k]), size=X.shape[1])
    return Y


def make_dataset(cfg: SimConfig):
    """Integrate the system, sample it on the grid and corrupt with noise.

    Returns (grid, Y, X_true) so the ground truth stays available for
    evaluation.
    """
    grid = TimeGrid(cfg.sample_times)
    X = integrate_rk4(cfg.system, cfg.theta_true, cfg.x0, grid, cfg.integrator_step)
    Y = add_noise(X, cfg.noise_variance, cfg.seed)
    return grid, Y, X
