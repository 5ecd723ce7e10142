"""Per-state Gaussian-process quantities for gradient matching.

For each state this module computes the observation-informed posterior over
the latent trajectory and the linear operators expressing the GP's
conditional distribution over time derivatives given the states:

    mu    = C (C + sigma^2 I)^-1 y          posterior mean
    Sigma = sigma^2 C (C + sigma^2 I)^-1    posterior covariance
    D     = Cd C^-1                         derivative predictor, m = D x
    A     = Cdd - Cd C^-1 dC                conditional derivative covariance
    Lam   = (A + gamma I)^-1                gradient-matching precision

All inversions go through Cholesky solves and results are symmetrized.

Observed data may be centered per state before the GP sees it (the zero-mean
prior fits residuals better that way); the posterior mean is reported back in
original coordinates and the derivative conditional becomes D (x - offset).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .kernels import DerivKernelSet, KernelSpec, TimeGrid, build_deriv_kernels
from .linalg import chol_with_jitter, chol_solve, symmetrize


@dataclass(frozen=True)
class StatePosterior:
    """Observation-informed Gaussian over one state trajectory."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class DerivOps:
    """Derivative-conditional operators for one state.

    The conditional mean of the derivative given states x is
    ``D @ (x - offset)``; ``offset`` is zero unless the observations were
    centered.  ``precision`` is (A + gamma I)^-1.
    """

    D: np.ndarray
    A: np.ndarray
    precision: np.ndarray
    gamma: float
    offset: float = 0.0

    def mean_shift(self) -> np.ndarray:
        """The constant D @ (offset * ones), subtracted from D @ x in the residual."""
        if self.offset == 0.0:
            return np.zeros(self.D.shape[0])
        return self.offset * self.D.sum(axis=1)


@dataclass(frozen=True)
class GpState:
    """Per-state bundle of posterior and derivative operators."""

    posterior: StatePosterior
    deriv: DerivOps


def state_posterior(kernels: DerivKernelSet, noise_variance: float, y) -> StatePosterior:
    """Zero-mean GP posterior over states given noisy observations y."""
    if not noise_variance > 0.0:
        raise ValueError("noise variance must be strictly positive")
    y = np.asarray(y, dtype=float)
    C = kernels.C
    if y.shape != (C.shape[0],):
        raise DimensionMismatch(f"observations have shape {y.shape}, expected ({C.shape[0]},)")
    lower, _ = chol_with_jitter(C + noise_variance * np.eye(C.shape[0]))
    mu = C @ chol_solve(lower, y)
    # C (C + s I)^-1 = ((C + s I)^-1 C)^T since both factors are symmetric.
    cov = symmetrize(noise_variance * chol_solve(lower, C).T)
    return StatePosterior(mean=mu, cov=cov)


def derivative_ops(kernels: DerivKernelSet, gamma: float, offset: float = 0.0) -> DerivOps:
    """Derivative predictor D, conditional covariance A and precision (A + gamma I)^-1.

    Raises:
        NotPositiveDefinite: if A + gamma I fails factorization, which signals
            a gamma too small for the kernel's conditioning.
    """
    if not gamma > 0.0:
        raise ValueError("gamma must be strictly positive")
    n = kernels.C.shape[0]
    lower_c, _ = chol_with_jitter(kernels.C)
    cinv_dc = chol_solve(lower_c, kernels.dC)
    D = cinv_dc.T
    A = symmetrize(kernels.Cdd - kernels.Cd @ cinv_dc)
    try:
        lower_a = np.linalg.cholesky(A + gamma * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"A + gamma I is not positive definite at gamma={gamma:g}"
        ) from exc
    precision = symmetrize(chol_solve(lower_a, np.eye(n)))
    return DerivOps(D=D, A=A, precision=precision, gamma=float(gamma), offset=float(offset))


def build_gp_layer(
    specs,
    grid: TimeGrid,
    noise_variances,
    gammas,
    Y,
    center: bool = True,
) -> list:
    """Assemble per-state posteriors and derivative operators from observations.

    ``specs``, ``noise_variances`` and ``gammas`` are per-state sequences (one
    entry per row of Y).  With ``center`` each state's sample mean is removed
    before the GP posterior is formed and restored in the reported mean.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != len(grid):
        raise DimensionMismatch(f"Y has shape {Y.shape}, expected (K, {len(grid)})")
    num_states = Y.shape[0]
    specs = list(specs)
    noise_variances = [float(v) for v in noise_variances]
    gammas = [float(g) for g in gammas]
    if not len(specs) == len(noise_variances) == len(gammas) == num_states:
        raise DimensionMismatch("per-state inputs must all have length K")

    out = []
    for k in range(num_states):
        kernels = build_deriv_kernels(specs[k], grid)
        offset = float(np.mean(Y[k])) if center else 0.0
        post = state_posterior(kernels, noise_variances[k], Y[k] - offset)
        post = StatePosterior(mean=post.mean + offset, cov=post.cov)
        deriv = derivative_ops(kernels, gammas[k], offset=offset)
        out.append(GpState(posterior=post, deriv=deriv))
    return out
