"""Moments of monomials and Gaussian quadratic forms under the factorized proxy.

The proxy distribution keeps one independent Gaussian per (state, time) cell.
Because monomials are sets of distinct states, a product of two monomials at
the same time point touches each cell at most twice, so every expectation
needed by the inference engine is exact in closed form:

    E[prod_j x_j(t)]              = prod_j nu[j, t]
    E[x_j(t)^2]                   = nu[j, t]^2 + gamma[j, t]
    cells at different times      are independent and factorize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite
from .linalg import chol_solve, logdet_from_chol

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass
class FactorizedGaussian:
    """Mean-field proxy: means and variances, both shaped (K states, N times)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if self.means.ndim != 2 or self.means.shape != self.variances.shape:
            raise ValueError("means and variances must share a (K, N) shape")
        if not np.all(self.variances > 0.0):
            raise ValueError("proxy variances must be strictly positive")

    @property
    def num_states(self) -> int:
        return self.means.shape[0]

    @property
    def num_times(self) -> int:
        return self.means.shape[1]

    def copy(self) -> "FactorizedGaussian":
        return FactorizedGaussian(self.means.copy(), self.variances.copy())


def _check_indices(q: FactorizedGaussian, monomial, t: int) -> None:
    if not 0 <= t < q.num_times:
        raise IndexError(f"time index {t} out of range for N={q.num_times}")
    for j in monomial:
        if not 0 <= j < q.num_states:
            raise IndexError(f"state index {j} out of range for K={q.num_states}")


def expected_monomial(q: FactorizedGaussian, monomial, t: int) -> float:
    """E[prod_{j in monomial} x_j(t)]; the empty monomial gives 1."""
    monomial = frozenset(monomial)
    _check_indices(q, monomial, t)
    out = 1.0
    for j in monomial:
        out *= q.means[j, t]
    return float(out)


def expected_monomial_product(q: FactorizedGaussian, m1, t1: int, m2, t2: int) -> float:
    """E[(prod_{j in m1} x_j(t1)) * (prod_{j in m2} x_j(t2))].

    Cells appearing in both monomials (same state, same time) contribute
    their second moment; everything else factorizes into means.
    """
    m1 = frozenset(m1)
    m2 = frozenset(m2)
    _check_indices(q, m1, t1)
    _check_indices(q, m2, t2)
    if t1 != t2:
        return expected_monomial(q, m1, t1) * expected_monomial(q, m2, t2)
    out = 1.0
    for j in m1 & m2:
        out *= q.means[j, t1] ** 2 + q.variances[j, t1]
    for j in m1 ^ m2:
        out *= q.means[j, t1]
    return float(out)


def expected_monomial_path(q: FactorizedGaussian, monomial) -> np.ndarray:
    """Vector of E[monomial at t] over all time points."""
    monomial = frozenset(monomial)
    _check_indices(q, monomial, 0)
    out = np.ones(q.num_times)
    for j in monomial:
        out = out * q.means[j]
    return out


def expected_monomial_product_path(q: FactorizedGaussian, m1, m2) -> np.ndarray:
    """Vector of E[m1(t) * m2(t)] over all time points (same-time products)."""
    m1 = frozenset(m1)
    m2 = frozenset(m2)
    _check_indices(q, m1, 0)
    _check_indices(q, m2, 0)
    out = np.ones(q.num_times)
    for j in m1 & m2:
        out = out * (q.means[j] ** 2 + q.variances[j])
    for j in m1 ^ m2:
        out = out * q.means[j]
    return out


def entropy(q: FactorizedGaussian) -> float:
    """Sum over cells of 0.5 * ln(2 pi e * variance)."""
    return float(0.5 * np.sum(np.log(2.0 * np.pi * np.e * q.variances)))


def expected_gaussian_logdensity(q: FactorizedGaussian, k: int, mean, cov) -> float:
    """E_Q[ln N(x_k | mean, cov)] for the full trajectory of state k.

    Equals -0.5 * (N ln 2pi + logdet cov + d' cov^-1 d + tr(cov^-1 diag(var_k)))
    with d = nu_k - mean.

    Raises:
        NotPositiveDefinite: if cov has no Cholesky factorization.
    """
    if not 0 <= k < q.num_states:
        raise IndexError(f"state index {k} out of range for K={q.num_states}")
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = q.num_times
    if mean.shape != (n,) or cov.shape != (n, n):
        raise ValueError("mean/cov shapes do not match the proxy's time dimension")
    try:
        lower = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc
    dev = q.means[k] - mean
    quad = float(dev @ chol_solve(lower, dev))
    inv_diag = np.diag(chol_solve(lower, np.eye(n)))
    trace = float(inv_diag @ q.variances[k])
    return -0.5 * (n * LOG2PI + logdet_from_chol(lower) + quad + trace)
