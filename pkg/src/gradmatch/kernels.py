"""Covariance kernels, derivative covariance blocks, and marginal-likelihood fitting.

Two kernel families are supported: the radial basis function kernel and the
arcsine neural-network kernel (the standard smooth, positive-definite choice
for sigmoid-shaped covariance structure).  Besides the plain covariance
matrix C on a time grid, gradient matching needs the cross-covariances
between a process and its time derivative and the derivative
auto-covariance.  For a kernel k(s, t) these are

    Cd[i, j]  = dk/ds      (t_i, t_j)    cov(xdot(t_i), x(t_j))
    dC[i, j]  = dk/dt      (t_i, t_j)    cov(x(t_i), xdot(t_j))
    Cdd[i, j] = d2k/ds dt  (t_i, t_j)    cov(xdot(t_i), xdot(t_j))

all of which are computed analytically below.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from .errors import OptimFailed
from .linalg import chol_with_jitter, chol_solve, logdet_from_chol, symmetrize

KERNEL_KINDS = ("rbf", "neural_net")

SIGNAL_VARIANCE_FLOOR = 1e-6
NOISE_FLOOR = 1e-8
PARAM_CEILING = 1e6

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    kind "rbf":
        k(s, t) = signal_variance * exp(-(s - t)^2 / (2 * lengthscale^2))
    kind "neural_net":
        k(s, t) = signal_variance * asin((a + b*s*t) /
                  sqrt((a + b*s^2 + 1) * (a + b*t^2 + 1)))
        with a = nn_offset and b = nn_scale.

    Only the fields belonging to ``kind`` are meaningful; the others stay None.
    """

    kind: str
    signal_variance: float
    lengthscale: float | None = None
    nn_offset: float | None = None
    nn_scale: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if not (self.signal_variance > 0.0):
            raise ValueError("signal_variance must be strictly positive")
        if self.kind == "rbf":
            if self.lengthscale is None or not (self.lengthscale > 0.0):
                raise ValueError("rbf kernel needs a strictly positive lengthscale")
        else:
            if self.nn_offset is None or not (self.nn_offset > 0.0):
                raise ValueError("neural_net kernel needs a strictly positive nn_offset")
            if self.nn_scale is None or not (self.nn_scale > 0.0):
                raise ValueError("neural_net kernel needs a strictly positive nn_scale")


def rbf(signal_variance: float, lengthscale: float) -> KernelSpec:
    return KernelSpec("rbf", signal_variance, lengthscale=lengthscale)


def neural_net(signal_variance: float, offset: float, scale: float) -> KernelSpec:
    return KernelSpec("neural_net", signal_variance, nn_offset=offset, nn_scale=scale)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times, at least two of them."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if not np.all(np.isfinite(t)):
            raise ValueError("time grid contains non-finite values")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("time grid must be strictly increasing")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])


def _rbf_blocks(sv, ell, s, t):
    d = s - t
    k = sv * np.exp(-0.5 * (d / ell) ** 2)
    dk_ds = -k * d / ell**2
    d2k = k * (1.0 / ell**2 - d**2 / ell**4)
    return k, dk_ds, d2k


def _nn_blocks(sv, a, b, s, t):
    # g = n / sqrt(p q); k = sv * asin(g).  Cauchy-Schwarz plus the "+1" terms
    # keeps |g| < 1, so asin and the 1 - g^2 powers below stay well defined.
    n = a + b * s * t
    p = a + b * s * s + 1.0
    q = a + b * t * t + 1.0
    rpq = np.sqrt(p * q)
    g = n / rpq
    gs = b * t / rpq - n * b * s / (p * rpq)
    gt = b * s / rpq - n * b * t / (q * rpq)
    gst = (
        b / rpq
        - b * b * t * t / (q * rpq)
        - b * b * s * s / (p * rpq)
        + b * b * s * t * n / (p * q * rpq)
    )
    w = 1.0 - g * g
    rw = np.sqrt(w)
    k = sv * np.arcsin(np.clip(g, -1.0, 1.0))
    dk_ds = sv * gs / rw
    d2k = sv * (gst / rw + gs * gt * g / (w * rw))
    return k, dk_ds, d2k


def _blocks(spec: KernelSpec, s, t):
    if spec.kind == "rbf":
        return _rbf_blocks(spec.signal_variance, spec.lengthscale, s, t)
    return _nn_blocks(spec.signal_variance, spec.nn_offset, spec.nn_scale, s, t)


def kernel_eval(spec: KernelSpec, s: float, t: float) -> float:
    """Evaluate k(s, t) for the given spec."""
    k, _, _ = _blocks(spec, np.float64(s), np.float64(t))
    return float(k)


def kernel_derivatives(spec: KernelSpec, s: float, t: float):
    """Return (k, dk/ds, dk/dt, d2k/dsdt) at the point (s, t).

    dk/dt is obtained from dk/ds via the kernel symmetry k(s, t) = k(t, s).
    """
    k, dk_ds, d2k = _blocks(spec, np.float64(s), np.float64(t))
    _, dk_ds_swapped, _ = _blocks(spec, np.float64(t), np.float64(s))
    return float(k), float(dk_ds), float(dk_ds_swapped), float(d2k)


@dataclass(frozen=True)
class DerivKernelSet:
    """Covariance blocks between a GP and its time derivative on one grid.

    ``C`` already includes ``jitter`` on its diagonal, which is the amount
    that was actually required for a successful Cholesky factorization.
    """

    C: np.ndarray
    Cd: np.ndarray
    dC: np.ndarray
    Cdd: np.ndarray
    jitter: float


def default_base_jitter(C: np.ndarray) -> float:
    """Scale-aware stabilization: 1e-6 times the mean diagonal of C."""
    return 1e-6 * float(np.mean(np.diag(C)))


def build_deriv_kernels(
    spec: KernelSpec, grid: TimeGrid, base_jitter: float | None = None
) -> DerivKernelSet:
    """Assemble C, Cd, dC and Cdd on the grid from analytic kernel derivatives.

    The jitter added to C's diagonal starts at ``base_jitter`` (default:
    :func:`default_base_jitter`) and escalates tenfold, at most eight times,
    until C admits a Cholesky factorization.

    Raises:
        NotPositiveDefinite: if C cannot be factorized even after escalation.
    """
    t = grid.times
    s_col = t[:, None]
    t_row = t[None, :]
    k, dk_ds, d2k = _blocks(spec, s_col, t_row)
    C = symmetrize(k)
    Cd = dk_ds
    # dk/dt(s, t) = dk/ds(t, s) for any symmetric kernel.
    dC = Cd.T.copy()
    Cdd = symmetrize(d2k)
    if base_jitter is None:
        base_jitter = default_base_jitter(C)
    _, jitter = chol_with_jitter(C, float(base_jitter))
    C = C + jitter * np.eye(len(grid))
    return DerivKernelSet(C=C, Cd=Cd, dC=dC, Cdd=Cdd, jitter=jitter)


def log_marginal_likelihood(
    spec: KernelSpec, grid: TimeGrid, y: np.ndarray, noise_variance: float
) -> float:
    """ln N(y | 0, C + noise_variance * I) for the zero-mean GP model."""
    y = np.asarray(y, dtype=float)
    t = grid.times
    k, _, _ = _blocks(spec, t[:, None], t[None, :])
    cov = symmetrize(k) + noise_variance * np.eye(t.size)
    lower, _ = chol_with_jitter(cov)
    alpha = chol_solve(lower, y)
    return float(-0.5 * y @ alpha - 0.5 * logdet_from_chol(lower) - 0.5 * t.size * LOG2PI)


def _pack(spec: KernelSpec) -> np.ndarray:
    if spec.kind == "rbf":
        return np.log([spec.signal_variance, spec.lengthscale])
    return np.log([spec.signal_variance, spec.nn_offset, spec.nn_scale])


def _unpack(kind: str, x: np.ndarray) -> KernelSpec:
    vals = np.exp(x)
    if kind == "rbf":
        return rbf(float(vals[0]), float(vals[1]))
    return neural_net(float(vals[0]), float(vals[1]), float(vals[2]))


def fit_hyperparameters(
    kind: str,
    grid: TimeGrid,
    observations: np.ndarray,
    init: KernelSpec,
    init_noise: float,
    fit_noise: bool,
    seed: int = 0,
    restarts: int = 5,
    max_iter: int = 200,
    lengthscale_bounds: tuple | None = None,
    signal_variance_floor: float = SIGNAL_VARIANCE_FLOOR,
) -> tuple[KernelSpec, float]:
    """Maximize the GP log marginal likelihood over kernel (and noise) parameters.

    Runs L-BFGS-B in log-parameter space from ``restarts`` starting points:
    the given init plus seeded random perturbations of it.  Deterministic for
    a fixed seed.  When ``fit_noise`` is false the returned noise variance is
    ``init_noise`` unchanged.  ``lengthscale_bounds`` restricts the rbf
    lengthscale search window (callers doing derivative estimation want the
    lengthscale to resolve between-sample dynamics, which plain marginal
    likelihood does not reward on short noisy series).  A caller that knows
    the noise level can likewise raise ``signal_variance_floor`` to the
    moment-based bound var(y) - noise so that low-amplitude states keep a
    nonzero process instead of collapsing to a constant.

    Raises:
        OptimFailed: if no start yields a finite optimum at least as good as
            the init.
    """
    if init.kind != kind:
        raise ValueError(f"init spec has kind {init.kind!r}, expected {kind!r}")
    y = np.asarray(observations, dtype=float)
    if y.shape != grid.times.shape:
        raise ValueError("observations must match the grid length")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations contain non-finite values")
    sv_floor = max(float(signal_variance_floor), SIGNAL_VARIANCE_FLOOR)

    x0 = _pack(init)
    if fit_noise:
        x0 = np.append(x0, np.log(max(init_noise, NOISE_FLOOR)))
    bounds = [(np.log(SIGNAL_VARIANCE_FLOOR), np.log(PARAM_CEILING))] * len(_pack(init))
    bounds[0] = (np.log(sv_floor), np.log(PARAM_CEILING))
    x0[0] = np.clip(x0[0], bounds[0][0], bounds[0][1])
    if kind == "rbf" and lengthscale_bounds is not None:
        lo, hi = lengthscale_bounds
        if not 0.0 < lo < hi:
            raise ValueError("lengthscale_bounds must satisfy 0 < lo < hi")
        bounds[1] = (np.log(lo), np.log(hi))
        x0[1] = np.clip(x0[1], bounds[1][0], bounds[1][1])
    if fit_noise:
        bounds.append((np.log(NOISE_FLOOR), np.log(PARAM_CEILING)))

    def objective(x: np.ndarray) -> float:
        spec = _unpack(kind, x[:-1] if fit_noise else x)
        noise = float(np.exp(x[-1])) if fit_noise else init_noise
        try:
            with np.errstate(all="ignore"):
                val = -log_marginal_likelihood(spec, grid, y, noise)
        except Exception:
            return 1e25
        return val if np.isfinite(val) else 1e25

    init_val = objective(x0)
    rng = np.random.default_rng(seed)
    starts = [x0]
    for _ in range(max(restarts - 1, 0)):
        jittered = x0 + rng.normal(0.0, np.log(10.0) / 2.0, size=x0.size)
        low = np.array([b[0] for b in bounds])
        high = np.array([b[1] for b in bounds])
        starts.append(np.clip(jittered, low, high))

    best_val = np.inf
    best_x = None
    for start in starts:
        res = scipy.optimize.minimize(
            objective,
            start,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val = float(res.fun)
            best_x = np.asarray(res.x)

    if best_x is None or best_val > init_val + 1e-9 * max(1.0, abs(init_val)):
        raise OptimFailed("no optimizer start improved on the initial hyperparameters")

    spec = _unpack(kind, best_x[:-1] if fit_noise else best_x)
    noise = float(np.exp(best_x[-1])) if fit_noise else float(init_noise)
    return spec, noise
