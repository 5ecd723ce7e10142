"""Dense linear-algebra helpers: symmetrization and jitter-stabilized Cholesky."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite

MAX_JITTER_ESCALATIONS = 8


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (a + a.T) / 2 to kill round-off asymmetry."""
    return 0.5 * (a + a.T)


def chol_with_jitter(a: np.ndarray, base_jitter: float = 0.0):
    """Cholesky-factor ``a + jitter * I``, escalating the jitter tenfold on failure.

    The first attempt uses ``base_jitter`` as-is; after that the jitter is
    multiplied by 10 at most :data:`MAX_JITTER_ESCALATIONS` times (a zero base
    jitter escalates from 1e-12 times the mean diagonal).  Returns the
    lower-triangular factor together with the jitter that was actually added.

    Raises:
        NotPositiveDefinite: if every attempt fails.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    scale = float(np.mean(np.diag(a))) if n else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jitter = float(base_jitter)
    eye = np.eye(n)
    for _ in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            if jitter > 0.0:
                lower = np.linalg.cholesky(a + jitter * eye)
            else:
                lower = np.linalg.cholesky(a)
            return lower, jitter
        except np.linalg.LinAlgError:
            jitter = 10.0 * jitter if jitter > 0.0 else 1e-12 * scale
    raise NotPositiveDefinite(
        f"Cholesky failed even with jitter {jitter / 10.0:.3e} on the diagonal"
    )


def chol_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` given the lower Cholesky factor of A."""
    return scipy.linalg.cho_solve((lower, True), b)


def solve_spd(a: np.ndarray, b: np.ndarray, base_jitter: float = 0.0) -> np.ndarray:
    lower, _ = chol_with_jitter(a, base_jitter)
    return chol_solve(lower, b)


def inv_spd(a: np.ndarray, base_jitter: float = 0.0) -> np.ndarray:
    lower, _ = chol_with_jitter(a, base_jitter)
    return symmetrize(chol_solve(lower, np.eye(a.shape[0])))


def logdet_from_chol(lower: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(lower))))
