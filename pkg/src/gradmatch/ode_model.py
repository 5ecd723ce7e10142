"""Mass-action ODE systems as signed parameter-monomial terms.

A system with K states and M rate parameters stores, per state equation, a
tuple of terms (parameter index, sign, monomial).  A monomial is a set of
distinct state indices whose value is the product of those states (the empty
set evaluates to 1).  The right-hand side is therefore linear in the
parameters and affine in any single state coordinate, which the inference
engine exploits throughout.

State and parameter indices are 0-based internally; the text format in
:mod:`gradmatch.model_text` uses the 1-based names x1, theta1, ...
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

# A monomial is a frozenset of 0-based state indices.
Monomial = frozenset


@dataclass(frozen=True)
class Term:
    """One signed rate term: sign * theta[param] * prod(x[j] for j in states)."""

    param: int
    sign: int
    states: frozenset

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))
        if self.sign not in (1, -1):
            raise ValueError("term sign must be +1 or -1")


@dataclass(frozen=True)
class OdeSystem:
    num_states: int
    num_params: int
    equations: tuple

    def __post_init__(self):
        eqs = tuple(tuple(eq) for eq in self.equations)
        object.__setattr__(self, "equations", eqs)
        if self.num_states < 1 or self.num_params < 1:
            raise ValueError("system needs at least one state and one parameter")
        if len(eqs) != self.num_states:
            raise ValueError("need exactly one equation per state")
        for k, eq in enumerate(eqs):
            for term in eq:
                if not isinstance(term, Term):
                    raise TypeError("equations must contain Term instances")
                if not 0 <= term.param < self.num_params:
                    raise ValueError(f"equation {k}: parameter index {term.param} out of range")
                for j in term.states:
                    if not 0 <= j < self.num_states:
                        raise ValueError(f"equation {k}: state index {j} out of range")


def _check_theta(system: OdeSystem, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (system.num_params,):
        raise DimensionMismatch(
            f"theta has shape {theta.shape}, expected ({system.num_params},)"
        )
    return theta


def _check_state(system: OdeSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (system.num_states,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({system.num_states},)")
    return x


def evaluate(system: OdeSystem, theta, x) -> np.ndarray:
    """Right-hand side f(x, theta), one entry per state equation."""
    theta = _check_theta(system, theta)
    x = _check_state(system, x)
    out = np.zeros(system.num_states)
    for k, eq in enumerate(system.equations):
        acc = 0.0
        for term in eq:
            acc += term.sign * theta[term.param] * np.prod(x[sorted(term.states)])
        out[k] = acc
    return out


def design_matrix(system: OdeSystem, X, k: int) -> np.ndarray:
    """N x M matrix G_k with f_k(X, theta) = G_k @ theta, exactly.

    Row t collects the signed monomial values at time t in the column of the
    owning parameter (summing when a parameter owns several terms).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != system.num_states:
        raise DimensionMismatch(
            f"state matrix has shape {X.shape}, expected ({system.num_states}, N)"
        )
    if not 0 <= k < system.num_states:
        raise DimensionMismatch(f"state index {k} out of range")
    n = X.shape[1]
    G = np.zeros((n, system.num_params))
    for term in system.equations[k]:
        idx = sorted(term.states)
        vals = np.prod(X[idx, :], axis=0) if idx else np.ones(n)
        G[:, term.param] += term.sign * vals
    return G


def affine_in_state(system: OdeSystem, theta, x_at_t, u: int):
    """Split every equation as f_k = slope_k * x_u + intercept_k at one time point.

    slope_k sums the terms containing state u with x_u divided out;
    intercept_k collects the remaining terms.  Exact for this multilinear
    family.  Returns (slope, intercept), both length K.
    """
    theta = _check_theta(system, theta)
    x = _check_state(system, x_at_t)
    if not 0 <= u < system.num_states:
        raise DimensionMismatch(f"state index {u} out of range")
    slope = np.zeros(system.num_states)
    intercept = np.zeros(system.num_states)
    for k, eq in enumerate(system.equations):
        for term in eq:
            coef = term.sign * theta[term.param]
            if u in term.states:
                rest = sorted(term.states - {u})
                slope[k] += coef * (np.prod(x[rest]) if rest else 1.0)
            else:
                idx = sorted(term.states)
                intercept[k] += coef * (np.prod(x[idx]) if idx else 1.0)
    return slope, intercept


def builtin_lotka_volterra() -> OdeSystem:
    """Two-species predator-prey system.

    dx1/dt = +theta1*x1 - theta2*x1*x2
    dx2/dt = -theta3*x2 + theta4*x1*x2
    """
    return OdeSystem(
        num_states=2,
        num_params=4,
        equations=(
            (Term(0, 1, frozenset({0})), Term(1, -1, frozenset({0, 1}))),
            (Term(2, -1, frozenset({1})), Term(3, 1, frozenset({0, 1}))),
        ),
    )


def builtin_protein_pathway() -> OdeSystem:
    """Five-state protein signalling cascade in transformed coordinates.

    dx1/dt = -theta1*x1 - theta2*x1*x3 + theta3*x4
    dx2/dt = +theta1*x1
    dx3/dt = -theta2*x1*x3 + theta3*x4 + theta5*x5
    dx4/dt = +theta2*x1*x3 - theta3*x4 - theta4*x4
    dx5/dt = +theta4*x4 - theta5*x5

    The fifth state is the saturating fraction of the phosphorylated product,
    so the whole right-hand side is multilinear; the saturation constant is
    absorbed by the transformation and is not a parameter of this system.
    """
    return OdeSystem(
        num_states=5,
        num_params=5,
        equations=(
            (
                Term(0, -1, frozenset({0})),
                Term(1, -1, frozenset({0, 2})),
                Term(2, 1, frozenset({3})),
            ),
            (Term(0, 1, frozenset({0})),),
            (
                Term(1, -1, frozenset({0, 2})),
                Term(2, 1, frozenset({3})),
                Term(4, 1, frozenset({4})),
            ),
            (
                Term(1, 1, frozenset({0, 2})),
                Term(2, -1, frozenset({3})),
                Term(3, -1, frozenset({3})),
            ),
            (Term(3, 1, frozenset({3})), Term(4, -1, frozenset({4}))),
        ),
    )


BUILTIN_SYSTEMS = {
    "lotka-volterra": builtin_lotka_volterra,
    "protein": builtin_protein_pathway,
}
