"""Plain-text format for mass-action systems.

One line per equation, 1-based names, explicit signs:

    dx1 = +theta1*x1 - theta2*x1*x2
    dx2 = -theta3*x2 + theta4*x1*x2

Each term is a theta factor times zero or more distinct state factors joined
with '*'.  Blank lines and '#' comments are ignored.  Equations may appear in
any order but must cover dx1..dxK exactly once.
"""

from __future__ import annotations

import re

from .errors import GradmatchError
from .ode_model import OdeSystem, Term


class ModelFormatError(GradmatchError, ValueError):
    """A model file failed to parse; the message carries the line number."""


_LINE_RE = re.compile(r"^d?x(\d+)\s*=\s*(.+)$")
_FACTOR_RE = re.compile(r"^(theta(\d+)|x(\d+))$")


def _split_terms(rhs: str, lineno: int):
    """Split '+a*b - c*d' into (sign, 'a*b'), (sign, 'c*d') pairs."""
    rhs = rhs.strip()
    if not rhs:
        raise ModelFormatError(f"line {lineno}: empty right-hand side")
    if rhs == "0":
        return []
    tokens = re.split(r"([+-])", rhs)
    tokens = [t.strip() for t in tokens if t.strip()]
    terms = []
    sign = 1
    expect_body = tokens and tokens[0] not in "+-"
    for tok in tokens:
        if tok == "+":
            if expect_body:
                raise ModelFormatError(f"line {lineno}: dangling '+'")
            sign = 1
            expect_body = True
        elif tok == "-":
            if expect_body:
                raise ModelFormatError(f"line {lineno}: dangling '-'")
            sign = -1
            expect_body = True
        else:
            terms.append((sign, tok))
            sign = 1
            expect_body = False
    if expect_body and tokens:
        raise ModelFormatError(f"line {lineno}: trailing sign without a term")
    return terms


def _parse_term(sign: int, body: str, lineno: int):
    param = None
    states = []
    for factor in body.split("*"):
        factor = factor.strip()
        m = _FACTOR_RE.match(factor)
        if m is None:
            raise ModelFormatError(f"line {lineno}: bad factor {factor!r}")
        if m.group(2) is not None:
            if param is not None:
                raise ModelFormatError(f"line {lineno}: two theta factors in one term")
            param = int(m.group(2)) - 1
            if param < 0:
                raise ModelFormatError(f"line {lineno}: theta indices start at 1")
        else:
            j = int(m.group(3)) - 1
            if j < 0:
                raise ModelFormatError(f"line {lineno}: state indices start at 1")
            if j in states:
                raise ModelFormatError(
                    f"line {lineno}: state x{j + 1} repeated within one term "
                    "(each term is a product of distinct states)"
                )
            states.append(j)
    if param is None:
        raise ModelFormatError(f"line {lineno}: every term needs a theta factor")
    return Term(param=param, sign=sign, states=frozenset(states))


def parse_model(text: str) -> OdeSystem:
    """Parse the text format into an :class:`OdeSystem`."""
    equations = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise ModelFormatError(f"line {lineno}: expected 'dx<k> = <terms>', got {raw!r}")
        k = int(m.group(1)) - 1
        if k < 0:
            raise ModelFormatError(f"line {lineno}: state indices start at 1")
        if k in equations:
            raise ModelFormatError(f"line {lineno}: duplicate equation for x{k + 1}")
        terms = [_parse_term(sign, body, lineno) for sign, body in _split_terms(m.group(2), lineno)]
        equations[k] = tuple(terms)
    if not equations:
        raise ModelFormatError("no equations found")
    num_states = len(equations)
    missing = [k + 1 for k in range(num_states) if k not in equations]
    if missing:
        raise ModelFormatError(f"missing equations for states {missing}")
    num_params = 1 + max((t.param for eq in equations.values() for t in eq), default=0)
    for k, eq in equations.items():
        for term in eq:
            for j in term.states:
                if j >= num_states:
                    raise ModelFormatError(
                        f"equation for x{k + 1} references x{j + 1} but only "
                        f"{num_states} equations are defined"
                    )
    return OdeSystem(
        num_states=num_states,
        num_params=num_params,
        equations=tuple(equations[k] for k in range(num_states)),
    )


def format_model(system: OdeSystem) -> str:
    """Serialize a system to the text format.

    Inverse of :func:`parse_model` up to the parameter count, which the
    parser infers from the largest theta index actually used.  Term-less
    equations serialize as 'dx<k> = 0'.
    """
    lines = []
    for k, eq in enumerate(system.equations):
        parts = []
        for term in eq:
            factors = [f"theta{term.param + 1}"] + [f"x{j + 1}" for j in sorted(term.states)]
            parts.append(("+" if term.sign > 0 else "-") + "*".join(factors))
        lines.append(f"dx{k + 1} = " + (" ".join(parts) if parts else "0"))
    return "\n".join(lines) + "\n"
