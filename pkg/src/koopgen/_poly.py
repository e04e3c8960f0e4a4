"""Sparse multivariate polynomials over exponent multi-indices.

A polynomial is a plain dict mapping exponent tuples to float coefficients,
e.g. ``{(1, 0): 1.0, (1, 1): -0.5}`` for ``x1 - 0.5*x1*x2``. Only the tiny
amount of exact arithmetic needed for the analytic-generator oracle lives
here (add, scale, multiply, differentiate); anything numeric goes through
the dictionary module instead.
"""

from __future__ import annotations

Poly = dict  # {exponent tuple: coefficient}


def poly_add(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for a, c in q.items():
        out[a] = out.get(a, 0.0) + c
    return {a: c for a, c in out.items() if c != 0.0}


def poly_scale(p: Poly, s: float) -> Poly:
    if s == 0.0:
        return {}
    return {a: s * c for a, c in p.items()}


def poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = tuple(ai + bi for ai, bi in zip(a, b))
            out[key] = out.get(key, 0.0) + ca * cb
    return {a: c for a, c in out.items() if c != 0.0}


def poly_diff(p: Poly, axis: int) -> Poly:
    out: Poly = {}
    for a, c in p.items():
        if a[axis] == 0:
            continue
        b = list(a)
        b[axis] -= 1
        out[tuple(b)] = out.get(tuple(b), 0.0) + c * a[axis]
    return out


def monomial(exponents, coeff: float = 1.0) -> Poly:
    return {tuple(int(e) for e in exponents): float(coeff)}


def poly_degree(p: Poly) -> int:
    """Total degree; -1 for the zero polynomial."""
    return max((sum(a) for a in p), default=-1)


def poly_eval(p: Poly, x) -> float:
    total = 0.0
    for a, c in p.items():
        term = c
        for xi, ai in zip(x, a):
            if ai:
                term *= xi**ai
        total += term
    return total
