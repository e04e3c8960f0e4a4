"""Monomial observable dictionaries with exact derivatives.

A dictionary is an ordered list of exponent multi-indices in graded
lexicographic order (total degree first, then x1 before x2, ...). The
ordering is fixed because matrix representations depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from ._poly import Poly, poly_add, poly_diff, poly_mul, poly_scale
from .errors import ClosureError, DictionaryError
from .models import SdeModel


@dataclass(frozen=True)
class Dictionary:
    """Ordered family of monomial observables on R^d."""

    dim: int
    exponents: tuple  # tuple of exponent tuples, graded-lex ordered

    def __post_init__(self):
        if len(set(self.exponents)) != len(self.exponents):
            raise DictionaryError("observables must be pairwise distinct")
        if any(len(a) != self.dim for a in self.exponents):
            raise DictionaryError("every exponent tuple must have length dim")

    @property
    def size(self) -> int:
        return len(self.exponents)

    @property
    def max_degree(self) -> int:
        return max(sum(a) for a in self.exponents)

    def index_of(self, exponent) -> int:
        try:
            return self.exponents.index(tuple(exponent))
        except ValueError:
            raise DictionaryError(f"observable {tuple(exponent)} not in dictionary")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Feature matrix z_n(x); maps (..., d) points to (..., N)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DictionaryError(
                f"points have dimension {x.shape[-1]}, dictionary has {self.dim}"
            )
        alphas = np.array(self.exponents)  # (N, d)
        return np.prod(x[..., None, :] ** alphas, axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradients at a single point: (N, d) array of dz_n/dx_i."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.size, self.dim))
        for n, alpha in enumerate(self.exponents):
            for i, ai in enumerate(alpha):
                if ai == 0:
                    continue
                term = float(ai)
                for k, ak in enumerate(alpha):
                    e = ak - 1 if k == i else ak
                    if e:
                        term *= x[k] ** e
                out[n, i] = term
        return out

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessians at a single point: (N, d, d) array of d2 z_n/dx_i dx_j."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.size, self.dim, self.dim))
        for n, alpha in enumerate(self.exponents):
            for i in range(self.dim):
                for j in range(i, self.dim):
                    if i == j:
                        coeff = alpha[i] * (alpha[i] - 1)
                    else:
                        coeff = alpha[i] * alpha[j]
                    if coeff == 0:
                        continue
                    term = float(coeff)
                    for k, ak in enumerate(alpha):
                        e = ak - (2 if k == i == j else (1 if k in (i, j) else 0))
                        if e:
                            term *= x[k] ** e
                    out[n, i, j] = term
                    out[n, j, i] = term
        return out

    def polynomial(self, n: int) -> Poly:
        return {self.exponents[n]: 1.0}


def monomials_up_to_degree(d: int, max_degree: int, include_constant: bool = False) -> Dictionary:
    """All monomial multi-indices with total degree <= max_degree, graded-lex.

    The constant observable (degree 0) is included only on request; for
    d = 1, max_degree = 5 this yields the five monomials x..x^5.
    """
    if d < 1 or max_degree < 1:
        raise DictionaryError("d and max_degree must be >= 1")
    lowest = 0 if include_constant else 1
    alphas = [
        a
        for a in product(range(max_degree + 1), repeat=d)
        if lowest <= sum(a) <= max_degree
    ]
    alphas.sort(key=lambda a: (sum(a), tuple(-ai for ai in a)))
    return Dictionary(dim=d, exponents=tuple(alphas))


def analytic_generator_action(dictionary: Dictionary, model: SdeModel, x: np.ndarray) -> np.ndarray:
    """Exact generator action on every dictionary element at state ``x``.

    Component n is f(x) . grad z_n + 0.5 trace(b b^T hess z_n).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dictionary.dim or dictionary.dim != model.dim:
        raise DictionaryError("state, dictionary, and model dimensions must agree")
    pt = x.reshape(1, -1)
    f = np.asarray(model.drift(pt), dtype=float).reshape(-1)
    b = np.asarray(model.diffusion(pt), dtype=float).reshape(model.dim, model.noise_dim)
    cov = b @ b.T
    grad = dictionary.gradient(x)  # (N, d)
    hess = dictionary.hessian(x)  # (N, d, d)
    return grad @ f + 0.5 * np.einsum("ij,nij->n", cov, hess)


def _generator_polynomial(dictionary: Dictionary, model: SdeModel, n: int) -> Poly:
    """Symbolic generator action on observable n (model must be polynomial)."""
    z = dictionary.polynomial(n)
    out: Poly = {}
    for i in range(model.dim):
        out = poly_add(out, poly_mul(model.drift_poly[i], poly_diff(z, i)))
    for i in range(model.dim):
        for j in range(model.dim):
            cov_ij = model.noise_cov_poly[i][j]
            if cov_ij:
                out = poly_add(out, poly_scale(poly_mul(cov_ij, poly_diff(poly_diff(z, i), j)), 0.5))
    return out


def analytic_generator_matrix(dictionary: Dictionary, model: SdeModel):
    """Exact matrix representation of the generator on the dictionary span.

    Returns a GeneratorMatrix in the operator (column) convention: column n
    holds the dictionary coefficients of the generator applied to z_n.
    Closure is checked by degree counting: if the action produces a monomial
    of higher total degree than the dictionary carries, a ClosureError names
    the offending observable. Lower-degree terms falling outside the
    dictionary (e.g. a constant when none is included) are dropped and
    reported in ``dropped_terms``.
    """
    from .generator import GeneratorMatrix  # local import to avoid a cycle

    if model.drift_poly is None or model.noise_cov_poly is None:
        raise ClosureError(
            None, f"model {model.name!r} carries no polynomial coefficient data"
        )
    if model.dim != dictionary.dim:
        raise DictionaryError("model and dictionary dimensions must agree")
    N = dictionary.size
    index = {a: n for n, a in enumerate(dictionary.exponents)}
    entries = np.zeros((N, N))
    dropped = {}
    max_deg = dictionary.max_degree
    for n in range(N):
        action = _generator_polynomial(dictionary, model, n)
        for alpha, coeff in action.items():
            m = index.get(alpha)
            if m is not None:
                entries[m, n] = coeff
            elif sum(alpha) > max_deg:
                raise ClosureError(
                    dictionary.exponents[n],
                    f"generator action on {dictionary.exponents[n]} produces "
                    f"degree-{sum(alpha)} monomial {alpha} outside the dictionary",
                )
            else:
                dropped.setdefault(dictionary.exponents[n], {})[alpha] = coeff
    return GeneratorMatrix(
        entries=entries,
        dictionary=dictionary,
        provenance="analytic",
        dropped_terms=dropped or None,
    )
