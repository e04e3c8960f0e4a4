"""SDE model definitions and the bounded domains they are observed on.

Drift and diffusion are vectorized callables: ``drift(states)`` maps an
``(n, d)`` batch of states to ``(n, d)`` drift vectors and
``diffusion(states)`` to ``(n, d, l)`` noise-loading matrices. Models that
are polynomial additionally carry exact coefficient data (``drift_poly``,
``noise_cov_poly``) so the analytic-generator oracle can be built for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._poly import Poly


@dataclass(frozen=True)
class SdeModel:
    """Autonomous SDE ``dX = f(X) dt + b(X) dW`` on R^d with l-dim noise."""

    name: str
    dim: int
    noise_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    # Exact per-component polynomials for f_i, and for the noise covariance
    # B = b b^T as a d x d grid of polynomials; None when not polynomial.
    drift_poly: Optional[tuple] = None
    noise_cov_poly: Optional[tuple] = None
    # Reference eigenvalues of the generator, when known analytically.
    analytic_spectrum: Optional[tuple] = None
    # Optional closed-form generator action: (grad_fn, hess_fn, x) -> float.
    analytic_generator: Optional[Callable] = None

    def __post_init__(self):
        if self.dim < 1 or self.noise_dim < 1:
            raise ValueError("dim and noise_dim must be positive")


@dataclass(frozen=True)
class Domain:
    """Bounded state space: a centered ball or an axis-aligned box.

    A point is interior iff strictly inside; points on the boundary are
    detected to within 1e-12.
    """

    kind: str  # "ball" | "box"
    radius: Optional[float] = None
    bounds: Optional[tuple] = None  # ((lo, hi), ...) per dimension

    BOUNDARY_TOL = 1e-12

    def __post_init__(self):
        if self.kind == "ball":
            if self.radius is None or self.radius <= 0:
                raise ValueError("ball domain needs a positive radius")
        elif self.kind == "box":
            if not self.bounds:
                raise ValueError("box domain needs per-dimension bounds")
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if any(lo >= hi for lo, hi in bounds):
                raise ValueError("box bounds must satisfy lo < hi")
            object.__setattr__(self, "bounds", bounds)
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def ball(cls, radius: float) -> "Domain":
        return cls(kind="ball", radius=float(radius))

    @classmethod
    def box(cls, bounds: Sequence[Sequence[float]]) -> "Domain":
        return cls(kind="box", bounds=tuple(tuple(b) for b in bounds))

    def is_interior(self, x: np.ndarray) -> np.ndarray:
        """Strict membership test, vectorized over leading axes of ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.linalg.norm(x, axis=-1) < self.radius
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((x > lo) & (x < hi), axis=-1)

    def on_boundary(self, x: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.abs(np.linalg.norm(x, axis=-1) - self.radius) <= tol * max(1.0, self.radius)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        inside = np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)
        touches = np.any((np.abs(x - lo) <= tol) | (np.abs(x - hi) <= tol), axis=-1)
        return inside & touches

    def boundary_crossing(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Intersection of segment p -> q with the boundary, p interior.

        For a ball this solves |p + s (q - p)| = R for s in [0, 1] and takes
        the admissible root; for a box it takes the earliest face crossing.
        If roundoff leaves no root in range (q barely outside), q is clamped
        onto the boundary instead.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "ball":
            d = q - p
            a = float(np.dot(d, d))
            if a == 0.0:
                return self._clamp(q)
            b = 2.0 * float(np.dot(p, d))
            c = float(np.dot(p, p)) - self.radius**2
            disc = b * b - 4.0 * a * c
            if disc < 0.0:
                return self._clamp(q)
            s = (-b + math.sqrt(disc)) / (2.0 * a)
            if not 0.0 <= s <= 1.0:
                return self._clamp(q)
            return p + s * d
        # box: earliest parameter at which some face is reached
        s_min = np.inf
        for axis, (lo, hi) in enumerate(self.bounds):
            dq = q[axis] - p[axis]
            if dq == 0.0:
                continue
            for bound in (lo, hi):
                s = (bound - p[axis]) / dq
                if 0.0 <= s < s_min:
                    cand = p + s * (q - p)
                    # the first true crossing leaves every other coordinate inside
                    others = [
                        self.bounds[k][0] - 1e-12 <= cand[k] <= self.bounds[k][1] + 1e-12
                        for k in range(len(self.bounds))
                    ]
                    if all(others) and (q[axis] - bound) * (bound - p[axis]) >= 0.0:
                        s_min = s
        if not np.isfinite(s_min):
            return self._clamp(q)
        return p + s_min * (q - p)

    def _clamp(self, q: np.ndarray) -> np.ndarray:
        if self.kind == "ball":
            norm = np.linalg.norm(q)
            if norm == 0.0:
                out = np.zeros_like(q)
                out[0] = self.radius
                return out
            return q * (self.radius / norm)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(q, lo, hi)


def generator_action(model: SdeModel, grad: np.ndarray, hess: np.ndarray, x: np.ndarray) -> float:
    """Apply the generator of ``model`` to an observable given its derivatives.

    Computes ``f(x) . grad + 0.5 * trace(b b^T hess)`` at a single state.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    f = np.asarray(model.drift(x), dtype=float).reshape(-1)
    b = np.asarray(model.diffusion(x), dtype=float).reshape(model.dim, model.noise_dim)
    cov = b @ b.T
    return float(f @ np.asarray(grad, dtype=float) + 0.5 * np.sum(cov * np.asarray(hess, dtype=float)))


# ---------------------------------------------------------------------------
# Model factories
# ---------------------------------------------------------------------------

def make_ou(mu: float = -0.5, sigma: float = 0.02, n_reference_eigs: int = 5) -> SdeModel:
    """1-D Ornstein-Uhlenbeck process ``dX = mu X dt + sigma dW`` (mu < 0).

    The generator spectrum is the ladder ``n * mu``; the first
    ``n_reference_eigs`` rungs are stored as the analytic reference.
    """
    if mu >= 0:
        raise ValueError("OU factory expects mu < 0")

    def drift(x):
        return mu * x

    def diffusion(x):
        return np.full(x.shape[:-1] + (1, 1), sigma)

    return SdeModel(
        name="ou",
        dim=1,
        noise_dim=1,
        drift=drift,
        diffusion=diffusion,
        drift_poly=({(1,): mu},),
        noise_cov_poly=(({(0,): sigma**2},),),
        analytic_spectrum=tuple(complex(n * mu) for n in range(1, n_reference_eigs + 1)),
    )


# Reference principal pair for the stochastic Lotka-Volterra benchmark
# parameters below (linearization at the coexistence point gives
# -0.025080 +/- 0.863539i; the published reference value is used).
LV_PRINCIPAL_PAIR = (complex(-0.02509, 0.86363), complex(-0.02509, -0.86363))


def make_lotka_volterra(
    a1: float = 1.0,
    b1: float = 0.5,
    c1: float = 0.01,
    a2: float = 0.75,
    b2: float = 0.25,
    c2: float = 0.01,
    sigma1: float = 0.05,
    sigma2: float = 0.05,
) -> SdeModel:
    """Stochastic predator-prey system with multiplicative noise.

    dX1 = (a1 - b1 X2 - c1 X1) X1 dt + sigma1 X1 dW1
    dX2 = (-a2 + b2 X1 - c2 X2) X2 dt + sigma2 X2 dW2
    """

    def drift(x):
        x1, x2 = x[..., 0], x[..., 1]
        f1 = (a1 - b1 * x2 - c1 * x1) * x1
        f2 = (-a2 + b2 * x1 - c2 * x2) * x2
        return np.stack([f1, f2], axis=-1)

    def diffusion(x):
        n = x.shape[:-1]
        b = np.zeros(n + (2, 2))
        b[..., 0, 0] = sigma1 * x[..., 0]
        b[..., 1, 1] = sigma2 * x[..., 1]
        return b

    drift_poly = (
        {(1, 0): a1, (1, 1): -b1, (2, 0): -c1},
        {(0, 1): -a2, (1, 1): b2, (0, 2): -c2},
    )
    noise_cov_poly = (
        ({(2, 0): sigma1**2}, {}),
        ({}, {(0, 2): sigma2**2}),
    )
    spectrum = LV_PRINCIPAL_PAIR if (a1, b1, c1, a2, b2, c2, sigma1, sigma2) == (
        1.0, 0.5, 0.01, 0.75, 0.25, 0.01, 0.05, 0.05) else None
    return SdeModel(
        name="lotka_volterra",
        dim=2,
        noise_dim=2,
        drift=drift,
        diffusion=diffusion,
        drift_poly=drift_poly,
        noise_cov_poly=noise_cov_poly,
        analytic_spectrum=spectrum,
    )


# ---------------------------------------------------------------------------
# OU closed-form conditional moments (oracle for estimator tests)
# ---------------------------------------------------------------------------

def gaussian_moment(mean, var, n: int):
    """E[Z^n] for Z ~ N(mean, var), vectorized over mean/var arrays."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    total = np.zeros(np.broadcast(mean, var).shape)
    for k in range(n // 2 + 1):
        # (2k-1)!! pairings of 2k noise factors
        double_fact = math.prod(range(1, 2 * k, 2)) if k > 0 else 1
        total = total + math.comb(n, 2 * k) * double_fact * var**k * mean ** (n - 2 * k)
    return total


def ou_conditional_moment(mu: float, sigma: float, x0, t, n: int):
    """E[X_t^n | X_0 = x0] for the OU process, vectorized over x0 and t."""
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    mean = x0 * np.exp(mu * t)
    var = sigma**2 * (1.0 - np.exp(2.0 * mu * t)) / (-2.0 * mu)
    return gaussian_moment(mean, var, n)
