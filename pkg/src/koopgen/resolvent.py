"""Resolvent-type generator estimation (RT-EDMD).

The estimator builds, for every initial state, the exponentially weighted
trapezoidal integral of the mean observables along stopped sample paths.
This approximates the action of lambda^2 R(lambda) on the dictionary, where
R is the Laplace transform of the transition semigroup truncated to the
observation horizon. Least squares against the initial-state features then
yields a matrix surrogate of the bounded operator lambda^2 R - lambda I,
and solving the resolvent relation L = lambda I - lambda^2 Q^{-1} for the
fitted Q = lambda^2 R recovers the generator itself, removing the O(1/lambda)
surrogate bias. The raw surrogate is available via ``invert_resolvent=False``.

A modified estimator for low sampling rates rebuilds the same quantities
from an integral at a small parameter mu and transfers them to lambda via
the first resolvent identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dictionary import Dictionary
from .errors import ConditioningError, RankDeficientError
from .generator import GeneratorMatrix
from .sde import SimConfig, TrajectoryEnsemble

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class RtConfig:
    """Parameters of the resolvent-type estimator.

    ``lam`` is the resolvent parameter (1/time); ``mu`` is the small
    parameter used only by the modified estimator and must satisfy
    0 < mu < lam. ``horizon`` is the data horizon T. With
    ``invert_resolvent`` (the default) the fitted surrogate of
    lam^2 R - lam I is mapped back to the generator exactly; disabling it
    returns the raw surrogate, whose spectrum carries the O(1/lam) bias.
    """

    lam: float
    horizon: float
    mu: Optional[float] = None
    use_modification: bool = False
    invert_resolvent: bool = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.use_modification:
            if self.mu is None or not 0 < self.mu < self.lam:
                raise ValueError("modified estimator needs 0 < mu < lam")

    @property
    def horizon_tail_weight(self) -> float:
        """Diagnostic e^{-lam T}: size of the neglected Laplace tail."""
        return float(np.exp(-self.lam * self.horizon))


def mean_observables(ensemble: TrajectoryEnsemble, dictionary: Dictionary) -> np.ndarray:
    """Empirical mean of each observable over sample paths.

    Entry [i, k, n] is the average over the J paths of z_n evaluated on the
    stopped path value at snapshot k. Evaluation runs per initial state to
    bound memory.
    """
    m, J, Gp1, _ = ensemble.paths.shape
    out = np.empty((m, Gp1, dictionary.size))
    for i in range(m):
        out[i] = dictionary.evaluate(ensemble.paths[i]).mean(axis=0)
    return out


def filtered_mean_observables(ensemble: TrajectoryEnsemble, dictionary: Dictionary) -> np.ndarray:
    """Conditional mean over paths that have not yet exited.

    At each snapshot only still-interior paths contribute; once no path
    survives, the last available conditional mean is carried forward. This
    is the naive alternative to stopped-path averaging and is provided for
    the ablation study.
    """
    m, J, Gp1, _ = ensemble.paths.shape
    out = np.empty((m, Gp1, dictionary.size))
    ks = np.arange(Gp1)
    for i in range(m):
        feats = dictionary.evaluate(ensemble.paths[i])  # (J, G+1, N)
        aliv = ensemble.stop_index[i][:, None] > ks[None, :]  # (J, G+1)
        aliv[:, 0] = True
        counts = aliv.sum(axis=0)  # (G+1,)
        sums = np.einsum("jk,jkn->kn", aliv.astype(float), feats)
        mean = np.full((Gp1, dictionary.size), np.nan)
        nz = counts > 0
        mean[nz] = sums[nz] / counts[nz, None]
        for k in range(1, Gp1):  # carry last alive mean forward
            if not nz[k]:
                mean[k] = mean[k - 1]
        out[i] = mean
    return out


def integrand_matrix(means: np.ndarray, lam: float, config: SimConfig) -> np.ndarray:
    """Weight the mean observables by lam^2 e^{-lam t_k}."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    t = config.times[: means.shape[1]]
    return lam**2 * np.exp(-lam * t)[None, :, None] * means


def trapezoid_integrate(samples: np.ndarray, dt: float) -> np.ndarray:
    """Composite trapezoid: dt (s_0/2 + s_1 + ... + s_{G-1} + s_G/2)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] < 2:
        raise ValueError("need at least two samples")
    return np.trapezoid(samples, dx=dt, axis=-1)


def _integral_matrix(means: np.ndarray, lam: float, config: SimConfig) -> np.ndarray:
    weighted = integrand_matrix(means, lam, config)  # (m, G+1, N)
    return trapezoid_integrate(np.moveaxis(weighted, 1, 2), config.dt)  # (m, N)


def build_matrices(ensemble: TrajectoryEnsemble, dictionary: Dictionary, rt: RtConfig):
    """Assemble feature and label stacks (X, I_lam, Y_lam) from an ensemble."""
    means = mean_observables(ensemble, dictionary)
    X = dictionary.evaluate(ensemble.initial_states)
    I_lam = _integral_matrix(means, rt.lam, ensemble.config)
    return X, I_lam, I_lam - rt.lam * X


def _pinv_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Least-squares solve pinv(A) @ B with the package-wide SVD cutoff."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise RankDeficientError("feature matrix has rank zero")
    keep = s > PINV_RTOL * s[0]
    if not keep.any():
        raise RankDeficientError("all singular values below tolerance")
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return vt.T @ (inv[:, None] * (u.T @ B))


def fit_generator(
    X: np.ndarray,
    Y_lam: np.ndarray,
    dictionary: Dictionary,
    provenance: str = "rt_edmd",
    params: Optional[dict] = None,
) -> GeneratorMatrix:
    """Least-squares projection: minimize ||Y_lam - X A||_F over A.

    Returns the minimizer computed through an SVD pseudoinverse with
    singular values below 1e-10 of the largest treated as zero. No bias
    correction is applied here; see ``resolvent_to_generator``.
    """
    X = np.asarray(X, dtype=float)
    Y_lam = np.asarray(Y_lam, dtype=float)
    if X.shape != Y_lam.shape:
        raise ValueError("X and Y_lam must have equal shapes")
    if X.shape[0] < X.shape[1]:
        warnings.warn(
            f"fewer rows ({X.shape[0]}) than observables ({X.shape[1]}); "
            "returning the minimum-norm solution",
            stacklevel=2,
        )
    if not np.any(X):
        raise RankDeficientError("feature matrix is identically zero")
    A = _pinv_solve(X, Y_lam)
    return GeneratorMatrix(
        entries=A, dictionary=dictionary, provenance=provenance, params=params
    )


def resolvent_to_generator(surrogate: np.ndarray, lam: float) -> np.ndarray:
    """Solve the resolvent relation for the generator.

    The fitted surrogate G approximates lam^2 R(lam) - lam I, so
    Q = lam I + G approximates lam^2 R(lam) and the generator follows as
    L = lam I - lam^2 Q^{-1}; on exact data this removes the O(1/lam)
    surrogate bias entirely.
    """
    G = np.asarray(surrogate, dtype=float)
    N = G.shape[0]
    Q = lam * np.eye(N) + G
    cond = np.linalg.cond(Q)
    if not np.isfinite(cond) or cond > 1.0 / PINV_RTOL:
        raise ConditioningError("fitted resolvent matrix is numerically singular", cond)
    return lam * np.eye(N) - lam**2 * np.linalg.inv(Q)


def generator_from_means(
    means: np.ndarray,
    initial_states: np.ndarray,
    dictionary: Dictionary,
    rt: RtConfig,
    config: SimConfig,
    provenance: str = "rt_edmd",
) -> GeneratorMatrix:
    """Full RT pipeline from a (m, G+1, N) mean-observable array.

    Shared by the data-driven path (empirical means), oracle substitutions
    (exact conditional means), and the filtered-resolvent ablation.
    """
    X = dictionary.evaluate(np.atleast_2d(initial_states))
    I_lam = _integral_matrix(means, rt.lam, config)
    params = {"lam": rt.lam, "horizon": rt.horizon, "inverted": int(rt.invert_resolvent)}
    fitted = fit_generator(X, I_lam - rt.lam * X, dictionary, provenance, params)
    if not rt.invert_resolvent:
        return fitted
    corrected = resolvent_to_generator(fitted.entries, rt.lam)
    return GeneratorMatrix(
        entries=corrected, dictionary=dictionary, provenance=provenance, params=params
    )


def rt_generator(
    ensemble: TrajectoryEnsemble, dictionary: Dictionary, rt: RtConfig
) -> GeneratorMatrix:
    """Estimate the generator from a trajectory ensemble (RT-EDMD)."""
    if rt.use_modification:
        return rt_generator_modified(ensemble, dictionary, rt)
    means = mean_observables(ensemble, dictionary)
    return generator_from_means(
        means, ensemble.initial_states, dictionary, rt, ensemble.config, "rt_edmd"
    )


def rt_generator_modified(
    ensemble: TrajectoryEnsemble, dictionary: Dictionary, rt: RtConfig
) -> GeneratorMatrix:
    """Low-sampling-rate variant built on the first resolvent identity.

    The integral matrix is computed at the small parameter mu (where the
    trapezoid remains accurate on a coarse grid) and transferred to lam
    through A = ((lam - mu)/mu^2) I_mu + X and B = (lam/mu) I_mu - lam X,
    giving the surrogate A^+ B for lam^2 R(lam) - lam I. The same resolvent
    inversion as in the direct estimator then recovers the generator.
    """
    if rt.mu is None or not 0 < rt.mu < rt.lam:
        raise ValueError("modified estimator needs 0 < mu < lam")
    means = mean_observables(ensemble, dictionary)
    X = dictionary.evaluate(ensemble.initial_states)
    I_mu = _integral_matrix(means, rt.mu, ensemble.config)
    lam, mu = rt.lam, rt.mu
    A = (lam - mu) / mu**2 * I_mu + X
    B = (lam / mu) * I_mu - lam * X
    svals = np.linalg.svd(A, compute_uv=False)
    if svals[0] <= 0 or svals[-1] <= PINV_RTOL * svals[0]:
        raise ConditioningError(
            "modified-estimator regressor is rank deficient",
            float(svals[0] / max(svals[-1], np.finfo(float).tiny)),
        )
    params = {
        "lam": lam,
        "mu": mu,
        "horizon": rt.horizon,
        "inverted": int(rt.invert_resolvent),
    }
    L_mod = _pinv_solve(A, B)
    if rt.invert_resolvent:
        L_mod = resolvent_to_generator(L_mod, lam)
    return GeneratorMatrix(
        entries=L_mod,
        dictionary=dictionary,
        provenance="rt_edmd_modified",
        params=params,
    )
