"""Comparison methods: EDMD with Koopman-logarithm extraction, and gEDMD.

Both pool snapshot pairs (t_k, t_{k+lag}) across all paths of the ensemble;
pairs whose later endpoint is at or past the exit snapshot are excluded,
since these baselines do not model stopping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dictionary import Dictionary
from .errors import EmptyDataError, KoopmanLogError
from .generator import GeneratorMatrix
from .resolvent import PINV_RTOL
from .sde import TrajectoryEnsemble

IMAG_STRIP_TOL = 1e-8


@dataclass(frozen=True)
class KoopmanMatrix:
    """Least-squares Koopman matrix at a fixed lag (column convention)."""

    entries: np.ndarray  # (N, N)
    lag: float  # time units
    dictionary: Dictionary

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (self.dictionary.size, self.dictionary.size):
            raise ValueError("Koopman matrix shape must match dictionary size")
        if not np.all(np.isfinite(entries)):
            raise ValueError("Koopman matrix entries must be finite")
        if self.lag <= 0:
            raise ValueError("lag must be positive")
        object.__setattr__(self, "entries", entries)


def _pair_normal_equations(ensemble: TrajectoryEnsemble, dictionary: Dictionary, lag_steps: int):
    """Accumulate G^T G and G^T H over valid pooled snapshot pairs."""
    m, J, Gp1, _ = ensemble.paths.shape
    G_snap = Gp1 - 1
    if not 1 <= lag_steps <= G_snap:
        raise ValueError(f"lag_steps must be in [1, {G_snap}]")
    N = dictionary.size
    gtg = np.zeros((N, N))
    gth = np.zeros((N, N))
    n_pairs = 0
    ks = np.arange(G_snap - lag_steps + 1)
    for i in range(m):
        feats = dictionary.evaluate(ensemble.paths[i])  # (J, G+1, N)
        # pair (k, k+lag) is valid while the path exits strictly later
        valid = ks[None, :] + lag_steps < ensemble.stop_index[i][:, None]
        rows = feats[:, : G_snap - lag_steps + 1, :][valid]
        shifted = feats[:, lag_steps:, :][valid]
        gtg += rows.T @ rows
        gth += rows.T @ shifted
        n_pairs += rows.shape[0]
    if n_pairs == 0:
        raise EmptyDataError("no snapshot pairs survive the stopping exclusion")
    return gtg, gth, n_pairs


def fit_koopman(
    ensemble: TrajectoryEnsemble, dictionary: Dictionary, lag_steps: int = 1
) -> KoopmanMatrix:
    """Finite-time Koopman matrix K with Z(X(t_{k+lag})) ~ K applied to Z(X(t_k)).

    Solves the pooled least squares through the normal equations
    K = (G^T G)^+ G^T H with the package-wide pseudoinverse cutoff.
    """
    gtg, gth, _ = _pair_normal_equations(ensemble, dictionary, lag_steps)
    K = np.linalg.pinv(gtg, rcond=PINV_RTOL) @ gth
    return KoopmanMatrix(
        entries=K, lag=lag_steps * ensemble.config.dt, dictionary=dictionary
    )


def generator_from_log(koopman: KoopmanMatrix) -> GeneratorMatrix:
    """Principal matrix logarithm scaled by the lag: L = log(K)/t.

    Requires a diagonalizable K with no eigenvalue at zero or on the
    negative real axis (the documented failure mode of this extraction under
    heavy noise). Imaginary residue below 1e-8 relative is stripped;
    anything larger is kept and flagged.
    """
    K = koopman.entries
    eigvals, eigvecs = np.linalg.eig(K)
    if np.any(np.abs(eigvals) <= 1e-12):
        raise KoopmanLogError("Koopman matrix has an eigenvalue at zero")
    on_negative_axis = (np.abs(eigvals.imag) <= 1e-14 * max(1.0, float(np.abs(eigvals).max()))) & (
        eigvals.real < 0
    )
    if np.any(on_negative_axis):
        raise KoopmanLogError(
            "principal logarithm undefined: eigenvalue on the negative real axis "
            f"({eigvals[on_negative_axis][0]:.6g})"
        )
    cond = np.linalg.cond(eigvecs)
    if not np.isfinite(cond) or cond > 1.0 / PINV_RTOL:
        raise KoopmanLogError("Koopman matrix is numerically defective")
    L = (eigvecs @ np.diag(np.log(eigvals.astype(complex))) @ np.linalg.inv(eigvecs)) / koopman.lag
    scale = max(1.0, float(np.abs(L).max()))
    if float(np.abs(L.imag).max()) <= IMAG_STRIP_TOL * scale:
        return GeneratorMatrix(
            entries=L.real,
            dictionary=koopman.dictionary,
            provenance="edmd_klm",
            params={"lag": koopman.lag},
        )
    return GeneratorMatrix(
        entries=L,
        dictionary=koopman.dictionary,
        provenance="edmd_klm",
        params={"lag": koopman.lag},
        complex_flagged=True,
    )


def gedmd_fdm(
    ensemble: TrajectoryEnsemble, dictionary: Dictionary, lag_steps: int = 1
) -> GeneratorMatrix:
    """Finite-difference generator estimate: fit (Z(t+lag) - Z(t))/lag on Z(t).

    Built from the same pooled pairs as ``fit_koopman``; algebraically this
    equals (K - I)/t entrywise.
    """
    gtg, gth, _ = _pair_normal_equations(ensemble, dictionary, lag_steps)
    t = lag_steps * ensemble.config.dt
    K = np.linalg.pinv(gtg, rcond=PINV_RTOL) @ gth
    return GeneratorMatrix(
        entries=(K - np.eye(dictionary.size)) / t,
        dictionary=dictionary,
        provenance="gedmd_fdm",
        params={"lag": t},
    )
