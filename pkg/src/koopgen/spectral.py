"""Spectral extraction, eigenvalue matching, and the MAE metric."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dictionary import Dictionary
from .errors import NumericalError
from .generator import GeneratorMatrix

RESIDUAL_TOL = 1e-8


def _sort_spectrum(values: np.ndarray) -> np.ndarray:
    """Canonical order: real part descending, imaginary part ascending."""
    return np.lexsort((values.imag, -values.real))


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray  # (N,) complex, canonically sorted
    eigenvectors: np.ndarray  # (N, N) complex; column i pairs with eigenvalue i
    source: Optional[GeneratorMatrix] = None
    matching: Optional[tuple] = None  # ((true_idx, est_idx), ...)
    mae: Optional[float] = None

    @property
    def size(self) -> int:
        return self.eigenvalues.size


def eigendecompose(matrix: GeneratorMatrix) -> SpectrumResult:
    """Full eigendecomposition with a reproducible ordering.

    Eigenvector columns are unit-norm dictionary-coefficient vectors with the
    phase fixed so the largest-magnitude component is real positive.
    """
    if not np.all(np.isfinite(matrix.entries.view(float))):
        raise NumericalError("matrix has non-finite entries")
    try:
        values, vectors = np.linalg.eig(matrix.entries)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = _sort_spectrum(values)
    values = values[order]
    vectors = vectors[:, order]
    vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
    lead = np.argmax(np.abs(vectors), axis=0)
    phase = vectors[lead, np.arange(vectors.shape[1])]
    phase = np.where(np.abs(phase) == 0, 1.0, phase / np.abs(phase))
    vectors = vectors / phase[None, :]
    return SpectrumResult(eigenvalues=values, eigenvectors=vectors, source=matrix)


def match_and_mae(
    true_eigs: Sequence[complex],
    est_eigs: Sequence[complex],
    n_match: Optional[int] = None,
    assignment: str = "greedy",
):
    """Match true eigenvalues to estimates and average the moduli of error.

    True eigenvalues are taken in the canonical sort order; each picks the
    nearest unmatched estimate (greedy without replacement). The
    ``assignment="optimal"`` variant solves the corresponding minimum-cost
    assignment instead. Estimates beyond the matched set are spurious and
    excluded from the MAE.
    """
    true_arr = np.asarray(true_eigs, dtype=complex)
    est_arr = np.asarray(est_eigs, dtype=complex)
    if n_match is None:
        n_match = true_arr.size
    if not 1 <= n_match <= min(true_arr.size, est_arr.size):
        raise ValueError("n_match must be within both spectra")
    true_sorted = true_arr[_sort_spectrum(true_arr)][:n_match]
    if assignment == "greedy":
        used = np.zeros(est_arr.size, dtype=bool)
        pairs = []
        total = 0.0
        for ti, alpha in enumerate(true_sorted):
            dist = np.abs(est_arr - alpha)
            dist[used] = np.inf
            j = int(np.argmin(dist))
            used[j] = True
            pairs.append((ti, j))
            total += float(dist[j])
        return tuple(pairs), total / n_match
    if assignment == "optimal":
        cost = np.abs(est_arr[None, :] - true_sorted[:, None])
        rows, cols = linear_sum_assignment(cost)
        pairs = tuple((int(r), int(c)) for r, c in zip(rows, cols))
        return pairs, float(cost[rows, cols].mean())
    raise ValueError(f"unknown assignment {assignment!r}")


def spectrum_mae(
    matrix: GeneratorMatrix,
    true_eigs: Sequence[complex],
    n_match: Optional[int] = None,
    assignment: str = "greedy",
) -> SpectrumResult:
    """Eigendecompose and attach the matching/MAE against a reference list."""
    result = eigendecompose(matrix)
    matching, mae = match_and_mae(true_eigs, result.eigenvalues, n_match, assignment)
    return SpectrumResult(
        eigenvalues=result.eigenvalues,
        eigenvectors=result.eigenvectors,
        source=matrix,
        matching=matching,
        mae=mae,
    )


def eigenfunction_values(
    result: SpectrumResult, dictionary: Dictionary, points: np.ndarray
) -> np.ndarray:
    """Approximate eigenfunctions at given states: entry [p, i] = Z(x_p) . phi_i."""
    feats = dictionary.evaluate(np.atleast_2d(np.asarray(points, dtype=float)))
    if feats.shape[-1] != result.eigenvectors.shape[0]:
        raise ValueError("dictionary size does not match eigenvector dimension")
    return feats @ result.eigenvectors


def spectrum_to_csv(
    path,
    result: SpectrumResult,
    true_eigs: Sequence[complex],
    metadata: Optional[dict] = None,
    trial: Optional[int] = None,
    append: bool = False,
) -> None:
    """Matched-pair report: one row per matched eigenvalue pair."""
    meta = metadata or {}
    mode = "a" if append else "w"
    write_header = not append
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            for key, value in meta.items():
                fh.write(f"# {key}: {value}\n")
            writer.writerow(
                ["trial", "true_re", "true_im", "est_re", "est_im", "abs_err"]
            )
        true_arr = np.asarray(true_eigs, dtype=complex)
        true_sorted = true_arr[_sort_spectrum(true_arr)]
        for ti, ej in result.matching or ():
            alpha = true_sorted[ti]
            est = result.eigenvalues[ej]
            writer.writerow(
                [
                    trial if trial is not None else 0,
                    format(alpha.real, ".17g"),
                    format(alpha.imag, ".17g"),
                    format(est.real, ".17g"),
                    format(est.imag, ".17g"),
                    format(abs(est - alpha), ".17g"),
                ]
            )
