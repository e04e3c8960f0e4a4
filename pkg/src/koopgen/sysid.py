"""Drift/diffusion recovery from a learned generator and path reconstruction.

Identification reads the generator matrix columns: the action on the
coordinate observable x_i is the drift component f_i (second derivatives
vanish), and the action on x_i x_j minus the drift cross terms isolates the
noise covariance entry (b b^T)_ij. Both come out as coefficient vectors
over the dictionary. Reconstruction simulates the identified model with the
same per-path noise substreams as the reference simulation, so pathwise
errors compare like with like.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._poly import Poly, poly_add, poly_mul, poly_scale
from .dictionary import Dictionary
from .errors import DictionaryError
from .generator import GeneratorMatrix
from .models import Domain, SdeModel
from .sde import SimConfig, TrajectoryEnsemble, simulate_paths

NEGATIVE_EIG_TOL = -1e-6


@dataclass(frozen=True)
class IdentifiedModel:
    """Polynomial drift/diffusion coefficients over a dictionary."""

    drift_coeffs: np.ndarray  # (d, N)
    diffusion_coeffs: np.ndarray  # (d, d, N), symmetric in (i, j)
    dictionary: Dictionary
    source: Optional[GeneratorMatrix] = None
    # largest |coefficient| discarded because the product f_i x_j left the span
    projection_residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.drift_coeffs.shape[0]


def _unit_exponent(d: int, i: int, order: int = 1):
    e = [0] * d
    e[i] = order
    return tuple(e)


def recover_drift(matrix: GeneratorMatrix) -> np.ndarray:
    """Drift coefficients over the dictionary, one row per state dimension.

    Row i is the generator-matrix column for the coordinate observable x_i.
    """
    dictionary = matrix.dictionary
    d = dictionary.dim
    out = np.empty((d, dictionary.size))
    for i in range(d):
        try:
            n = dictionary.index_of(_unit_exponent(d, i))
        except DictionaryError:
            raise DictionaryError(
                f"dictionary lacks the degree-1 observable for dimension {i + 1}"
            )
        out[i] = np.real(matrix.entries[:, n])
    return out


def recover_diffusion(matrix: GeneratorMatrix, drift_coeffs: np.ndarray):
    """Noise covariance coefficients (b b^T)_ij over the dictionary.

    Subtracts the polynomial products f_i x_j + f_j x_i from the generator
    action on x_i x_j. Product terms that leave the dictionary span are
    dropped; the largest dropped coefficient is returned as a diagnostic and
    triggers a warning when it is not numerically negligible.
    """
    dictionary = matrix.dictionary
    d = dictionary.dim
    N = dictionary.size
    index = {a: n for n, a in enumerate(dictionary.exponents)}
    out = np.zeros((d, d, N))
    residual = 0.0
    for i in range(d):
        for j in range(i, d):
            phi = tuple(
                (2 if k == i else 0) if i == j else (1 if k in (i, j) else 0)
                for k in range(d)
            )
            if phi not in index:
                raise DictionaryError(
                    f"dictionary lacks the quadratic observable {phi}"
                )
            coeffs: Poly = {
                a: float(np.real(matrix.entries[m, index[phi]]))
                for m, a in enumerate(dictionary.exponents)
                if matrix.entries[m, index[phi]] != 0
            }
            # generator action on x_i x_j carries f_i x_j + f_j x_i
            # (which is 2 f_i x_i on the diagonal)
            for a, b in ((i, j), (j, i)):
                f_poly: Poly = {
                    alpha: float(drift_coeffs[a, n])
                    for n, alpha in enumerate(dictionary.exponents)
                    if drift_coeffs[a, n] != 0.0
                }
                prod = poly_mul(f_poly, {_unit_exponent(d, b): 1.0})
                coeffs = poly_add(coeffs, poly_scale(prod, -1.0))
            vec = np.zeros(N)
            for alpha, c in coeffs.items():
                n = index.get(alpha)
                if n is None:
                    residual = max(residual, abs(c))
                else:
                    vec[n] = c
            out[i, j] = vec
            out[j, i] = vec
    if residual > 1e-10:
        warnings.warn(
            f"diffusion products left the dictionary span; largest dropped "
            f"coefficient {residual:.3e}",
            stacklevel=2,
        )
    return out, residual


def identify(matrix: GeneratorMatrix) -> IdentifiedModel:
    drift = recover_drift(matrix)
    diffusion, residual = recover_diffusion(matrix, drift)
    return IdentifiedModel(
        drift_coeffs=drift,
        diffusion_coeffs=diffusion,
        dictionary=matrix.dictionary,
        source=matrix,
        projection_residual=residual,
    )


def model_from_identified(identified: IdentifiedModel, name: str = "identified") -> SdeModel:
    """Executable SDE from identified coefficients.

    The noise loading is the symmetric square root of the evaluated
    covariance with negative eigenvalues clamped to zero.
    """
    dictionary = identified.dictionary
    d = identified.dim
    drift_c = identified.drift_coeffs
    diff_c = identified.diffusion_coeffs.reshape(d * d, -1)

    def drift(x):
        feats = dictionary.evaluate(x)
        return feats @ drift_c.T

    def diffusion(x):
        feats = dictionary.evaluate(x)
        cov = (feats @ diff_c.T).reshape(x.shape[:-1] + (d, d))
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        vals, vecs = np.linalg.eigh(cov)
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)

    return SdeModel(name=name, dim=d, noise_dim=d, drift=drift, diffusion=diffusion)


def negative_covariance_mass(identified: IdentifiedModel, points: np.ndarray) -> float:
    """Most negative covariance eigenvalue over sample states (quality metric)."""
    d = identified.dim
    feats = identified.dictionary.evaluate(np.atleast_2d(points))
    cov = (feats @ identified.diffusion_coeffs.reshape(d * d, -1).T).reshape(-1, d, d)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    vals = np.linalg.eigvalsh(cov)
    return float(vals.min(initial=0.0))


def reconstruct_paths(
    identified: IdentifiedModel,
    domain: Domain,
    initial_states: Sequence,
    config: SimConfig,
    noise_seed: Optional[int] = None,
) -> TrajectoryEnsemble:
    """Simulate the identified model under reproducible noise substreams.

    With ``noise_seed`` equal to a reference simulation's seed, both runs
    consume identical Wiener increments per path, enabling pathwise
    comparison under identical noise realizations.
    """
    model = model_from_identified(identified)
    if identified.dim != model.dim:
        raise ValueError("identified model dimension mismatch")
    cfg = config if noise_seed is None else SimConfig(
        horizon=config.horizon,
        observe_rate=config.observe_rate,
        substeps_per_observation=config.substeps_per_observation,
        seed=noise_seed,
    )
    return simulate_paths(model, domain, initial_states, 1, cfg)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _poly_string(coeffs: np.ndarray, dictionary: Dictionary) -> str:
    terms = []
    for c, alpha in zip(coeffs, dictionary.exponents):
        if abs(c) < 1e-14:
            continue
        mono = "*".join(
            f"x{k + 1}" + (f"^{a}" if a > 1 else "")
            for k, a in enumerate(alpha)
            if a > 0
        )
        terms.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
    return " ".join(terms) if terms else "0"


def save_identified_model(identified: IdentifiedModel, path) -> None:
    """Human-readable polynomial report plus a machine-readable JSON block."""
    dictionary = identified.dictionary
    with open(path, "w") as fh:
        fh.write("identified model\n")
        fh.write(f"dimension: {identified.dim}\n")
        fh.write(
            f"largest dropped product coefficient: {identified.projection_residual:.6g}\n"
        )
        for i in range(identified.dim):
            fh.write(f"f_{i + 1}(x) = {_poly_string(identified.drift_coeffs[i], dictionary)}\n")
        for i in range(identified.dim):
            for j in range(i, identified.dim):
                fh.write(
                    f"(bb^T)_{i + 1}{j + 1}(x) = "
                    f"{_poly_string(identified.diffusion_coeffs[i, j], dictionary)}\n"
                )
        fh.write("machine-readable:\n")
        fh.write(
            json.dumps(
                {
                    "exponents": [list(a) for a in dictionary.exponents],
                    "drift_coeffs": identified.drift_coeffs.tolist(),
                    "diffusion_coeffs": identified.diffusion_coeffs.tolist(),
                },
                indent=None,
                sort_keys=True,
            )
            + "\n"
        )


def load_identified_model(path) -> IdentifiedModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    payload = json.loads(lines[lines.index("machine-readable:") + 1])
    dictionary = Dictionary(
        dim=len(payload["exponents"][0]),
        exponents=tuple(tuple(a) for a in payload["exponents"]),
    )
    return IdentifiedModel(
        drift_coeffs=np.array(payload["drift_coeffs"]),
        diffusion_coeffs=np.array(payload["diffusion_coeffs"]),
        dictionary=dictionary,
    )


def reconstruction_error_csv(
    path,
    times: np.ndarray,
    true_path: np.ndarray,
    reconstructed_path: np.ndarray,
) -> None:
    """Per-snapshot comparison: t, true state, reconstructed state, |error|."""
    true_path = np.atleast_2d(true_path.T).T
    reconstructed_path = np.atleast_2d(reconstructed_path.T).T
    d = true_path.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["t"]
            + [f"true_x{k + 1}" for k in range(d)]
            + [f"recon_x{k + 1}" for k in range(d)]
            + ["abs_error"]
        )
        writer.writerow(header)
        for k, t in enumerate(times):
            err = float(np.linalg.norm(true_path[k] - reconstructed_path[k]))
            row = [format(t, ".17g")]
            row += [format(v, ".17g") for v in true_path[k]]
            row += [format(v, ".17g") for v in reconstructed_path[k]]
            row.append(format(err, ".17g"))
            writer.writerow(row)
