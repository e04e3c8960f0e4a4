"""Generator matrix representation shared by all estimators.

Matrices use the operator (column) convention throughout: for an observable
h = Z_N . theta with coefficient column theta, the generator action is
represented by L theta, i.e. column n of L holds the dictionary coefficients
of the generator applied to z_n. Eigenvector columns of L are therefore
dictionary-coefficient vectors of approximate eigenfunctions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dictionary import Dictionary

PROVENANCES = ("rt_edmd", "rt_edmd_modified", "edmd_klm", "gedmd_fdm", "analytic")


@dataclass(frozen=True)
class GeneratorMatrix:
    entries: np.ndarray  # (N, N); real except for flagged Koopman-log results
    dictionary: Dictionary
    provenance: str
    # estimator parameters echoed for serialization/diagnostics
    params: Optional[dict] = None
    # analytic oracle only: sub-degree terms that fell outside the span
    dropped_terms: Optional[dict] = None
    # Koopman-log only: true when a non-negligible imaginary part was kept
    complex_flagged: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("generator matrix must be square")
        if entries.shape[0] != self.dictionary.size:
            raise ValueError("matrix dimension must match dictionary size")
        if not np.all(np.isfinite(entries.view(float))):
            raise ValueError("generator matrix entries must be finite")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def save_generator(matrix: GeneratorMatrix, path) -> None:
    """Structured-text dump: header, dictionary multi-indices, row-major entries."""
    with open(path, "w") as fh:
        fh.write("koopgen generator matrix v1\n")
        fh.write(f"provenance: {matrix.provenance}\n")
        fh.write(f"dim: {matrix.dictionary.dim}\n")
        fh.write(f"size: {matrix.size}\n")
        fh.write(f"complex: {int(np.iscomplexobj(matrix.entries))}\n")
        params = matrix.params or {}
        fh.write("params: " + " ".join(f"{k}={v}" for k, v in sorted(params.items())) + "\n")
        fh.write(
            "observables: "
            + " ".join(",".join(str(e) for e in a) for a in matrix.dictionary.exponents)
            + "\n"
        )
        fh.write("entries (row-major):\n")
        for row in matrix.entries:
            if np.iscomplexobj(matrix.entries):
                fh.write(" ".join(f"{v.real:.17g}{v.imag:+.17g}j" for v in row) + "\n")
            else:
                fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def load_generator(path) -> GeneratorMatrix:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "koopgen generator matrix v1":
        raise ValueError(f"{path} is not a koopgen generator matrix file")
    fields = {}
    for line in lines[1:7]:
        key, _, value = line.partition(": ")
        fields[key] = value
    dim = int(fields["dim"])
    size = int(fields["size"])
    is_complex = bool(int(fields.get("complex", "0")))
    exponents = tuple(
        tuple(int(e) for e in token.split(",")) for token in fields["observables"].split()
    )
    params = {}
    for token in fields.get("params", "").split():
        key, _, value = token.partition("=")
        try:
            params[key] = float(value)
        except ValueError:
            params[key] = value
    start = lines.index("entries (row-major):") + 1
    dtype = complex if is_complex else float
    entries = np.array(
        [[dtype(v) for v in line.split()] for line in lines[start : start + size]]
    )
    return GeneratorMatrix(
        entries=entries,
        dictionary=Dictionary(dim=dim, exponents=exponents),
        provenance=fields["provenance"],
        params=params or None,
        complex_flagged=is_complex,
    )
