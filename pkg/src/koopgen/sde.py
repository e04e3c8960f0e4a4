"""Euler-Maruyama path simulation with first-exit stopping.

Paths are integrated on a substep grid, observed at ``observe_rate`` Hz,
and frozen at the (linearly interpolated) boundary crossing once they leave
the domain. Every path (i, j) draws from its own RNG substream keyed by
``(seed, i, j)``, so ensembles are reproducible and independent of any
parallel generation order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, IntegrationDivergedError
from .models import Domain, SdeModel

STOPPED_BOUNDARY_TOL = 1e-9
_CHUNK_TARGET = 4096  # paths stepped together; bounds the noise buffer


@dataclass(frozen=True)
class SimConfig:
    """Observation schedule for path simulation.

    ``horizon * observe_rate`` must be a whole number of snapshots; the
    internal Euler-Maruyama step is ``1 / (observe_rate * substeps)``.
    """

    horizon: float
    observe_rate: float
    substeps_per_observation: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0 or self.observe_rate <= 0:
            raise ConfigError("horizon and observe_rate must be positive")
        if self.substeps_per_observation < 1:
            raise ConfigError("substeps_per_observation must be >= 1")
        n = self.horizon * self.observe_rate
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ConfigError(
                f"observe_rate * horizon = {n!r} is not a positive integer"
            )

    @property
    def n_snapshots(self) -> int:
        """Number of observation intervals; snapshots number one more."""
        return int(round(self.horizon * self.observe_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.observe_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_snapshots + 1) / self.observe_rate


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Stopped sample paths for m initial states x J paths each.

    ``paths`` has shape (m, J, n_snapshots + 1, d) and already contains the
    stopped process: past ``stop_index[i, j]`` every snapshot equals
    ``stopped_value[i, j]``, which lies on the domain boundary. A stop index
    equal to ``n_snapshots`` means the path never exited.
    """

    initial_states: np.ndarray  # (m, d)
    paths: np.ndarray  # (m, J, G+1, d)
    stop_index: np.ndarray  # (m, J) int
    stopped_value: np.ndarray  # (m, J, d)
    config: SimConfig

    @property
    def m(self) -> int:
        return self.paths.shape[0]

    @property
    def n_paths(self) -> int:
        return self.paths.shape[1]

    @property
    def dim(self) -> int:
        return self.paths.shape[3]

    @property
    def exit_fraction(self) -> float:
        return float(np.mean(self.stop_index < self.config.n_snapshots))


def _path_rng(seed: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i, j)))


def path_noise(seed: int, i: int, j: int, n_steps: int, noise_dim: int) -> np.ndarray:
    """Standard-normal increments for path (i, j): shape (n_steps, noise_dim)."""
    return _path_rng(seed, i, j).standard_normal((n_steps, noise_dim))


def apply_stopping(raw_path: np.ndarray, domain: Domain):
    """First-exit stopping of a snapshot path whose start is interior.

    Returns ``(stop_index, stopped_value)`` where ``stop_index`` is the first
    snapshot index outside the domain (``len(raw_path) - 1`` when the path
    never exits) and ``stopped_value`` the linear interpolation of the
    crossing segment with the boundary.
    """
    raw_path = np.asarray(raw_path, dtype=float)
    if raw_path.ndim == 1:
        raw_path = raw_path[:, None]
    interior = domain.is_interior(raw_path)
    if not interior[0]:
        raise ValueError("raw_path[0] must be strictly interior")
    outside = np.flatnonzero(~interior)
    last = raw_path.shape[0] - 1
    if outside.size == 0:
        return last, raw_path[last].copy()
    k = int(outside[0])
    crossing = domain.boundary_crossing(raw_path[k - 1], raw_path[k])
    return k, crossing


def simulate_paths(
    model: SdeModel,
    domain: Domain,
    initial_states: Sequence,
    n_paths: int,
    config: SimConfig,
) -> TrajectoryEnsemble:
    """Integrate ``n_paths`` Euler-Maruyama sample paths per initial state.

    Snapshots are recorded every ``substeps_per_observation`` substeps. Exit
    detection runs at substep granularity: the first substate outside the
    domain is replaced by the interpolated boundary crossing and the path is
    frozen there (this also keeps post-exit dynamics from blowing up), with
    the stop recorded at the next snapshot index. For one substep per
    observation this coincides exactly with ``apply_stopping`` on the raw
    snapshot path. Identical inputs produce bitwise-identical ensembles.
    """
    initial = np.atleast_2d(np.asarray(initial_states, dtype=float))
    if initial.shape[1] != model.dim:
        raise ConfigError(
            f"initial states have dimension {initial.shape[1]}, model has {model.dim}"
        )
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    if not np.all(domain.is_interior(initial)):
        raise ConfigError("all initial states must be strictly interior to the domain")

    m = initial.shape[0]
    G = config.n_snapshots
    sub = config.substeps_per_observation
    h = config.dt / sub
    sqrt_h = np.sqrt(h)
    d, l = model.dim, model.noise_dim

    paths = np.empty((m, n_paths, G + 1, d))
    stop_index = np.full((m, n_paths), G, dtype=int)
    stopped_value = np.empty((m, n_paths, d))

    chunk = max(1, _CHUNK_TARGET // n_paths)
    for i0 in range(0, m, chunk):
        i1 = min(i0 + chunk, m)
        rows = np.arange(i0, i1)
        n = rows.size * n_paths
        noise = np.empty((n, G * sub, l))
        for a, i in enumerate(rows):
            for j in range(n_paths):
                noise[a * n_paths + j] = path_noise(config.seed, i, j, G * sub, l)
        states = np.repeat(initial[rows], n_paths, axis=0)
        prev = states.copy()
        alive = np.ones(n, dtype=bool)
        frozen_at = np.full(n, G, dtype=int)
        paths[rows, :, 0, :] = states.reshape(rows.size, n_paths, d)
        step = 0
        for k in range(1, G + 1):
            for _ in range(sub):
                if alive.any():
                    x = states[alive]
                    f = np.asarray(model.drift(x), dtype=float).reshape(x.shape)
                    b = np.asarray(model.diffusion(x), dtype=float).reshape(
                        x.shape[0], d, l
                    )
                    x = x + f * h + np.einsum("ndl,nl->nd", b, noise[alive, step]) * sqrt_h
                    finite = np.isfinite(x).all(axis=1)
                    if not finite.all():
                        bad = int(np.flatnonzero(alive)[np.argmin(finite)])
                        raise IntegrationDivergedError(
                            i0 + bad // n_paths, bad % n_paths, step + 1
                        )
                    prev[alive] = states[alive]
                    states[alive] = x
                    exited = alive.copy()
                    exited[alive] = ~domain.is_interior(x)
                    for idx in np.flatnonzero(exited):
                        states[idx] = domain.boundary_crossing(prev[idx], states[idx])
                        frozen_at[idx] = k
                    alive &= ~exited
                step += 1
            paths[rows, :, k, :] = states.reshape(rows.size, n_paths, d)
        stop_index[rows] = frozen_at.reshape(rows.size, n_paths)
        stopped_value[rows] = states.reshape(rows.size, n_paths, d)

    # never-exited paths report their final state in stopped_value, unused
    return TrajectoryEnsemble(
        initial_states=initial,
        paths=paths,
        stop_index=stop_index,
        stopped_value=stopped_value,
        config=config,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def ensemble_to_csv(ensemble: TrajectoryEnsemble, path) -> None:
    """Columnar dump: i, j, k, t, x_1..x_d, stopped_flag (one row per snapshot)."""
    d = ensemble.dim
    times = ensemble.config.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["i", "j", "k", "t"] + [f"x_{a + 1}" for a in range(d)] + ["stopped_flag"]
        )
        for i in range(ensemble.m):
            for j in range(ensemble.n_paths):
                kstop = ensemble.stop_index[i, j]
                for k in range(times.size):
                    row = [i, j, k, format(times[k], ".17g")]
                    row += [format(v, ".17g") for v in ensemble.paths[i, j, k]]
                    row.append(int(k >= kstop))
                    writer.writerow(row)


def save_ensemble(ensemble: TrajectoryEnsemble, path) -> None:
    """Compact binary dump (npz) that round-trips through ``load_ensemble``."""
    cfg = ensemble.config
    meta = json.dumps(
        {
            "horizon": cfg.horizon,
            "observe_rate": cfg.observe_rate,
            "substeps_per_observation": cfg.substeps_per_observation,
            "seed": cfg.seed,
        }
    )
    np.savez_compressed(
        path,
        initial_states=ensemble.initial_states,
        paths=ensemble.paths,
        stop_index=ensemble.stop_index,
        stopped_value=ensemble.stopped_value,
        config=np.array(meta),
    )


def load_ensemble(path) -> TrajectoryEnsemble:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["config"]))
        return TrajectoryEnsemble(
            initial_states=data["initial_states"],
            paths=data["paths"],
            stop_index=data["stop_index"],
            stopped_value=data["stopped_value"],
            config=SimConfig(
                horizon=meta["horizon"],
                observe_rate=meta["observe_rate"],
                substeps_per_observation=meta["substeps_per_observation"],
                seed=meta["seed"],
            ),
        )
