"""Simulation, stopping, and ensemble serialization tests."""

import numpy as np
import pytest

import koopgen as kg
from koopgen.errors import ConfigError, IntegrationDivergedError


def zero_model():
    return kg.SdeModel(
        "zero", 1, 1, lambda x: 0.0 * x, lambda x: np.zeros(x.shape[:-1] + (1, 1))
    )


def decay_model():
    return kg.SdeModel(
        "decay", 1, 1, lambda x: -x, lambda x: np.zeros(x.shape[:-1] + (1, 1))
    )


class TestSimConfig:
    def test_snapshot_count(self):
        cfg = kg.SimConfig(horizon=2.0, observe_rate=100.0)
        assert cfg.n_snapshots == 200
        assert cfg.dt == 0.01

    def test_rejects_non_integral_snapshot_count(self):
        with pytest.raises(ConfigError):
            kg.SimConfig(horizon=1.0, observe_rate=2.5)

    def test_rejects_bad_substeps(self):
        with pytest.raises(ConfigError):
            kg.SimConfig(horizon=1.0, observe_rate=10.0, substeps_per_observation=0)


class TestApplyStopping:
    def test_linear_crossing_midpoint(self):
        k, v = kg.apply_stopping(np.array([[1.9], [2.1]]), kg.Domain.ball(2.0))
        assert k == 1
        assert v[0] == pytest.approx(2.0, abs=1e-12)

    def test_fully_interior_path(self):
        path = np.linspace(0.1, 0.5, 7)[:, None]
        k, v = kg.apply_stopping(path, kg.Domain.ball(2.0))
        assert k == 6
        assert v[0] == pytest.approx(0.5)

    def test_2d_ball_crossing(self):
        k, v = kg.apply_stopping(
            np.array([[0.8, 0.0], [1.2, 0.0]]), kg.Domain.ball(1.0)
        )
        assert k == 1
        assert np.allclose(v, [1.0, 0.0], atol=1e-12)

    def test_box_crossing(self):
        dom = kg.Domain.box(((0.0, 1.0), (0.0, 1.0)))
        k, v = kg.apply_stopping(np.array([[0.5, 0.5], [1.5, 0.7]]), dom)
        assert k == 1
        # crossing at x1 = 1 happens at s = 0.5
        assert np.allclose(v, [1.0, 0.6])

    def test_requires_interior_start(self):
        with pytest.raises(ValueError):
            kg.apply_stopping(np.array([[2.5], [0.0]]), kg.Domain.ball(2.0))

    def test_clamp_when_barely_outside(self):
        dom = kg.Domain.ball(1.0)
        v = dom.boundary_crossing(np.array([0.0]), np.array([1.0 + 1e-16]))
        assert abs(abs(v[0]) - 1.0) < 1e-12


class TestSimulatePaths:
    def test_zero_dynamics_constant(self):
        sim = kg.SimConfig(horizon=1.0, observe_rate=10.0, seed=3)
        ens = kg.simulate_paths(zero_model(), kg.Domain.ball(2.0), [[0.3]], 5, sim)
        assert np.all(ens.paths == 0.3)
        assert np.all(ens.stop_index == sim.n_snapshots)

    def test_single_euler_step(self):
        sim = kg.SimConfig(horizon=0.01, observe_rate=100.0, seed=0)
        ens = kg.simulate_paths(decay_model(), kg.Domain.ball(2.0), [[1.0]], 1, sim)
        assert ens.paths[0, 0, 1, 0] == pytest.approx(0.99, abs=1e-15)

    def test_determinism_bitwise(self):
        model = kg.make_ou()
        sim = kg.SimConfig(horizon=0.5, observe_rate=20.0, seed=42)
        a = kg.simulate_paths(model, kg.Domain.ball(2.0), [[0.5], [-0.2]], 7, sim)
        b = kg.simulate_paths(model, kg.Domain.ball(2.0), [[0.5], [-0.2]], 7, sim)
        assert np.array_equal(a.paths, b.paths)
        assert np.array_equal(a.stop_index, b.stop_index)

    def test_ou_monte_carlo_mean(self):
        # E[X(1)] = x0 e^{mu} for the OU process; J large makes the MC error
        # small against 3 standard errors of the sample mean
        model = kg.make_ou(mu=-0.5, sigma=0.02)
        sim = kg.SimConfig(
            horizon=1.0, observe_rate=100.0, substeps_per_observation=10, seed=123
        )
        ens = kg.simulate_paths(model, kg.Domain.ball(2.0), [[1.0]], 10000, sim)
        final = ens.paths[0, :, -1, 0]
        se = final.std(ddof=1) / np.sqrt(final.size)
        assert abs(final.mean() - np.exp(-0.5)) < 3 * se + 1e-4

    def test_stopped_paths_frozen_on_boundary(self):
        model = kg.make_ou(mu=-0.5, sigma=0.5)
        dom = kg.Domain.ball(1.2)
        sim = kg.SimConfig(horizon=1.0, observe_rate=50.0, seed=9)
        ens = kg.simulate_paths(model, dom, [[1.1]], 64, sim)
        exited = ens.stop_index < sim.n_snapshots
        assert exited.any(), "test setup should produce exits"
        for j in np.flatnonzero(exited[0]):
            k = ens.stop_index[0, j]
            assert abs(np.linalg.norm(ens.stopped_value[0, j]) - 1.2) < 1e-9
            tail = ens.paths[0, j, k:, :]
            assert np.all(tail == ens.stopped_value[0, j])

    def test_matches_apply_stopping_at_one_substep(self):
        # with substeps=1 the in-loop stopping is exactly grid stopping
        model = kg.make_ou(mu=-0.5, sigma=0.5)
        dom = kg.Domain.ball(1.2)
        sim = kg.SimConfig(horizon=1.0, observe_rate=25.0, seed=17)
        ens = kg.simulate_paths(model, dom, [[1.1]], 32, sim)
        raw = _raw_paths(model, [[1.1]], 32, sim)
        for j in range(32):
            k, v = kg.apply_stopping(raw[0, j], dom)
            assert k == ens.stop_index[0, j]
            if k < sim.n_snapshots:
                assert np.allclose(v, ens.stopped_value[0, j], atol=1e-12)

    def test_divergence_error_carries_indices(self):
        expl = kg.SdeModel(
            "explode", 1, 1, lambda x: x**3 * 1e9, lambda x: np.zeros(x.shape[:-1] + (1, 1))
        )
        sim = kg.SimConfig(horizon=1.0, observe_rate=10.0, seed=0)
        with pytest.raises(IntegrationDivergedError) as err:
            kg.simulate_paths(expl, kg.Domain.ball(1e300), [[1.0]], 2, sim)
        assert err.value.i == 0 and err.value.step >= 1

    def test_rejects_exterior_initial_state(self):
        sim = kg.SimConfig(horizon=1.0, observe_rate=10.0, seed=0)
        with pytest.raises(ConfigError):
            kg.simulate_paths(zero_model(), kg.Domain.ball(1.0), [[1.5]], 1, sim)


def _raw_paths(model, initials, n_paths, sim):
    """Unstopped Euler-Maruyama snapshots for cross-checking the stopper."""
    from koopgen.sde import path_noise

    initials = np.atleast_2d(np.asarray(initials, dtype=float))
    G, sub = sim.n_snapshots, sim.substeps_per_observation
    h = sim.dt / sub
    out = np.empty((initials.shape[0], n_paths, G + 1, model.dim))
    for i, x0 in enumerate(initials):
        for j in range(n_paths):
            noise = path_noise(sim.seed, i, j, G * sub, model.noise_dim)
            x = x0.copy()
            out[i, j, 0] = x
            s = 0
            for k in range(1, G + 1):
                for _ in range(sub):
                    pt = x[None, :]
                    f = np.asarray(model.drift(pt)).reshape(-1)
                    b = np.asarray(model.diffusion(pt)).reshape(model.dim, model.noise_dim)
                    x = x + f * h + (b @ noise[s]) * np.sqrt(h)
                    s += 1
                out[i, j, k] = x
    return out


class TestProperties:
    def test_weak_order_halving_step_halves_error(self):
        # deterministic decay: explicit Euler error is O(dt)
        model = decay_model()
        dom = kg.Domain.ball(5.0)
        errs = []
        for sub in (1, 2):
            sim = kg.SimConfig(
                horizon=1.0, observe_rate=10.0, substeps_per_observation=sub, seed=0
            )
            ens = kg.simulate_paths(model, dom, [[1.0]], 1, sim)
            exact = np.exp(-sim.times)
            errs.append(np.max(np.abs(ens.paths[0, 0, :, 0] - exact)))
        ratio = errs[0] / errs[1]
        assert 1.7 <= ratio <= 2.3

    def test_monte_carlo_error_shrinks_with_paths(self):
        # law-of-large-numbers decay of the empirical mean error in J;
        # sigma is raised so MC noise dominates the Euler bias
        model = kg.make_ou(mu=-0.5, sigma=0.2)
        dom = kg.Domain.ball(4.0)
        errors = []
        for J in (100, 1000, 10000):
            sim = kg.SimConfig(horizon=1.0, observe_rate=20.0, seed=31)
            ens = kg.simulate_paths(model, dom, [[1.0], [0.6], [-0.8]], J, sim)
            exact = ens.initial_states[:, 0] * np.exp(-0.5)
            emp = ens.paths[:, :, -1, 0].mean(axis=1)
            errors.append(np.mean(np.abs(emp - exact)))
        slope = np.polyfit(np.log([100, 1000, 10000]), np.log(errors), 1)[0]
        assert -0.7 <= slope <= -0.3


class TestSerialization:
    def test_npz_round_trip(self, tmp_path):
        model = kg.make_ou()
        sim = kg.SimConfig(horizon=0.2, observe_rate=10.0, seed=5)
        ens = kg.simulate_paths(model, kg.Domain.ball(2.0), [[0.4]], 3, sim)
        path = tmp_path / "ens.npz"
        kg.save_ensemble(ens, path)
        back = kg.load_ensemble(path)
        assert np.array_equal(back.paths, ens.paths)
        assert np.array_equal(back.stop_index, ens.stop_index)
        assert back.config == ens.config

    def test_csv_columns(self, tmp_path):
        model = kg.make_lotka_volterra()
        dom = kg.Domain.box(((0.01, 10.0), (0.01, 10.0)))
        sim = kg.SimConfig(horizon=0.2, observe_rate=10.0, seed=5)
        ens = kg.simulate_paths(model, dom, [[1.0, 1.0]], 2, sim)
        path = tmp_path / "ens.csv"
        kg.ensemble_to_csv(ens, path)
        header = path.read_text().splitlines()[0]
        assert header == "i,j,k,t,x_1,x_2,stopped_flag"
