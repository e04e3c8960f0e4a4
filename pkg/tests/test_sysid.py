"""Drift/diffusion recovery and trajectory reconstruction."""

import numpy as np
import pytest

import koopgen as kg
from koopgen.errors import DictionaryError


def ou_sysid_dictionary():
    return kg.monomials_up_to_degree(1, 3, include_constant=True)


def lv_partial_matrix(d):
    """Exact generator columns for degree <= 2 observables of the LV system.

    The quadratic drift pushes higher-degree observables out of any finite
    monomial span, so the full analytic matrix is unavailable; drift and
    diffusion recovery only read the coordinate and quadratic columns, which
    do stay inside the degree-3 span and are filled here symbolically.
    """
    from koopgen.dictionary import _generator_polynomial

    model = kg.make_lotka_volterra()
    entries = np.zeros((d.size, d.size))
    index = {a: n for n, a in enumerate(d.exponents)}
    for n, alpha in enumerate(d.exponents):
        if sum(alpha) > 2:
            continue
        for mono, coeff in _generator_polynomial(d, model, n).items():
            entries[index[mono], n] = coeff
    return kg.GeneratorMatrix(entries=entries, dictionary=d, provenance="analytic")


class TestRecoverDrift:
    def test_ou_analytic(self):
        d = ou_sysid_dictionary()
        L = kg.analytic_generator_matrix(d, kg.make_ou())
        drift = kg.recover_drift(L)
        assert drift[0, d.index_of((1,))] == pytest.approx(-0.5)
        others = [n for n in range(d.size) if n != d.index_of((1,))]
        assert np.allclose(drift[0, others], 0.0, atol=1e-14)

    def test_zero_matrix(self):
        d = ou_sysid_dictionary()
        L = kg.GeneratorMatrix(
            entries=np.zeros((4, 4)), dictionary=d, provenance="analytic"
        )
        assert np.all(kg.recover_drift(L) == 0.0)

    def test_lv_analytic_coefficients(self):
        d = kg.monomials_up_to_degree(2, 3, include_constant=True)
        L = lv_partial_matrix(d)
        drift = kg.recover_drift(L)
        assert drift[0, d.index_of((1, 0))] == pytest.approx(1.0)
        assert drift[0, d.index_of((1, 1))] == pytest.approx(-0.5)
        assert drift[0, d.index_of((2, 0))] == pytest.approx(-0.01)
        assert drift[1, d.index_of((0, 1))] == pytest.approx(-0.75)
        assert drift[1, d.index_of((1, 1))] == pytest.approx(0.25)

    def test_missing_coordinate_observable(self):
        d = kg.Dictionary(dim=1, exponents=((2,), (3,)))
        L = kg.GeneratorMatrix(
            entries=np.zeros((2, 2)), dictionary=d, provenance="analytic"
        )
        with pytest.raises(DictionaryError):
            kg.recover_drift(L)


class TestRecoverDiffusion:
    def test_ou_constant_diffusion(self):
        d = ou_sysid_dictionary()
        L = kg.analytic_generator_matrix(d, kg.make_ou())
        ident = kg.identify(L)
        # bb^T = sigma^2 sits on the constant observable
        assert ident.diffusion_coeffs[0, 0, d.index_of((0,))] == pytest.approx(4e-4)
        assert ident.projection_residual == 0.0

    def test_noise_free_linear_system(self):
        det = kg.SdeModel(
            "decay", 1, 1, lambda x: -x, lambda x: np.zeros(x.shape[:-1] + (1, 1)),
            drift_poly=({(1,): -1.0},), noise_cov_poly=(({},),),
        )
        d = ou_sysid_dictionary()
        ident = kg.identify(kg.analytic_generator_matrix(d, det))
        assert np.max(np.abs(ident.diffusion_coeffs)) < 1e-10

    def test_lv_multiplicative_noise(self):
        d = kg.monomials_up_to_degree(2, 3, include_constant=True)
        ident = kg.identify(lv_partial_matrix(d))
        assert ident.diffusion_coeffs[0, 0, d.index_of((2, 0))] == pytest.approx(
            0.05**2
        )
        assert ident.diffusion_coeffs[1, 1, d.index_of((0, 2))] == pytest.approx(
            0.05**2
        )
        assert np.allclose(ident.diffusion_coeffs[0, 1], 0.0, atol=1e-14)

    def test_symmetry(self):
        d = kg.monomials_up_to_degree(2, 3, include_constant=True)
        ident = kg.identify(lv_partial_matrix(d))
        assert np.array_equal(
            ident.diffusion_coeffs, np.swapaxes(ident.diffusion_coeffs, 0, 1)
        )


class TestReconstruction:
    def test_true_model_same_seed_zero_error(self):
        # identifying from the analytic matrix and reusing the noise seed
        # reproduces the reference paths up to factorization roundoff
        d = ou_sysid_dictionary()
        ident = kg.identify(kg.analytic_generator_matrix(d, kg.make_ou()))
        dom = kg.Domain.ball(2.0)
        sim = kg.SimConfig(horizon=1.0, observe_rate=50.0, seed=21)
        truth = kg.simulate_paths(kg.make_ou(), dom, [[0.8]], 1, sim)
        recon = kg.reconstruct_paths(ident, dom, [[0.8]], sim, noise_seed=21)
        assert np.max(np.abs(truth.paths - recon.paths)) < 1e-12

    def test_perturbed_drift_matches_ode_error_curve(self):
        # b = 0: perturbing mu by +0.01 gives |e^{-0.49 t} - e^{-0.5 t}|
        d = ou_sysid_dictionary()
        drift = np.zeros((1, d.size))
        drift[0, d.index_of((1,))] = -0.49
        ident = kg.IdentifiedModel(
            drift_coeffs=drift,
            diffusion_coeffs=np.zeros((1, 1, d.size)),
            dictionary=d,
        )
        dom = kg.Domain.ball(2.0)
        sim = kg.SimConfig(
            horizon=1.0, observe_rate=100.0, substeps_per_observation=50, seed=0
        )
        recon = kg.reconstruct_paths(ident, dom, [[1.0]], sim, noise_seed=0)
        t = sim.times
        analytic = np.abs(np.exp(-0.49 * t) - np.exp(-0.5 * t))
        reference = np.exp(-0.5 * t)
        err = np.abs(recon.paths[0, 0, :, 0] - reference)
        assert np.max(np.abs(err - analytic)) < 1e-4

    def test_error_linear_in_drift_perturbation(self):
        # doubling the mu-perturbation doubles the terminal pathwise error
        d = ou_sysid_dictionary()
        dom = kg.Domain.ball(2.0)
        sim = kg.SimConfig(
            horizon=1.0, observe_rate=100.0, substeps_per_observation=20, seed=0
        )
        terminal = []
        for eps in (0.01, 0.02):
            drift = np.zeros((1, d.size))
            drift[0, d.index_of((1,))] = -0.5 + eps
            ident = kg.IdentifiedModel(
                drift_coeffs=drift,
                diffusion_coeffs=np.zeros((1, 1, d.size)),
                dictionary=d,
            )
            recon = kg.reconstruct_paths(ident, dom, [[1.0]], sim, noise_seed=0)
            terminal.append(abs(recon.paths[0, 0, -1, 0] - np.exp(-0.5)))
        ratio = terminal[1] / terminal[0]
        assert 1.9 <= ratio <= 2.1

    def test_negative_covariance_clamped(self):
        d = ou_sysid_dictionary()
        diffusion = np.zeros((1, 1, d.size))
        diffusion[0, 0, d.index_of((0,))] = -1e-3  # slightly negative constant
        ident = kg.IdentifiedModel(
            drift_coeffs=np.zeros((1, d.size)),
            diffusion_coeffs=diffusion,
            dictionary=d,
        )
        model = kg.model_from_identified(ident)
        b = model.diffusion(np.zeros((1, 1)))
        assert np.all(b == 0.0)


class TestReports:
    def test_identified_model_round_trip(self, tmp_path):
        d = ou_sysid_dictionary()
        ident = kg.identify(kg.analytic_generator_matrix(d, kg.make_ou()))
        path = tmp_path / "identified_model.txt"
        from koopgen.sysid import load_identified_model, save_identified_model

        save_identified_model(ident, path)
        back = load_identified_model(path)
        assert np.allclose(back.drift_coeffs, ident.drift_coeffs)
        assert np.allclose(back.diffusion_coeffs, ident.diffusion_coeffs)
        text = path.read_text()
        assert "f_1(x)" in text and "(bb^T)_11(x)" in text

    def test_reconstruction_csv(self, tmp_path):
        from koopgen.sysid import reconstruction_error_csv

        times = np.array([0.0, 0.1])
        truth = np.array([[1.0], [0.9]])
        recon = np.array([[1.0], [0.8]])
        path = tmp_path / "reconstruction_0.csv"
        reconstruction_error_csv(path, times, truth, recon)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,true_x1,recon_x1,abs_error"
        assert lines[2].startswith("0.1")
