import json

import numpy as np
import pandas as pd
import pytest
from scipy import linalg

from betaspec.core.exceptions import ConfigurationError, DimensionError, NonPositiveInput, TooFewSamples
from betaspec.models.domain.experiment import (
    ArmaModel,
    BandpassTarget,
    ConstantPrior,
    ExperimentConfig,
    IdentityPrior,
    RationalPrior,
    SampleVariancePrior,
    TargetVariancePrior,
)
from betaspec.services import filterbank_service, simlab_service, spectapprox_service, spectra_service


def test_white_noise_spectrum_is_flat(grid):
    phi = simlab_service.arma_spectrum(ArmaModel(variance=2.0), grid)
    assert np.allclose(phi.values, 2.0)


def test_ar1_spectrum(grid):
    phi = simlab_service.arma_spectrum(ArmaModel(ar=[0.5]), grid)
    expected = 1.0 / (1.25 - np.cos(grid.theta))
    assert np.allclose(phi.values[:, 0, 0].real, expected, rtol=1e-12)


def test_unstable_model_is_rejected():
    with pytest.raises(Exception):
        ArmaModel(ar=[1.2])


def test_simulate_arma(arma_model):
    y = simlab_service.simulate_arma(arma_model, 500, seed=11)
    assert y.shape == (500,)
    assert np.array_equal(y, simlab_service.simulate_arma(arma_model, 500, seed=11))
    assert not np.array_equal(y, simlab_service.simulate_arma(arma_model, 500, seed=12))
    with pytest.raises(ConfigurationError):
        simlab_service.simulate_arma(arma_model, 0)


def test_simulated_variance(arma_model):
    y = simlab_service.simulate_arma(arma_model, 100_000, seed=5)
    variance = simlab_service.arma_autocovariance(arma_model, 1)[0]
    assert np.var(y) == pytest.approx(variance, rel=0.05)


def test_simulate_spectrum(rng, grid):
    omega = simlab_service.bandpass_spectrum(BandpassTarget(low=0.4, high=1.9, gains=[1.0, 0.5]), grid)
    y = simlab_service.simulate_spectrum(omega, 200, seed=2)
    assert y.shape == (200, 2)
    assert np.array_equal(y, simlab_service.simulate_spectrum(omega, 200, seed=2))
    with pytest.raises(ConfigurationError):
        simlab_service.simulate_spectrum(omega, grid.K + 1)


def test_sample_state_covariance(ce_bank, rng):
    assert np.array_equal(simlab_service.sample_state_covariance(ce_bank, np.zeros(20)), np.zeros((6, 6)))
    with pytest.raises(TooFewSamples):
        simlab_service.sample_state_covariance(ce_bank, np.ones(3))
    with pytest.raises(DimensionError):
        simlab_service.sample_state_covariance(ce_bank, np.ones((20, 2)))

    y = rng.standard_normal(100_000)
    sigma = simlab_service.sample_state_covariance(ce_bank, y)
    gramian = linalg.solve_discrete_lyapunov(ce_bank.A, ce_bank.B @ ce_bank.B.T)
    assert np.linalg.norm(sigma - gramian) <= 0.05 * np.linalg.norm(gramian)


def test_exact_state_covariance_matches_lyapunov(arma_model):
    fine = spectra_service.make_grid(8192)
    bank = filterbank_service.covariance_extension_bank(6, 1, fine)
    exact = simlab_service.exact_state_covariance(bank, simlab_service.arma_spectrum(arma_model, fine))
    reference = simlab_service.arma_state_covariance(bank, arma_model)
    assert np.linalg.norm(exact - reference) <= 1e-8 * np.linalg.norm(reference)

    half = spectra_service.make_grid(4096)
    coarse = simlab_service.exact_state_covariance(bank, simlab_service.arma_spectrum(arma_model, half))
    assert np.linalg.norm(coarse - exact) <= 1e-8 * np.linalg.norm(exact)


def test_bandpass_target(grid):
    target = BandpassTarget(low=0.89, high=2.46)
    omega = simlab_service.bandpass_spectrum(target, grid)
    spectra_service.check_coercive(omega)
    values = omega.half_values[:, 0, 0].real
    theta = grid.half_theta
    assert np.allclose(values[(theta > 1.2) & (theta < 2.2)], 1.0 + target.floor)
    assert np.allclose(values[theta < 0.7], target.floor)

    mixed = simlab_service.bandpass_spectrum(
        BandpassTarget(low=0.42, high=1.94, gains=[1.0, 0.5], mixing_angle=np.pi / 6), grid
    )
    eigenvalues = np.linalg.eigvalsh(mixed.half_values)
    k = np.argmin(np.abs(theta - 1.2))
    assert np.allclose(eigenvalues[k], [0.5 + 2e-3, 1.0 + 2e-3])
    assert abs(mixed.half_values[k, 0, 1]) > 0.1


def test_priors(grid, arma_model):
    omega = simlab_service.arma_spectrum(arma_model, grid)
    variance = spectra_service.integrate(omega).real
    assert np.allclose(simlab_service.prior_spectrum(TargetVariancePrior(), grid, omega).values, variance)
    assert np.allclose(simlab_service.prior_spectrum(IdentityPrior(), grid, m=2).values, np.eye(2))
    y = np.array([1.0, -1.0, 2.0, -2.0])
    sample = simlab_service.prior_spectrum(SampleVariancePrior(), grid, omega, data=y)
    assert np.allclose(sample.values, 2.5)
    with pytest.raises(ConfigurationError):
        simlab_service.prior_spectrum(TargetVariancePrior(), grid, m=1)
    with pytest.raises(DimensionError):
        simlab_service.prior_spectrum(ConstantPrior(value=[[1.0]]), grid, m=2)

    rational = RationalPrior(numerator=[1.0, 0.6], denominator=[1.0, 0.5330208170238593, 0.16], power=6)
    with pytest.raises(DimensionError):
        simlab_service.prior_spectrum(rational, grid, m=2)
    assert simlab_service.prior_degree(rational, 3) == 8
    assert simlab_service.prior_degree(rational, 4) is None
    assert simlab_service.prior_degree(IdentityPrior(), 2) == 0


def test_s_nu_diagnostic():
    for nu in (1, 2, 3, np.inf):
        value, slope = simlab_service.s_nu_diagnostic(1.7, 1.7, nu)
        assert value == pytest.approx(0.0, abs=1e-14)
        assert slope == pytest.approx(0.0, abs=1e-14)

    phi, psi = 2.0, 0.8
    value, _ = simlab_service.s_nu_diagnostic(phi, psi, 1)
    assert value == pytest.approx(np.log(psi / phi) + phi / psi - 1.0, rel=1e-14)
    for nu in (2, 3):
        value, slope = simlab_service.s_nu_diagnostic(phi, psi, nu)
        h = 1e-6
        numeric = (
            simlab_service.s_nu_diagnostic(phi + h, psi, nu)[0] - simlab_service.s_nu_diagnostic(phi - h, psi, nu)[0]
        ) / (2 * h)
        assert value > 0.0
        assert slope == pytest.approx(numeric, rel=1e-6)

    with pytest.raises(NonPositiveInput):
        simlab_service.s_nu_diagnostic(0.0, 1.0, 2)


def test_maximum_entropy_spectrum(grid):
    a = 0.6
    lags = np.array([1.0, a]) / (1.0 - a ** 2)
    phi = simlab_service.maximum_entropy_spectrum(lags, grid)
    assert np.allclose(phi.values, simlab_service.arma_spectrum(ArmaModel(ar=[a]), grid).values, rtol=1e-12)
    with pytest.raises(NonPositiveInput):
        simlab_service.maximum_entropy_spectrum(np.array([1.0, 1.0]), grid)


def test_degree_diagnostic_for_nu_one(arma_model, grid):
    bank = filterbank_service.covariance_extension_bank(6, 1, grid)
    sigma = simlab_service.exact_state_covariance(bank, simlab_service.arma_spectrum(arma_model, grid))
    whitened = filterbank_service.whiten(bank, sigma)
    psi = spectra_service.constant_spectrum(sigma[0, 0], grid)
    phi, _ = spectapprox_service.newton_solve(psi, whitened, nu=1)
    diagnostic = simlab_service.rational_degree_diagnostic(phi, bank, 1)
    assert diagnostic.fit_error < 1e-4
    assert diagnostic.degree_bound == 12
    assert simlab_service.degree_bound(3, None, 6) is None


def small(name, **update):
    config = simlab_service.load_experiment(name)
    return config.model_copy(update={"grid_size": 512, **update})


def test_committed_configurations_load():
    for name in simlab_service.EXPERIMENTS:
        config = simlab_service.load_experiment(name)
        assert config.name
    with pytest.raises(ConfigurationError):
        simlab_service.load_experiment("missing")


def test_arma_peaks_decrease_with_nu():
    result = simlab_service.run_experiment(small("arma"))
    assert [item.nu for item in result.results] == [1, 2, 3]
    for item in result.results:
        assert item.residual <= 1e-6
        assert item.report.converged
    peaks = [item.peak for item in result.results]
    assert peaks[0] >= peaks[1] >= peaks[2]


def test_scalar_bandpass_with_rational_prior():
    result = simlab_service.run_experiment(small("scalar-bandpass", nus=[1, 2]))
    for item in result.results:
        assert item.residual <= 1e-6
        assert item.degree is not None


def test_data_driven_pipeline_is_seeded():
    config = small("data-driven", nus=[1, 2, 3])
    first = simlab_service.run_experiment(config)
    second = simlab_service.run_experiment(config)
    assert first.sigma.shape == (9, 9)
    assert np.array_equal(first.sigma, second.sigma)
    for item in first.results:
        assert item.residual <= 1e-6
        assert item.phi.dim == 2

    other = simlab_service.run_experiment(config.model_copy(update={"seed": 1}))
    assert not np.array_equal(first.sigma, other.sigma)


def test_data_driven_pipeline_at_the_committed_grid():
    result = simlab_service.run_experiment(simlab_service.load_experiment("data-driven"))
    assert [item.nu for item in result.results] == [1, 2, 3]
    for item in result.results:
        assert item.report.converged
        assert item.residual <= 1e-6
        assert item.report.iteration_count <= 50
    peaks = [item.peak for item in result.results]
    assert peaks[0] > peaks[1] > peaks[2]


def test_bivariate_bandpass_peaks_decrease_with_nu():
    result = simlab_service.run_experiment(small("bivariate-bandpass"))
    assert [item.nu for item in result.results] == [1, 2, 3]
    for item in result.results:
        assert item.report.converged
        assert item.residual <= 1e-6
        assert item.phi.dim == 2
        spectra_service.check_coercive(item.phi)
    peaks = [item.peak for item in result.results]
    assert peaks[0] > peaks[1] > peaks[2]


def test_experiment_config_validation():
    payload = simlab_service.load_experiment("arma").model_dump()
    with pytest.raises(Exception):
        ExperimentConfig.model_validate({**payload, "nus": [0]})
    with pytest.raises(Exception):
        ExperimentConfig.model_validate({**payload, "grid_size": 1000})
    with pytest.raises(Exception):
        ExperimentConfig.model_validate({**payload, "mode": "data_driven", "n_samples": None})


def test_write_experiment_outputs(tmp_path):
    result = simlab_service.run_experiment(small("arma", nus=[1, 2]))
    written = simlab_service.write_experiment_outputs(result, tmp_path)
    names = {path.name for path in written}
    assert {"omega.csv", "psi.csv", "sigma.csv", "phi_nu1.csv", "report_nu2.json", "summary.json"} <= names

    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "arma"
    assert [row["nu"] for row in summary["results"]] == [1, 2]
    assert set(summary["results"][0]) == {"nu", "divergence", "residual", "peak", "iterations"}
    assert len(pd.read_csv(tmp_path / "summary.csv")) == 2

    phi = spectra_service.read_spectrum(tmp_path / "phi_nu1.csv")
    assert np.array_equal(phi.values, result.results[0].phi.values)
    report = json.loads((tmp_path / "report_nu1.json").read_text())
    assert report["peak"] == pytest.approx(result.results[0].peak)


def test_results_are_stable_under_grid_refinement():
    coarse = simlab_service.run_experiment(small("arma", nus=[2], grid_size=2048))
    fine = simlab_service.run_experiment(small("arma", nus=[2], grid_size=4096))
    assert fine.results[0].divergence == pytest.approx(coarse.results[0].divergence, rel=1e-7)
    assert np.allclose(fine.results[0].report.multiplier.lam, coarse.results[0].report.multiplier.lam, rtol=1e-7, atol=1e-9)
