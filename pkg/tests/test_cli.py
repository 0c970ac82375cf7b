import json

import numpy as np
import pytest

from betaspec.main import main
from betaspec.models.domain.experiment import ArmaModel
from betaspec.services import filterbank_service, simlab_service, spectra_service
from tests.conftest import smooth_spectrum


@pytest.fixture
def spectrum_files(rng, grid, tmp_path):
    phi = smooth_spectrum(rng, grid, 2)
    psi = smooth_spectrum(rng, grid, 2)
    return (
        spectra_service.write_spectrum_csv(phi, tmp_path / "phi.csv"),
        spectra_service.write_spectrum_csv(psi, tmp_path / "psi.csv"),
    )


@pytest.fixture
def bank_file(tmp_path):
    path = tmp_path / "bank.json"
    path.write_text(json.dumps({"type": "covariance_extension", "n": 6}))
    return path


def last_line(capsys):
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_divergence_of_identical_files(spectrum_files, capsys):
    phi, _ = spectrum_files
    assert main(["divergence", str(phi), str(phi), "--nu", "2"]) == 0
    assert last_line(capsys) == "0.000000000000"


def test_divergence_options_agree(spectrum_files, capsys):
    phi, psi = spectrum_files
    assert main(["divergence", str(phi), str(psi), "--is"]) == 0
    is_value = float(last_line(capsys))
    assert main(["divergence", str(phi), str(psi), "--nu", "1"]) == 0
    assert float(last_line(capsys)) == is_value
    assert main(["divergence", str(phi), str(psi), "--beta", "1"]) == 0
    beta_one = float(last_line(capsys))
    assert main(["divergence", str(phi), str(psi), "--kl"]) == 0
    assert float(last_line(capsys)) == beta_one
    assert is_value > 0.0


def test_divergence_requires_one_choice(spectrum_files):
    phi, psi = spectrum_files
    with pytest.raises(SystemExit) as excinfo:
        main(["divergence", str(phi), str(psi)])
    assert excinfo.value.code == 2


def test_grid_mismatch_exit_code(spectrum_files, tmp_path):
    phi, _ = spectrum_files
    coarse = spectra_service.write_spectrum_csv(
        spectra_service.identity_spectrum(2, spectra_service.make_grid(256)), tmp_path / "coarse.csv"
    )
    assert main(["divergence", str(phi), str(coarse), "--nu", "2"]) == 3


def test_non_positive_definite_exit_code(spectrum_files, grid, tmp_path):
    phi, _ = spectrum_files
    half = np.tile(np.eye(2, dtype=complex), (grid.half_size, 1, 1))
    half[10] = np.diag([1.0, -1.0])
    bad = spectra_service.write_spectrum_csv(spectra_service.spectrum_from_half(half, grid), tmp_path / "bad.csv")
    assert main(["divergence", str(phi), str(bad), "--nu", "2"]) == 4


def test_missing_file_exit_code(spectrum_files, tmp_path):
    phi, _ = spectrum_files
    assert main(["divergence", str(phi), str(tmp_path / "missing.csv"), "--nu", "2"]) == 2


def test_covfit_writes_result(arma_model, bank_file, tmp_path, capsys):
    grid = spectra_service.make_grid(512)
    bank = filterbank_service.covariance_extension_bank(6, 1, grid)
    sample = simlab_service.sample_state_covariance(bank, simlab_service.simulate_arma(arma_model, 50, seed=3))
    sigma = spectra_service.write_matrix_csv(sample, tmp_path / "sigma.csv")
    out = tmp_path / "out"
    assert main(["covfit", str(sigma), str(bank_file), "--nu", "2", "--grid", "512", "--out", str(out)]) == 0
    assert last_line(capsys) == str(out / "covfit.json")
    payload = json.loads((out / "covfit.json").read_text())
    assert payload["nu"] == 2
    assert payload["converged"]
    P = spectra_service.read_matrix_csv(out / "covfit_P.csv")
    assert filterbank_service.v_kernel_test(bank, P)


def test_covfit_failure_writes_partial_result(arma_model, bank_file, tmp_path):
    grid = spectra_service.make_grid(512)
    bank = filterbank_service.covariance_extension_bank(6, 1, grid)
    sample = simlab_service.sample_state_covariance(bank, simlab_service.simulate_arma(arma_model, 50, seed=3))
    sigma = spectra_service.write_matrix_csv(sample, tmp_path / "sigma.csv")
    out = tmp_path / "out"
    code = main(
        ["covfit", str(sigma), str(bank_file), "--grid", "512", "--max-iter", "1", "--eps", "1e-15", "--out", str(out)]
    )
    assert code == 5
    assert not json.loads((out / "covfit.json").read_text())["converged"]


def test_estimate_with_feasible_prior(bank_file, tmp_path, capsys):
    grid = spectra_service.make_grid(512)
    omega = simlab_service.arma_spectrum(ArmaModel(ar=[0.5], ma=[1.0, 0.4]), grid)
    bank = filterbank_service.covariance_extension_bank(6, 1, grid)
    psi = spectra_service.write_spectrum_csv(omega, tmp_path / "omega.csv")
    sigma = spectra_service.write_matrix_csv(filterbank_service.gamma_op(bank, omega), tmp_path / "sigma.csv")
    out = tmp_path / "out"
    code = main(
        ["estimate", "--psi", str(psi), "--bank", str(bank_file), "--sigma", str(sigma),
         "--nu", "1", "--nu", "3", "--out", str(out)]
    )
    assert code == 0
    summaries = json.loads(capsys.readouterr().out)
    assert [item["label"] for item in summaries] == ["nu1", "nu3"]
    for item in summaries:
        assert item["residual"] <= 1e-6
        assert item["divergence"] == pytest.approx(0.0, abs=1e-8)
    phi = spectra_service.read_spectrum(out / "phi_nu3.csv")
    assert np.abs(phi.values - omega.values).max() <= 1e-6 * np.abs(omega.values).max()
    assert (out / "report_nu1.json").exists()


def test_estimate_from_prior_config_with_kl(arma_model, bank_file, tmp_path, capsys):
    grid = spectra_service.make_grid(512)
    bank = filterbank_service.covariance_extension_bank(6, 1, grid)
    sigma = filterbank_service.gamma_op(bank, simlab_service.arma_spectrum(arma_model, grid))
    sigma_path = spectra_service.write_matrix_csv(sigma, tmp_path / "sigma.csv")
    prior = tmp_path / "prior.json"
    prior.write_text(json.dumps({"type": "constant", "value": [[float(sigma[0, 0])]]}))
    out = tmp_path / "out"
    code = main(
        ["estimate", "--psi-config", str(prior), "--bank", str(bank_file), "--sigma", str(sigma_path),
         "--grid", "512", "--kl", "--out", str(out)]
    )
    assert code == 0
    summaries = json.loads(capsys.readouterr().out)
    assert summaries[0]["label"] == "kl"
    assert summaries[0]["divergence_type"] == "kl"
    assert (out / "phi_kl.csv").exists()


def test_estimate_rejects_covariance_outside_range(rng, bank_file, tmp_path):
    grid = spectra_service.make_grid(512)
    psi = spectra_service.write_spectrum_csv(spectra_service.constant_spectrum(1.0, grid), tmp_path / "psi.csv")
    sigma = spectra_service.write_matrix_csv(np.diag(np.arange(1.0, 7.0)), tmp_path / "sigma.csv")
    code = main(["estimate", "--psi", str(psi), "--bank", str(bank_file), "--sigma", str(sigma), "--out", str(tmp_path)])
    assert code == 6


def test_estimate_missing_bank(spectrum_files, tmp_path):
    phi, _ = spectrum_files
    sigma = spectra_service.write_matrix_csv(np.eye(6), tmp_path / "sigma.csv")
    code = main(["estimate", "--psi", str(phi), "--bank", str(tmp_path / "none.json"), "--sigma", str(sigma)])
    assert code == 2


def test_reproduce(tmp_path, capsys):
    out = tmp_path / "arma"
    assert main(["reproduce", "--experiment", "arma", "--grid", "512", "--nu", "1", "--nu", "2", "--out", str(out)]) == 0
    summaries = json.loads(capsys.readouterr().out)
    assert [item["label"] for item in summaries] == ["nu1", "nu2"]
    assert json.loads((out / "summary.json").read_text())["experiment"] == "arma"


def test_reproduce_unknown_experiment():
    with pytest.raises(SystemExit) as excinfo:
        main(["reproduce", "--experiment", "unknown"])
    assert excinfo.value.code == 2


def test_show_defaults(monkeypatch, capsys):
    monkeypatch.setenv("BETASPEC_NEWTON_MAX_ITER", "17")
    assert main(["--show-defaults"]) == 0
    defaults = json.loads(capsys.readouterr().out)
    assert defaults["NEWTON_MAX_ITER"] == 17
    assert defaults["GRID_SIZE"] == 2048


def test_no_command_prints_help():
    assert main([]) == 2


def test_covfit_rejects_indefinite_covariance(bank_file, tmp_path):
    sigma = spectra_service.write_matrix_csv(np.diag([1.0, 1.0, 1.0, 1.0, 1.0, -1.0]), tmp_path / "sigma.csv")
    assert main(["covfit", str(sigma), str(bank_file), "--grid", "512", "--out", str(tmp_path)]) == 4
