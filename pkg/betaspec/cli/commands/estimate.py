import argparse
import json
import logging
from typing import List

import numpy as np

from betaspec.cli.models import BankFile, EstimateRequest, EstimateSummary, PriorFile
from betaspec.core.config import get_settings
from betaspec.core.exceptions import DimensionError
from betaspec.services import (
    covfit_service,
    filterbank_service,
    simlab_service,
    spectapprox_service,
    spectra_service,
)

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("estimate", help="Spectrum approximation from a prior, a bank and a covariance")
    prior = parser.add_mutually_exclusive_group(required=True)
    prior.add_argument("--psi", help="prior spectrum CSV or JSON")
    prior.add_argument("--psi-config", dest="psi_config", help="JSON prior description")
    parser.add_argument("--bank", required=True, help="JSON bank configuration")
    parser.add_argument("--sigma", required=True, help="headerless CSV of the state covariance")
    parser.add_argument("--nu", dest="nus", type=int, action="append", help="divergence index, repeatable")
    parser.add_argument("--kl", action="store_true", help="Kullback-Leibler criterion instead of S_nu")
    parser.add_argument("--fit-cov", dest="fit_cov", action="store_true", help="fit sigma onto Range Gamma first")
    parser.add_argument("--grid", type=int, help="grid size when the prior comes from --psi-config")
    parser.add_argument("--eps", type=float, help="gradient norm threshold")
    parser.add_argument("--alpha", type=float, help="backtracking parameter in (0, 1/2)")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="Newton iteration limit")
    parser.add_argument("--out", default=get_settings().OUTPUT_DIR, help="output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """Whiten, solve for every requested nu and write phi / report files"""
    payload = {key: value for key, value in vars(args).items() if value is not None}
    request = EstimateRequest.model_validate(payload)
    bank_file = BankFile.load(request.bank)
    if request.psi is not None:
        psi = spectra_service.read_spectrum(request.psi)
        grid = psi.grid
    else:
        grid = spectra_service.make_grid(request.grid or bank_file.grid_size)
        psi = None
    bank = filterbank_service.build_bank(bank_file.bank, grid)
    if psi is None:
        psi = simlab_service.prior_spectrum(PriorFile.load(request.psi_config).prior, grid, m=bank.m)
    if psi.dim != bank.m:
        raise DimensionError(f"prior dimension {psi.dim} does not match the bank input dimension {bank.m}")
    sigma = spectra_service.read_matrix_csv(request.sigma)
    basis = filterbank_service.range_gamma_basis(bank)

    runs = [("kl", 1)] if request.kl else [(f"nu{nu}", nu) for nu in request.nus]
    summaries: List[EstimateSummary] = []
    for label, nu in runs:
        target = sigma
        if request.fit_cov:
            fit = covfit_service.solve_covfit(sigma, bank, nu=nu, divergence="kl" if request.kl else "beta")
            target = filterbank_service.project(basis, fit.P)
        whitened = filterbank_service.whiten(bank, target, basis)
        phi, report = spectapprox_service.newton_solve(
            psi,
            whitened,
            nu=nu,
            eps=request.eps,
            alpha=request.alpha,
            max_iter=request.max_iter,
            divergence="kl" if request.kl else "beta",
        )
        spectrum_path = spectra_service.write_spectrum_csv(phi, request.out / f"phi_{label}.csv")
        report_path = spectra_service.write_json(report.model_dump(mode="json"), request.out / f"report_{label}.json")
        summaries.append(
            EstimateSummary(
                label=label,
                divergence_type=report.divergence_type,
                divergence=report.divergence,
                residual=report.constraint_residual,
                iterations=report.iteration_count,
                peak=spectra_service.peak(phi)[0],
                spectrum=str(spectrum_path),
                report=str(report_path),
            )
        )
        logger.info(f"estimate {label}: residual={report.constraint_residual:.3e}, |Lambda|={np.linalg.norm(report.multiplier.lam):.3e}")
    print(json.dumps([summary.model_dump() for summary in summaries], indent=2))
    return 0
