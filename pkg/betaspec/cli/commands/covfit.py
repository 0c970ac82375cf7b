import argparse
import logging

from betaspec.cli.models import BankFile, CovfitRequest
from betaspec.core.config import get_settings
from betaspec.core.exceptions import SolverError
from betaspec.services import covfit_service, filterbank_service, spectra_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("covfit", help="Closest structured state covariance to a sample covariance")
    parser.add_argument("sigma", help="headerless CSV of the sample state covariance")
    parser.add_argument("bank", help="JSON bank configuration")
    parser.add_argument("--nu", type=int, default=1, help="divergence index (default: 1)")
    parser.add_argument("--kl", action="store_true", help="use the matrix Kullback-Leibler divergence")
    parser.add_argument("--grid", type=int, help="grid size used to build the bank")
    parser.add_argument("--eps", type=float, help="relative stationarity threshold")
    parser.add_argument("--alpha", type=float, help="backtracking parameter in (0, 1/2)")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="Newton iteration limit")
    parser.add_argument("--out", default=get_settings().OUTPUT_DIR, help="output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """Write covfit.json and covfit_P.csv; a partial result is written before a solver failure propagates"""
    request = CovfitRequest.model_validate(vars(args))
    bank_file = BankFile.load(request.bank)
    grid = spectra_service.make_grid(request.grid or bank_file.grid_size)
    bank = filterbank_service.build_bank(bank_file.bank, grid)
    sigma = spectra_service.read_matrix_csv(request.sigma)
    try:
        result = covfit_service.solve_covfit(
            sigma,
            bank,
            nu=request.nu,
            divergence="kl" if request.kl else "beta",
            eps=request.eps,
            alpha=request.alpha,
            max_iter=request.max_iter,
        )
    except SolverError as e:
        partial = getattr(e, "result", None)
        if partial is not None:
            path = spectra_service.write_json(partial.model_dump(mode="json"), request.out / "covfit.json")
            logger.warning(f"solver stopped early, partial result written to {path}")
        raise
    path = spectra_service.write_json(result.model_dump(mode="json"), request.out / "covfit.json")
    spectra_service.write_matrix_csv(result.P, request.out / "covfit_P.csv")
    print(path)
    return 0
