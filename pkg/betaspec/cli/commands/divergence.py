import argparse
import logging

from betaspec.cli.models import DivergenceRequest
from betaspec.services import spectra_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("divergence", help="Beta divergence between two spectrum files")
    parser.add_argument("phi", help="spectrum CSV or JSON")
    parser.add_argument("psi", help="spectrum CSV or JSON")
    choice = parser.add_mutually_exclusive_group(required=True)
    choice.add_argument("--beta", type=float, help="any real beta")
    choice.add_argument("--nu", type=int, help="positive integer nu, beta = 1 - 1/nu")
    choice.add_argument("--kl", action="store_true", help="Kullback-Leibler divergence (beta = 1)")
    choice.add_argument("--is", dest="itakura_saito", action="store_true", help="Itakura-Saito divergence (beta = 0)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """Print S_beta(phi || psi) with 12 decimals"""
    request = DivergenceRequest.model_validate(vars(args))
    phi = spectra_service.read_spectrum(request.phi)
    psi = spectra_service.read_spectrum(request.psi)
    beta = request.resolved_beta
    value = spectra_service.beta_divergence(phi, psi, beta)
    logger.info(f"S_beta(phi || psi) with beta={beta:g}: {value:.12e}")
    print(f"{value:.12f}")
    return 0
