import argparse
import json
import logging
import sys
import traceback
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from betaspec.cli.router import register_commands
from betaspec.core.config import get_settings
from betaspec.core.exceptions import BetaSpecError
from betaspec.core.logging import setup_logging, timed

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_CODES = """exit codes:
  0  success
  1  unexpected error
  2  parse or configuration error
  3  dimension or grid mismatch
  4  matrix not positive definite
  5  solver failure
  6  covariance outside Range Gamma"""


def create_parser() -> argparse.ArgumentParser:
    """Create and configure the command-line parser"""
    parser = argparse.ArgumentParser(
        prog="betaspec",
        description="Multivariate spectral estimation with the Beta divergence family",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--show-defaults", dest="show_defaults", action="store_true", help="print numeric defaults and exit")
    subparsers = parser.add_subparsers(dest="command")
    register_commands(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.LOG_LEVEL)

    if args.show_defaults:
        print(json.dumps(settings.model_dump(), indent=2))
        return 0
    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return 2

    try:
        with timed(args.command):
            return args.handler(args)
    except BetaSpecError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        logger.debug(traceback.format_exc())
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid input: {str(e)}")
        return 2
    except Exception as e:
        logger.error(f"Unhandled exception: {e}")
        logger.error(traceback.format_exc())
        return 1
