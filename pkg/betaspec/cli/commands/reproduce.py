import argparse
import json
import logging
from pathlib import Path

from betaspec.cli.models import EstimateSummary, ReproduceRequest
from betaspec.core.config import get_settings
from betaspec.models.domain.experiment import ExperimentConfig
from betaspec.services import simlab_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("reproduce", help="Run a committed or custom experiment end to end")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--experiment", choices=simlab_service.EXPERIMENTS, help="committed experiment")
    source.add_argument("--config", help="experiment JSON file")
    parser.add_argument("--nu", dest="nus", type=int, action="append", help="override the nu list, repeatable")
    parser.add_argument("--grid", type=int, help="grid size")
    parser.add_argument("--eps", type=float, help="gradient norm threshold")
    parser.add_argument("--alpha", type=float, help="backtracking parameter in (0, 1/2)")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="Newton iteration limit")
    parser.add_argument("--seed", type=int, help="simulation seed")
    parser.add_argument("--out", help="output directory (default: OUTPUT_DIR/<experiment name>)")
    parser.set_defaults(handler=run)


def apply_overrides(config: ExperimentConfig, request: ReproduceRequest) -> ExperimentConfig:
    """Re-validate the experiment with command-line values taking precedence"""
    updates = {
        "nus": request.nus,
        "grid_size": request.grid,
        "eps": request.eps,
        "alpha": request.alpha,
        "max_iter": request.max_iter,
        "seed": request.seed,
    }
    payload = config.model_dump()
    payload.update({key: value for key, value in updates.items() if value is not None})
    return ExperimentConfig.model_validate(payload)


def run(args: argparse.Namespace) -> int:
    request = ReproduceRequest.model_validate(vars(args))
    if request.config is not None:
        config = simlab_service.load_experiment_config(request.config)
    else:
        config = simlab_service.load_experiment(request.experiment)
    config = apply_overrides(config, request)
    out_dir = request.out or Path(get_settings().OUTPUT_DIR) / config.name
    logger.info(f"reproducing {config.name} ({config.mode}) for nu in {config.nus}")

    result = simlab_service.run_experiment(config)
    simlab_service.write_experiment_outputs(result, out_dir)
    summaries = [
        EstimateSummary(
            label=f"nu{item.nu}",
            divergence=item.divergence,
            residual=item.residual,
            iterations=item.iterations,
            peak=item.peak,
            spectrum=str(out_dir / f"phi_nu{item.nu}.csv"),
            report=str(out_dir / f"report_nu{item.nu}.json"),
        )
        for item in result.results
    ]
    print(json.dumps([summary.model_dump() for summary in summaries], indent=2))
    return 0
