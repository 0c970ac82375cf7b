import argparse

from betaspec.cli.commands import covfit, divergence, estimate, reproduce


def register_commands(subparsers: argparse._SubParsersAction) -> None:
    """Attach every subcommand parser; each sets `handler` in its defaults"""
    divergence.register(subparsers)
    covfit.register(subparsers)
    estimate.register(subparsers)
    reproduce.register(subparsers)
