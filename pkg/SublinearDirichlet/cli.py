# coding: utf-8
"""
Command line entry points: one subcommand per experiment kind
"""
import logging
import os
import sys
from typing import Optional

import click

from .experiments import (
    DEFAULT_OUT_DIR,
    EXIT_CONFIG,
    ConfigError,
    load_config,
    run_experiment,
)


_logger = logging.getLogger('cli')


def _setup_logging():
    logging.basicConfig(
        level=os.getenv("LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _common_options(func):
    options = [
        click.option('--config', 'config_path', required=True,
                     type=click.Path(dir_okay=False),
                     help="JSON experiment document"),
        click.option('--out', 'out_dir', default=None, type=click.Path(file_okay=False),
                     help=f"output directory (default: $SUBLINEAR_OUT_DIR or {DEFAULT_OUT_DIR})"),
        click.option('--seed', default=None, type=click.IntRange(0, 2 ** 64 - 1),
                     help="seed of the random instances"),
        click.option('--levels', default=None, type=click.IntRange(min=1),
                     help="number of refinement levels"),
        click.option('--jobs', default=None, type=click.IntRange(min=1),
                     help="worker threads of the sweeps"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run(kind: str, config_path: str, out_dir: Optional[str], manifest: Optional[str] = None,
         **overrides):
    try:
        config = load_config(config_path, {'kind': kind, **overrides})
    except ConfigError as exc:
        _logger.error("%s", exc)
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    outcome = run_experiment(config, out_dir=out_dir, manifest=manifest)
    click.echo(f"{kind}: status {outcome.status}, {len(outcome.files)} files in {outcome.out_dir}")
    if outcome.message:
        click.echo(outcome.message, err=True)
    sys.exit(outcome.status)


@click.group()
def main():
    """Numerical experiments on the sublinear Dirichlet problem
    -Lap u = mu u^q + nu in Omega, u = f on the boundary."""
    _setup_logging()


@main.command()
@_common_options
def solve(config_path, out_dir, seed, levels, jobs):
    """Monotone iteration from below or above, with refinement study"""
    _run('solve', config_path, out_dir, seed=seed, levels=levels, jobs=jobs)


@main.command()
@_common_options
def kato(config_path, out_dir, seed, levels, jobs):
    """Kato moduli of the mu of the config"""
    _run('kato', config_path, out_dir, seed=seed, levels=levels, jobs=jobs)


@main.command()
@_common_options
def threshold(config_path, out_dir, seed, levels, jobs):
    """Finite energy threshold sweep over alpha"""
    _run('threshold', config_path, out_dir, seed=seed, levels=levels, jobs=jobs)


@main.command()
@_common_options
@click.option('--manifest', default=None, type=click.Path(exists=True),
              help="manifest.json (or its directory) of an earlier run to re-hash")
def verify(config_path, out_dir, seed, levels, jobs, manifest):
    """Kernel properties, inequalities and solver estimates on random instances"""
    _run('verify', config_path, out_dir, manifest=manifest,
         seed=seed, levels=levels, jobs=jobs)


@main.command(name='green-test')
@_common_options
def green_test(config_path, out_dir, seed, levels, jobs):
    """Discrete Green function against its continuum properties"""
    _run('green-test', config_path, out_dir, seed=seed, levels=levels, jobs=jobs)
