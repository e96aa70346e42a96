"""CLI command for running benchmark cells."""

import sys
from typing import Optional, Sequence

import click
from rich.console import Console

from ...config import MODES, NODE_PARALLEL_MODES, SERIAL_MODES, ConfigError, logging_settings
from ...core.utils.logging_utils import setup_logging
from ...tools.experiment_tool import ExperimentError, ExperimentTool
from .options import build_config, config_options

EXIT_CONVERGED = 0
EXIT_CONFIG_ERROR = 1
EXIT_UNCONVERGED = 2

STEP_PARALLEL_MODES = tuple(mode for mode in MODES if mode not in SERIAL_MODES)


def base_mode(modes: Sequence[str]) -> Optional[str]:
    """Requested mode whose layout rules admit every layout flag.

    Serial modes reject ``p_steps > 1`` and only PFASST-ER modes accept
    ``p_nodes > 1``; the other modes are normalised per cell afterwards.
    """
    for admissible in (NODE_PARALLEL_MODES, STEP_PARALLEL_MODES):
        for mode in modes:
            if mode in admissible:
                return mode
    return modes[0] if modes else None


@click.command()
@config_options
@click.option(
    '--mode',
    '-m',
    'modes',
    multiple=True,
    type=click.Choice(MODES),
    help='Mode to run. Can be specified multiple times.'
)
@click.option(
    '--sweep',
    is_flag=True,
    help='Run every admissible (p_steps, p_nodes) layout.'
)
@click.option(
    '--fixed-block',
    is_flag=True,
    help='Keep block_size fixed while sweeping p_steps.'
)
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help='Write CSV stats here.')
@click.option('--json', 'json_path', type=click.Path(dir_okay=False), help='Write JSON stats here.')
@click.option(
    '--output-format',
    '-f',
    type=click.Choice(['text', 'csv', 'json']),
    default='text',
    help='Format of the results printed to stdout.'
)
@click.option('--verbose', '-v', is_flag=True, help='Log every iteration.')
def run(
    config_path: Optional[str],
    profile: Optional[str],
    settings: Sequence[str],
    modes: Sequence[str],
    sweep: bool,
    fixed_block: bool,
    csv_path: Optional[str],
    json_path: Optional[str],
    output_format: str,
    verbose: bool,
    **flags
):
    """Run one benchmark cell, or a sweep of cells.

    Exits with 0 when every cell converged, 2 when any did not and 1 for an
    invalid configuration.
    """
    log = logging_settings()
    setup_logging("DEBUG" if verbose else log["level"], log["format"], log["file"])
    try:
        config = build_config(config_path, profile, settings, base_mode(modes), **flags)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    tool = ExperimentTool()
    try:
        records = tool.run_experiment(config, modes or None, sweep=sweep, fixed_block=fixed_block)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except ExperimentError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CONFIG_ERROR if isinstance(e.__cause__, ValueError) else EXIT_UNCONVERGED)

    if csv_path:
        tool.emit_stats(records, csv_path, "csv")
    if json_path:
        tool.emit_stats(records, json_path, "json")

    if output_format == 'text':
        Console().print(tool.summary_table(records))
    else:
        click.echo(tool.format_stats(records, output_format), nl=False)

    sys.exit(EXIT_CONVERGED if all(r.converged for r in records) else EXIT_UNCONVERGED)
