import sys
from typing import Optional, Sequence

import click

from ...config import MODES, ConfigError, config_to_yaml, dump_config
from .options import build_config, config_options


@click.command()
@config_options
@click.option('--mode', '-m', type=click.Choice(MODES), help='Run mode.')
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Write the YAML here.')
def config(
    config_path: Optional[str],
    profile: Optional[str],
    settings: Sequence[str],
    mode: Optional[str],
    output: Optional[str],
    **flags
):
    """Print the effective configuration as YAML."""
    try:
        effective = build_config(config_path, profile, settings, mode, **flags)
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(1)
    if output:
        dump_config(effective, output)
    click.echo(config_to_yaml(effective), nl=False)
