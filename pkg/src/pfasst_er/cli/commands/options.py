"""Options shared by the commands that build a configuration."""

from typing import Any, Callable, Dict, Optional, Sequence

import click
import yaml

from ...config import PROBLEMS, PROFILES, ConfigError, RunConfig, load_config


def parse_settings(settings: Sequence[str]) -> Dict[str, Any]:
    """``key=value`` pairs of ``--set`` with YAML-typed values."""
    parsed = {}
    for item in settings:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Expected key=value, got '{item}'")
        parsed[key.strip()] = yaml.safe_load(value.strip()) if value.strip() else None
    return parsed


def config_options(command: Callable) -> Callable:
    """Decorate ``command`` with the configuration flags."""
    decorators = [
        click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='Config file, YAML or key = value lines.'),
        click.option('--profile', type=click.Choice(PROFILES), help='Problem size profile.'),
        click.option('--problem', type=click.Choice(PROBLEMS), help='Benchmark problem.'),
        click.option('--p-steps', type=int, help='Step-workers.'),
        click.option('--p-nodes', type=int, help='Node-workers per step.'),
        click.option('--block-size', type=int, help='Time-steps iterated together.'),
        click.option('--total-steps', type=int, help='Number of time-steps.'),
        click.option('--dt', type=float, help='Time-step size.'),
        click.option('--n-fine', type=int, help='Fine mesh points per direction.'),
        click.option('--tol', 'tol_outer', type=float, help='Outer residual tolerance.'),
        click.option('--set', '-s', 'settings', multiple=True, metavar='KEY=VALUE',
                     help='Any configuration key. Can be specified multiple times.'),
    ]
    for decorator in reversed(decorators):
        command = decorator(command)
    return command


def build_config(
    config_path: Optional[str],
    profile: Optional[str],
    settings: Sequence[str],
    mode: Optional[str] = None,
    **flags: Any
) -> RunConfig:
    """Effective configuration from the file, the ``--set`` pairs and the flags."""
    overrides = parse_settings(settings)
    overrides.update({key: value for key, value in flags.items() if value is not None})
    if mode is not None:
        overrides["mode"] = mode
    return load_config(config_path, overrides, profile)
