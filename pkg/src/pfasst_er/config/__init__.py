"""Loading, merging and validating run configurations."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import jsonschema
import yaml
from omegaconf import DictConfig, OmegaConf

from .run_config import (
    MODES,
    NODE_PARALLEL_MODES,
    PROBLEMS,
    PROFILES,
    SERIAL_MODES,
    ConfigError,
    RunConfig
)

__all__ = [
    "MODES", "NODE_PARALLEL_MODES", "PROBLEMS", "PROFILES", "SERIAL_MODES",
    "ConfigError", "RunConfig", "load_config", "dump_config", "config_to_yaml",
    "read_config_file", "logging_settings", "DEFAULT_CONFIG_PATH", "SCHEMA_PATH",
]

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / "default.yml"
SCHEMA_PATH = Path(__file__).parent / "schema.json"


def _defaults() -> DictConfig:
    return OmegaConf.load(DEFAULT_CONFIG_PATH)


def read_config_file(path: Union[str, Path]) -> DictConfig:
    """Read a YAML mapping or a ``key = value`` file.

    Raises:
        ConfigError: If the file is missing or malformed.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    if path.suffix in (".yml", ".yaml"):
        config = OmegaConf.load(path)
        if not isinstance(config, DictConfig):
            raise ConfigError(f"{path} does not contain a mapping")
        return config

    dotlist = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected 'key = value', got '{line}'")
        dotlist.append(f"{key.strip()}={value.strip()}")
    return OmegaConf.from_dotlist(dotlist)


def _check_keys(config: Mapping[str, Any], source: str) -> None:
    for key in config:
        if key not in RunConfig.keys():
            raise ConfigError(f"Unknown configuration key '{key}' in {source}", key=key)


def _check_schema(data: Dict[str, Any]) -> None:
    schema = json.loads(SCHEMA_PATH.read_text())
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as error:
        key = str(error.path[0]) if error.path else None
        raise ConfigError(f"Invalid value for '{key}': {error.message}", key=key) from error


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    profile: Optional[str] = None
) -> RunConfig:
    """Effective configuration of a run.

    Args:
        path: Optional config file, YAML or ``key = value`` lines.
        overrides: Settings that win over the file, typically CLI flags.
            ``None`` values are ignored.
        profile: Size profile, overrides any ``profile`` key.

    Returns:
        Validated ``RunConfig`` with every default filled in.

    Raises:
        ConfigError: Naming the offending key.
    """
    defaults = _defaults()
    file_config = read_config_file(path) if path is not None else OmegaConf.create({})
    _check_keys(file_config, str(path))
    flags = {
        key: str(value).strip("()") if isinstance(value, complex) else value
        for key, value in (overrides or {}).items() if value is not None
    }
    _check_keys(flags, "overrides")
    if profile is not None:
        flags["profile"] = profile
    user = OmegaConf.merge(file_config, OmegaConf.create(flags))

    problem = user.get("problem", defaults.run.problem)
    if problem not in defaults.problems:
        raise ConfigError(f"Unknown problem '{problem}', expected one of {PROBLEMS}", key="problem")
    profile = user.get("profile", defaults.run.profile)
    if profile not in defaults.profiles:
        raise ConfigError(f"Unknown profile '{profile}', expected one of {PROFILES}", key="profile")

    merged = OmegaConf.merge(
        defaults.run, defaults.problems[problem], defaults.profiles[profile], user
    )
    data = OmegaConf.to_container(merged, resolve=True)
    _check_schema(data)
    config = RunConfig.from_dict(data)
    logger.debug("Effective configuration: %s", config.to_dict())
    return config


def config_to_yaml(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def dump_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write ``config`` as YAML that ``load_config`` reads back unchanged."""
    path = Path(path)
    path.write_text(config_to_yaml(config))
    return path


def logging_settings() -> Dict[str, Any]:
    """The ``logging`` section of the packaged defaults."""
    return OmegaConf.to_container(_defaults().logging, resolve=True)
