"""Validated run configuration."""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Union

MODES = ("SL-SDC", "MLSDC", "PFASST", "PFASST-ER-Qdelta", "PFASST-ER-Q")
SERIAL_MODES = ("SL-SDC", "MLSDC")
NODE_PARALLEL_MODES = ("PFASST-ER-Qdelta", "PFASST-ER-Q")
PROBLEMS = ("allen-cahn", "gray-scott", "dahlquist")
PROFILES = ("desk", "full")
RESIDUAL_TYPES = ("absolute", "relative")

Scalar = Union[float, complex]


def parse_lambda(value: Any) -> Scalar:
    """Dahlquist eigenvalue from a number or a string such as ``-1+3j``."""
    if isinstance(value, str):
        try:
            value = complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"Cannot parse '{value}' as a number", key="dahlquist_lambda")
    if isinstance(value, complex):
        return value.real if value.imag == 0 else value
    return float(value)


@dataclass
class RunConfig:
    """Every setting of a single run.

    ``block_size`` is the number of time-steps iterated together; the steps of
    a block are spread over ``p_steps`` step-workers. ``None`` for
    ``block_size`` or ``n_coarse`` means the derived default.
    """
    problem: str = "allen-cahn"
    mode: str = "PFASST-ER-Q"
    profile: str = "desk"
    total_steps: int = 8
    dt: float = 1e-3
    num_nodes: int = 4
    n_fine: int = 64
    n_coarse: Optional[int] = None
    p_steps: int = 1
    p_nodes: int = 1
    block_size: Optional[int] = None
    tol_outer: float = 1e-10
    max_outer: int = 100
    tol_newton: float = 1e-11
    newton_max: int = 50
    n_qn: int = 1
    qn_tol: float = 0.0
    qn_initial_guess: str = "previous"
    qdelta: str = "LU"
    gmres_tol: float = 1e-12
    gmres_restart: int = 30
    gmres_maxiter: int = 200
    residual_type: str = "absolute"
    lock_converged: bool = True
    predictor: bool = False
    eps: float = 0.04
    radius: float = 0.25
    ac_reaction: str = "printed"
    ac_radial_distance: bool = False
    du: float = 1e-4
    dv: float = 1e-5
    feed: float = 0.0367
    kill: float = 0.0649
    gs_coupling: str = "printed"
    dahlquist_lambda: Scalar = -1.0
    progress_timeout: float = 300.0

    def __post_init__(self):
        self.dahlquist_lambda = parse_lambda(self.dahlquist_lambda)
        if self.block_size is None:
            self.block_size = self.p_steps
        if self.n_coarse is None:
            self.n_coarse = self.n_fine // 2

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Build and validate a configuration.

        Raises:
            ConfigError: For unknown keys or inconsistent settings.
        """
        for key in data:
            if key not in cls.keys():
                raise ConfigError(f"Unknown configuration key '{key}'", key=key)
        config = cls(**data)
        config.validate()
        return config

    @property
    def cores(self) -> int:
        return self.p_steps * self.p_nodes

    @property
    def multilevel(self) -> bool:
        return self.mode != "SL-SDC"

    def validate(self) -> None:
        """Check the rules that couple several settings.

        Raises:
            ConfigError: Naming the first offending key.
        """
        if self.mode not in MODES:
            raise ConfigError(f"Unknown mode '{self.mode}', expected one of {MODES}", key="mode")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"Unknown problem '{self.problem}'", key="problem")
        if self.n_fine < 4 or self.n_fine % 2:
            raise ConfigError(f"n_fine must be even and at least 4, got {self.n_fine}", key="n_fine")
        if self.multilevel and self.n_coarse != self.n_fine // 2:
            raise ConfigError(
                f"n_coarse must be n_fine/2 = {self.n_fine // 2}, got {self.n_coarse}", key="n_coarse"
            )
        if not 1 <= self.p_nodes <= self.num_nodes:
            raise ConfigError(
                f"p_nodes must be in 1..{self.num_nodes}, got {self.p_nodes}", key="p_nodes"
            )
        if self.p_nodes > 1 and self.mode not in NODE_PARALLEL_MODES:
            raise ConfigError(f"Mode {self.mode} cannot use p_nodes > 1", key="p_nodes")
        if self.mode in SERIAL_MODES and self.p_steps != 1:
            raise ConfigError(f"Mode {self.mode} requires p_steps = 1", key="p_steps")
        if self.mode in SERIAL_MODES and self.block_size != 1:
            raise ConfigError(f"Mode {self.mode} requires block_size = 1", key="block_size")
        if self.block_size % self.p_steps:
            raise ConfigError(
                f"block_size {self.block_size} is not a multiple of p_steps {self.p_steps}",
                key="block_size"
            )
        if self.total_steps % self.block_size:
            raise ConfigError(
                f"block_size {self.block_size} does not divide total_steps {self.total_steps}",
                key="block_size"
            )

    def to_dict(self) -> Dict[str, Any]:
        """Plain mapping that ``load_config`` reads back to an equal config."""
        data = asdict(self)
        if isinstance(self.dahlquist_lambda, complex):
            data["dahlquist_lambda"] = str(self.dahlquist_lambda).strip("()")
        return data

    def replace(self, **changes: Any) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        if "p_steps" in changes and "block_size" not in changes:
            data["block_size"] = None
        return RunConfig.from_dict(data)


class ConfigError(ValueError):
    """Exception raised for an invalid configuration.

    Attributes:
        key: The offending configuration key, if known.
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
