"""Problem definitions and the factory that builds them from a run configuration."""

from typing import Any, Optional

from ..spatial import Mesh2D
from .allen_cahn import AllenCahn, AllenCahnJacobian, AllenCahnParams
from .base import JacobianOperator, Problem
from .dahlquist import Dahlquist, DahlquistJacobian
from .gray_scott import GrayScott, GrayScottJacobian, GrayScottParams
from . import allen_cahn, gray_scott

PROBLEMS = ("allen-cahn", "gray-scott", "dahlquist")

__all__ = [
    "AllenCahn",
    "AllenCahnJacobian",
    "AllenCahnParams",
    "Dahlquist",
    "DahlquistJacobian",
    "GrayScott",
    "GrayScottJacobian",
    "GrayScottParams",
    "JacobianOperator",
    "PROBLEMS",
    "Problem",
    "make_problem",
]


def make_problem(config: Any, n: Optional[int] = None) -> Problem:
    """Build the configured problem on an ``n x n`` mesh.

    Args:
        config: Object with the run configuration attributes.
        n: Mesh size, defaults to ``config.n_fine``.

    Returns:
        The problem instance.

    Raises:
        ValueError: If the problem name is unknown.
    """
    n = config.n_fine if n is None else n
    if config.problem == "allen-cahn":
        params = AllenCahnParams(
            eps=config.eps,
            radius=config.radius,
            reaction=config.ac_reaction,
            radial_distance=config.ac_radial_distance,
        )
        return AllenCahn(Mesh2D(n, allen_cahn.DOMAIN), params)
    if config.problem == "gray-scott":
        params = GrayScottParams(
            du=config.du,
            dv=config.dv,
            feed=config.feed,
            kill=config.kill,
            coupling=config.gs_coupling,
        )
        return GrayScott(Mesh2D(n, gray_scott.DOMAIN), params)
    if config.problem == "dahlquist":
        return Dahlquist(config.dahlquist_lambda)
    raise ValueError(f"Unknown problem '{config.problem}', expected one of {PROBLEMS}")
