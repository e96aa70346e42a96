"""Allen-Cahn equation on the periodic square ``[-0.5, 0.5]^2``."""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np

from ..spatial import Field, Mesh2D, apply_laplacian
from .base import JacobianOperator, Problem

REACTIONS = ("printed", "cubic")
DOMAIN = (-0.5, 0.5, -0.5, 0.5)


@dataclass(frozen=True)
class AllenCahnParams:
    """Allen-Cahn parameters.

    Attributes:
        eps: Interface width.
        radius: Initial radius of the circle.
        reaction: ``printed`` for ``u (1 - u)``, ``cubic`` for ``u (1 - u^2)``.
        radial_distance: Use ``sqrt(x^2 + y^2)`` in the initial condition
            instead of ``x^2 + y^2``.
    """
    eps: float = 0.04
    radius: float = 0.25
    reaction: str = "printed"
    radial_distance: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"Interface width eps must be positive, got {self.eps}")
        if self.reaction not in REACTIONS:
            raise ValueError(f"Unknown Allen-Cahn reaction '{self.reaction}'")


class AllenCahnJacobian(JacobianOperator):
    """``w -> lap(w) + (1 / eps^2) r'(u0) w``."""

    def __init__(self, u0: Field, problem: "AllenCahn"):
        super().__init__(u0)
        self.mesh = problem.mesh
        self.coefficient = problem.reaction_derivative(self.u0)

    def apply(self, w: Field) -> Field:
        return apply_laplacian(w, self.mesh) + self.coefficient * w


class AllenCahn(Problem):
    """Single-component Allen-Cahn problem."""

    name = "allen-cahn"
    components = 1

    def __init__(self, mesh: Mesh2D, params: Optional[AllenCahnParams] = None):
        super().__init__(mesh)
        self.params = params or AllenCahnParams()

    def reaction(self, u: Field) -> Field:
        if self.params.reaction == "cubic":
            return u * (1.0 - u * u) / self.params.eps**2
        return u * (1.0 - u) / self.params.eps**2

    def reaction_derivative(self, u: Field) -> Field:
        if self.params.reaction == "cubic":
            return (1.0 - 3.0 * u * u) / self.params.eps**2
        return (1.0 - 2.0 * u) / self.params.eps**2

    def eval_f(self, u: Field) -> Field:
        return apply_laplacian(u, self.mesh) + self.reaction(u)

    def jacobian_at(self, u0: Field) -> AllenCahnJacobian:
        return AllenCahnJacobian(u0, self)

    def initial_condition(self) -> Field:
        """``tanh((R0 - d) / (sqrt(2) eps))`` with ``d = x^2 + y^2`` or its square root."""
        X, Y = self.mesh.coordinates()
        distance = X**2 + Y**2
        if self.params.radial_distance:
            distance = np.sqrt(distance)
        u = np.tanh((self.params.radius - distance) / (np.sqrt(2.0) * self.params.eps))
        return u[np.newaxis, :, :]

    def on_mesh(self, mesh: Optional[Mesh2D]) -> "AllenCahn":
        return AllenCahn(mesh, self.params)

    def parameters(self) -> Dict[str, Any]:
        return asdict(self.params)
