"""Scalar Dahlquist test equation ``u' = lambda u``."""

from typing import Any, Dict, Optional, Union

import numpy as np

from ..spatial import Field, Mesh2D
from .base import JacobianOperator, Problem


class DahlquistJacobian(JacobianOperator):

    def __init__(self, u0: Field, lam: complex):
        super().__init__(u0)
        self.lam = lam

    def apply(self, w: Field) -> Field:
        return self.lam * w


class Dahlquist(Problem):
    """Linear scalar problem with fields of shape ``(1,)`` and identity transfers."""

    name = "dahlquist"
    components = 1

    def __init__(self, lam: Union[float, complex] = -1.0, u0: float = 1.0):
        super().__init__(None)
        self.lam = lam
        self.u0 = u0
        self.dtype = complex if isinstance(lam, complex) else float

    def eval_f(self, u: Field) -> Field:
        return self.lam * u

    def jacobian_at(self, u0: Field) -> DahlquistJacobian:
        return DahlquistJacobian(u0, self.lam)

    def initial_condition(self) -> Field:
        return np.full((1,), self.u0, dtype=self.dtype)

    def exact(self, t: float) -> Field:
        return self.u0 * np.exp(self.lam * t) * np.ones((1,), dtype=self.dtype)

    def on_mesh(self, mesh: Optional[Mesh2D]) -> "Dahlquist":
        return Dahlquist(self.lam, self.u0)

    def parameters(self) -> Dict[str, Any]:
        return {"lambda": self.lam}
