"""Base classes for right-hand sides and their frozen Jacobians."""

from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from ..spatial import Field, Mesh2D, interpolate, restrict


class JacobianOperator(ABC):
    """Linear action of ``f'(u0)`` for a frozen reference state ``u0``.

    Operators are immutable snapshots. ``apply`` accepts real or complex
    arrays with any number of leading axes in front of the field shape.
    """

    def __init__(self, u0: Field):
        self.u0 = np.array(u0, copy=True)
        self.u0.setflags(write=False)

    @abstractmethod
    def apply(self, w: Field) -> Field:
        """Return ``f'(u0) w``."""
        pass

    def __call__(self, w: Field) -> Field:
        return self.apply(w)

    def shifted_preconditioner(self, shift: complex) -> Optional[Callable[[Field], Field]]:
        """Approximate inverse of ``w -> w - shift f'(u0) w``, or ``None`` for none."""
        return None


class Problem(ABC):
    """Abstract base class for initial value problems ``u_t = f(u)``.

    A problem knows the shape of its fields, how to evaluate ``f`` on a
    single field or on a stack of node values, how to freeze its Jacobian
    and how to move fields between its mesh and a coarser one.
    """

    name: str = "problem"
    components: int = 1
    dtype: Any = float

    def __init__(self, mesh: Optional[Mesh2D] = None):
        self.mesh = mesh

    @property
    def field_shape(self) -> Tuple[int, ...]:
        """Shape of a single field."""
        if self.mesh is None:
            return (self.components,)
        return (self.components,) + self.mesh.shape

    @abstractmethod
    def eval_f(self, u: Field) -> Field:
        """Evaluate the right-hand side.

        Args:
            u: Field, or stack of fields with leading node axes.

        Returns:
            Array of the same shape as ``u``.
        """
        pass

    @abstractmethod
    def jacobian_at(self, u0: Field) -> JacobianOperator:
        """Freeze the Jacobian at ``u0``."""
        pass

    @abstractmethod
    def initial_condition(self) -> Field:
        """Initial value at ``t = 0``."""
        pass

    @abstractmethod
    def on_mesh(self, mesh: Optional[Mesh2D]) -> "Problem":
        """Same physics discretized on another mesh."""
        pass

    def parameters(self) -> Dict[str, Any]:
        return {}

    def zeros(self, leading: Tuple[int, ...] = ()) -> Field:
        return np.zeros(leading + self.field_shape, dtype=self.dtype)

    def norm(self, u: Field) -> float:
        """Maximum norm over all entries."""
        return float(np.max(np.abs(u))) if np.size(u) else 0.0

    def restrict_to(self, coarse: "Problem", u: Field) -> Field:
        """Restrict ``u`` from this problem's mesh to ``coarse``'s mesh, node-wise."""
        if self.mesh is None or coarse.mesh == self.mesh:
            return np.array(u, copy=True)
        return restrict(u, self.mesh)

    def interpolate_from(self, coarse: "Problem", u: Field) -> Field:
        """Interpolate ``u`` from ``coarse``'s mesh onto this problem's mesh, node-wise."""
        if self.mesh is None or coarse.mesh == self.mesh:
            return np.array(u, copy=True)
        return interpolate(u, self.mesh)

    def __repr__(self) -> str:
        n = self.mesh.n if self.mesh is not None else "-"
        return f"{type(self).__name__}(n={n}, {self.parameters()})"
