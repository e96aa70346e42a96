"""Gray-Scott reaction-diffusion system on the periodic unit square."""

from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np

from ..spatial import Field, Mesh2D, apply_laplacian
from .base import JacobianOperator, Problem

COUPLINGS = ("printed", "classical")
DOMAIN = (0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class GrayScottParams:
    """Gray-Scott parameters.

    ``coupling`` selects the reaction term: ``printed`` uses ``2 u v``,
    ``classical`` uses ``u v^2``.
    """
    du: float = 1e-4
    dv: float = 1e-5
    feed: float = 0.0367
    kill: float = 0.0649
    coupling: str = "printed"
    spot_radius: float = 0.05

    def __post_init__(self):
        for key in ("du", "dv", "feed", "kill"):
            if getattr(self, key) < 0:
                raise ValueError(f"Gray-Scott parameter {key} must be nonnegative")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"Unknown Gray-Scott coupling '{self.coupling}'")


class GrayScottJacobian(JacobianOperator):
    """Block Jacobian acting on ``(w_u, w_v)``."""

    def __init__(self, u0: Field, problem: "GrayScott"):
        super().__init__(u0)
        self.mesh = problem.mesh
        self.params = problem.params
        u, v = self.u0[0], self.u0[1]
        # partial derivatives of the coupling term c(u, v)
        if self.params.coupling == "classical":
            self.dc_du, self.dc_dv = v * v, 2.0 * u * v
        else:
            self.dc_du, self.dc_dv = 2.0 * v, 2.0 * u

    def apply(self, w: Field) -> Field:
        p = self.params
        wu, wv = w[..., 0, :, :], w[..., 1, :, :]
        coupling = self.dc_du * wu + self.dc_dv * wv
        out = np.empty_like(w)
        out[..., 0, :, :] = p.du * apply_laplacian(wu, self.mesh) - coupling - p.feed * wu
        out[..., 1, :, :] = p.dv * apply_laplacian(wv, self.mesh) + coupling - (p.feed + p.kill) * wv
        return out

    def shifted_preconditioner(self, shift: complex) -> Callable[[Field], Field]:
        """Point-block Jacobi inverse of ``I - shift f'(u0)``.

        Each grid point keeps its 2x2 reaction block plus the diagonal of the
        Laplacian stencil, which is exact when both diffusion constants vanish.
        Points whose block is singular to machine precision are left unscaled.
        """
        p = self.params
        stencil = -2.0 / self.mesh.dx**2 - 2.0 / self.mesh.dy**2
        a = 1.0 - shift * (p.du * stencil - self.dc_du - p.feed)
        b = shift * self.dc_dv
        c = -shift * self.dc_du
        d = 1.0 - shift * (p.dv * stencil + self.dc_dv - p.feed - p.kill)
        det = a * d - b * c
        scale = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(c), np.abs(d)]) ** 2
        singular = np.abs(det) <= np.finfo(float).eps * scale
        det = np.where(singular, 1.0, det)
        inv_a = np.where(singular, 1.0, d / det)
        inv_b = np.where(singular, 0.0, -b / det)
        inv_c = np.where(singular, 0.0, -c / det)
        inv_d = np.where(singular, 1.0, a / det)

        def solve(w: Field) -> Field:
            wu, wv = w[..., 0, :, :], w[..., 1, :, :]
            out = np.empty(np.shape(w), dtype=np.result_type(w, inv_a))
            out[..., 0, :, :] = inv_a * wu + inv_b * wv
            out[..., 1, :, :] = inv_c * wu + inv_d * wv
            return out

        return solve


class GrayScott(Problem):
    """Two-component Gray-Scott problem, component 0 is ``u`` and 1 is ``v``."""

    name = "gray-scott"
    components = 2

    def __init__(self, mesh: Mesh2D, params: Optional[GrayScottParams] = None):
        super().__init__(mesh)
        self.params = params or GrayScottParams()

    def coupling(self, u: Field, v: Field) -> Field:
        if self.params.coupling == "classical":
            return u * v * v
        return 2.0 * u * v

    def eval_f(self, u: Field) -> Field:
        p = self.params
        uu, vv = u[..., 0, :, :], u[..., 1, :, :]
        coupling = self.coupling(uu, vv)
        out = np.empty_like(u)
        out[..., 0, :, :] = p.du * apply_laplacian(uu, self.mesh) - coupling + p.feed * (1.0 - uu)
        out[..., 1, :, :] = p.dv * apply_laplacian(vv, self.mesh) + coupling - (p.feed + p.kill) * vv
        return out

    def jacobian_at(self, u0: Field) -> GrayScottJacobian:
        return GrayScottJacobian(u0, self)

    def initial_condition(self) -> Field:
        """Spot of ``u = 0.5, v = 0.25`` around the domain center, ``u = 1, v = 0`` elsewhere."""
        X, Y = self.mesh.coordinates()
        x_c = 0.5 * (self.mesh.domain[0] + self.mesh.domain[1])
        y_c = 0.5 * (self.mesh.domain[2] + self.mesh.domain[3])
        inside = np.hypot(X - x_c, Y - y_c) <= self.params.spot_radius
        u = np.where(inside, 0.5, 1.0)
        v = np.where(inside, 0.25, 0.0)
        return np.stack([u, v])

    def on_mesh(self, mesh: Optional[Mesh2D]) -> "GrayScott":
        return GrayScott(mesh, self.params)

    def parameters(self) -> Dict[str, Any]:
        return asdict(self.params)
