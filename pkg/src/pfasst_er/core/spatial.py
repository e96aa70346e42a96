"""Uniform periodic 2-D meshes, the 5-point Laplacian and grid transfers.

Fields are numpy arrays whose last two axes are the ``(n, n)`` mesh points.
Any leading axes (PDE components, collocation nodes) are carried along, so
the same functions act on a single component, a multi-component field and a
whole collection of node values.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

BOUNDARY_CONDITIONS = ("periodic",)

Field = np.ndarray


@dataclass(frozen=True)
class Mesh2D:
    """Uniform cell-vertex mesh on a rectangle.

    Periodic meshes store ``n`` points per dimension, ``x_i = x_min + i * dx``
    for ``i = 0 .. n - 1``; the point at ``x_max`` is the periodic image of
    the point at ``x_min``.
    """
    n: int
    domain: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    bc: str = "periodic"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise MeshError(f"Mesh size must be an even integer >= 4, got {self.n}")
        x_min, x_max, y_min, y_max = self.domain
        if not (x_max > x_min and y_max > y_min):
            raise MeshError(f"Degenerate mesh domain {self.domain}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise MeshError(f"Unsupported boundary condition '{self.bc}'")

    @property
    def dx(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.n

    @property
    def dy(self) -> float:
        return (self.domain[3] - self.domain[2]) / self.n

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` point coordinates with ``ij`` indexing."""
        x = self.domain[0] + self.dx * np.arange(self.n)
        y = self.domain[2] + self.dy * np.arange(self.n)
        return np.meshgrid(x, y, indexing="ij")

    def coarsen(self) -> "Mesh2D":
        """Mesh with every second point, on the same domain."""
        return Mesh2D(self.n // 2, self.domain, self.bc)

    def check(self, u: Field) -> None:
        """Raise MeshError unless the trailing axes of ``u`` live on this mesh."""
        if np.ndim(u) < 2 or np.shape(u)[-2:] != self.shape:
            raise MeshError(
                f"Field of shape {np.shape(u)} does not live on a {self.n}x{self.n} mesh"
            )


def apply_laplacian(u: Field, mesh: Mesh2D) -> Field:
    """Second-order 5-point Laplacian with periodic wraparound.

    Works on real and complex arrays and on any number of leading axes.
    """
    mesh.check(u)
    lap_x = (np.roll(u, 1, axis=-2) - 2.0 * u + np.roll(u, -1, axis=-2)) / mesh.dx**2
    lap_y = (np.roll(u, 1, axis=-1) - 2.0 * u + np.roll(u, -1, axis=-1)) / mesh.dy**2
    return lap_x + lap_y


def laplacian_symbol(mesh: Mesh2D, kx: int, ky: int) -> float:
    """Eigenvalue of the periodic stencil for the Fourier mode ``(kx, ky)``."""
    x_len = mesh.domain[1] - mesh.domain[0]
    y_len = mesh.domain[3] - mesh.domain[2]
    return (
        -2.0 / mesh.dx**2 * (1.0 - np.cos(2.0 * np.pi * kx * mesh.dx / x_len))
        - 2.0 / mesh.dy**2 * (1.0 - np.cos(2.0 * np.pi * ky * mesh.dy / y_len))
    )


def _full_weight_1d(u: Field, axis: int) -> Field:
    return 0.25 * (np.roll(u, 1, axis=axis) + 2.0 * u + np.roll(u, -1, axis=axis))


def restrict(u: Field, fine: Mesh2D) -> Field:
    """Full-weighting restriction onto ``fine.coarsen()``.

    The 3x3 weights ``(1 2 1; 2 4 2; 1 2 1) / 16`` are applied around every
    even-indexed fine point.

    Raises:
        MeshError: If ``u`` does not live on ``fine``.
    """
    fine.check(u)
    smoothed = _full_weight_1d(_full_weight_1d(u, -2), -1)
    return np.ascontiguousarray(smoothed[..., ::2, ::2])


def _linear_1d(u: Field, axis: int) -> Field:
    shape = list(u.shape)
    shape[axis] *= 2
    out = np.zeros(shape, dtype=u.dtype)
    even = [slice(None)] * u.ndim
    odd = [slice(None)] * u.ndim
    even[axis] = slice(0, None, 2)
    odd[axis] = slice(1, None, 2)
    out[tuple(even)] = u
    out[tuple(odd)] = 0.5 * (u + np.roll(u, -1, axis=axis))
    return out


def interpolate(u: Field, fine: Mesh2D) -> Field:
    """Bilinear periodic interpolation from ``fine.coarsen()`` onto ``fine``.

    Coincident points are copied exactly.

    Raises:
        MeshError: If ``u`` does not live on the coarse mesh of ``fine``.
    """
    coarse = fine.coarsen()
    coarse.check(u)
    return _linear_1d(_linear_1d(np.asarray(u), -2), -1)


def inner_product(u: Field, w: Field, mesh: Mesh2D) -> float:
    """Mesh-weighted inner product ``dx * dy * sum(u * conj(w))``."""
    mesh.check(u)
    mesh.check(w)
    return mesh.dx * mesh.dy * np.vdot(w, u)


class MeshError(ValueError):
    """Exception raised for invalid meshes or fields on the wrong mesh."""
    pass
