"""Collocation nodes and quadrature matrices.

This module builds the right-endpoint Gauss-Radau (Radau IIA) nodes of one
collocation interval, the integration matrix ``Q``, the triangular SDC
preconditioners ``Q_delta`` and the complex eigen-factorizations that allow
node-parallel Quasi-Newton sweeps. All matrices are stored normalized, i.e.
with the step size ``dt = t_right - t_left`` scaled out.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import roots_jacobi

logger = logging.getLogger(__name__)

QDELTA_TYPES = ("LU", "IE")

# Thresholds of the eigen-factorization
SEPARATION_TOL = 1e-10
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class Diagonalization:
    """Eigen-factorization ``A = V diag(eigenvalues) V_inv`` with complex factors."""
    V: np.ndarray
    eigenvalues: np.ndarray
    V_inv: np.ndarray
    condition: float
    reconstruction_error: float
    ill_conditioned: bool = False

    @property
    def Lambda(self) -> np.ndarray:
        """Diagonal matrix of eigenvalues."""
        return np.diag(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        """Multiply the factors back together."""
        return self.V @ self.Lambda @ self.V_inv


@dataclass(frozen=True)
class QuadratureRule:
    """Collocation rule for one interval.

    Attributes:
        M: Number of collocation nodes.
        t_left: Left interval boundary.
        t_right: Right interval boundary, equal to the last node.
        nodes: Node positions in ``(t_left, t_right]``.
        Q: Normalized collocation matrix.
        Q_delta: Normalized lower-triangular SDC preconditioner.
        diag_Q: Eigen-factorization of ``Q``.
        diag_Qdelta: Eigen-factorization of ``Q_delta``.
        qdelta_type: How ``Q_delta`` was built (``LU`` or ``IE``).
    """
    M: int
    t_left: float
    t_right: float
    nodes: np.ndarray
    Q: np.ndarray
    Q_delta: np.ndarray
    diag_Q: Diagonalization = field(repr=False)
    diag_Qdelta: Diagonalization = field(repr=False)
    qdelta_type: str = "LU"

    @classmethod
    def build(
        cls,
        M: int,
        t_left: float = 0.0,
        t_right: float = 1.0,
        qdelta_type: str = "LU"
    ) -> "QuadratureRule":
        """Construct the complete rule for ``M`` Radau IIA nodes.

        Args:
            M: Number of nodes.
            t_left: Left boundary.
            t_right: Right boundary.
            qdelta_type: ``LU`` for the LU trick, ``IE`` for implicit Euler.

        Returns:
            An immutable QuadratureRule.

        Raises:
            QuadratureError: If the arguments are invalid.
        """
        if qdelta_type not in QDELTA_TYPES:
            raise QuadratureError(
                f"Unknown Q_delta type '{qdelta_type}', expected one of {QDELTA_TYPES}"
            )
        nodes = np.asarray(radau_right_nodes(M, t_left, t_right))
        Q = build_Q(nodes, t_left, t_right)
        if qdelta_type == "LU":
            Q_delta = build_QDelta_LU(Q)
        else:
            Q_delta = build_QDelta_Euler(nodes, t_left, t_right)
        return cls(
            M=M,
            t_left=float(t_left),
            t_right=float(t_right),
            nodes=nodes,
            Q=Q,
            Q_delta=Q_delta,
            diag_Q=diagonalize(Q),
            diag_Qdelta=diagonalize(Q_delta),
            qdelta_type=qdelta_type,
        )

    @property
    def dt(self) -> float:
        return self.t_right - self.t_left

    @property
    def normalized_nodes(self) -> np.ndarray:
        """Node positions mapped to ``(0, 1]``."""
        return (self.nodes - self.t_left) / self.dt

    def diagonalization(self, variant: str) -> Diagonalization:
        """Return the factorization used by a Quasi-Newton variant (``Q`` or ``Qdelta``)."""
        if variant == "Q":
            return self.diag_Q
        if variant == "Qdelta":
            return self.diag_Qdelta
        raise QuadratureError(f"Unknown preconditioner variant '{variant}'")


def radau_right_nodes(M: int, t_left: float, t_right: float) -> List[float]:
    """Right-endpoint Gauss-Radau nodes on ``[t_left, t_right]``.

    The ``M - 1`` interior nodes on ``[-1, 1]`` are the Gauss-Jacobi
    abscissae for the weight ``(1 - x)``, computed by scipy as eigenvalues of
    the symmetric Jacobi matrix (Golub-Welsch). The right endpoint completes
    the rule.

    Args:
        M: Number of nodes, at least 1.
        t_left: Left boundary.
        t_right: Right boundary, strictly larger than ``t_left``.

    Returns:
        Strictly increasing node list whose last entry is ``t_right``.

    Raises:
        QuadratureError: If ``M < 1`` or ``t_left >= t_right``.
    """
    if int(M) != M or M < 1:
        raise QuadratureError(f"Number of nodes must be a positive integer, got {M}")
    if not t_left < t_right:
        raise QuadratureError(
            f"Interval must satisfy t_left < t_right, got [{t_left}, {t_right}]"
        )

    if M == 1:
        reference = np.array([1.0])
    else:
        interior, _ = roots_jacobi(M - 1, 1.0, 0.0)
        reference = np.concatenate([np.sort(interior), [1.0]])

    half = 0.5 * (t_right - t_left)
    nodes = t_left + half * (reference + 1.0)
    nodes[-1] = t_right
    return nodes.tolist()


def lagrange_basis(nodes: Sequence[float], j: int) -> Polynomial:
    """Lagrange polynomial that is one at ``nodes[j]`` and zero at the others."""
    others = [x for i, x in enumerate(nodes) if i != j]
    denominator = np.prod([nodes[j] - x for x in others]) if others else 1.0
    return Polynomial.fromroots(others) / denominator if others else Polynomial([1.0])


def build_Q(nodes: Sequence[float], t_left: float, t_right: float) -> np.ndarray:
    """Collocation matrix by exact integration of the Lagrange basis.

    Entry ``(m, j)`` is the integral from ``t_left`` to ``nodes[m]`` of the
    ``j``-th Lagrange polynomial, divided by ``dt = t_right - t_left``.

    Raises:
        QuadratureError: If nodes are duplicated or the interval is empty.
    """
    if not t_left < t_right:
        raise QuadratureError(
            f"Interval must satisfy t_left < t_right, got [{t_left}, {t_right}]"
        )
    dt = t_right - t_left
    tau = (np.asarray(nodes, dtype=float) - t_left) / dt
    if len(np.unique(tau)) != len(tau):
        raise QuadratureError(f"Duplicate collocation nodes: {list(nodes)}")

    M = len(tau)
    Q = np.zeros((M, M))
    for j in range(M):
        antiderivative = lagrange_basis(tau, j).integ()
        Q[:, j] = antiderivative(tau) - antiderivative(0.0)
    return Q


def lu_nopivot(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Doolittle LU factorization without pivoting, ``A = L U``.

    Raises:
        FactorizationError: On a zero pivot.
    """
    U = np.array(A, dtype=float)
    n = U.shape[0]
    L = np.eye(n)
    scale = max(np.abs(U).max(), np.finfo(float).tiny)
    for k in range(n):
        pivot = U[k, k]
        if abs(pivot) <= np.finfo(float).eps * scale:
            raise FactorizationError(f"Zero pivot at position {k} in LU factorization")
        for i in range(k + 1, n):
            L[i, k] = U[i, k] / pivot
            U[i, k:] -= L[i, k] * U[k, k:]
            U[i, k] = 0.0
    return L, U


def build_QDelta_LU(Q: np.ndarray) -> np.ndarray:
    """LU trick: ``U^T`` from ``Q^T = L U`` without pivoting."""
    _, U = lu_nopivot(np.asarray(Q).T)
    return U.T.copy()


def build_QDelta_Euler(
    nodes: Sequence[float],
    t_left: float = 0.0,
    t_right: float = 1.0
) -> np.ndarray:
    """Implicit-Euler substepping matrix: column ``j`` holds the substep ending at node ``j``."""
    if not t_left < t_right:
        raise QuadratureError(
            f"Interval must satisfy t_left < t_right, got [{t_left}, {t_right}]"
        )
    tau = (np.asarray(nodes, dtype=float) - t_left) / (t_right - t_left)
    if np.any(np.diff(tau) <= 0) or tau[0] <= 0:
        raise QuadratureError(f"Nodes must be strictly increasing inside the interval: {list(nodes)}")
    steps = np.diff(np.concatenate([[0.0], tau]))
    return np.tril(np.ones((len(tau), 1)) * steps[np.newaxis, :])


def diagonalize(A: np.ndarray) -> Diagonalization:
    """Complex eigen-factorization with deterministic eigenvalue ordering.

    Eigenvalues are sorted by ascending real part, then ascending imaginary
    part, so conjugate pairs always land on the same node positions.

    Args:
        A: Real square matrix with distinct eigenvalues.

    Returns:
        The factorization. ``ill_conditioned`` is set when the condition
        number of ``V`` exceeds ``CONDITION_LIMIT``.

    Raises:
        NotDiagonalizableError: If two eigenvalues are closer than
            ``SEPARATION_TOL * ||A||_inf``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm = np.linalg.norm(A, np.inf)

    if not np.any(A - np.diag(np.diag(A))):
        eigenvalues = np.diag(A).astype(complex)
        order = np.lexsort((eigenvalues.imag, eigenvalues.real))
        V = np.eye(n, dtype=complex)[:, order]
        return Diagonalization(
            V=V,
            eigenvalues=eigenvalues[order],
            V_inv=V.T.copy(),
            condition=1.0,
            reconstruction_error=0.0,
        )

    eigenvalues, V = np.linalg.eig(A)
    eigenvalues = eigenvalues.astype(complex)
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvalues = eigenvalues[order]
    V = V[:, order].astype(complex)

    gaps = np.abs(eigenvalues[:, np.newaxis] - eigenvalues[np.newaxis, :])
    gaps[np.diag_indices(n)] = np.inf
    if n > 1 and gaps.min() < SEPARATION_TOL * norm:
        raise NotDiagonalizableError(
            f"Eigenvalues are not separated (min gap {gaps.min():.3e})"
        )

    V_inv = np.linalg.inv(V)
    condition = float(np.linalg.cond(V))
    error = float(np.linalg.norm(V @ np.diag(eigenvalues) @ V_inv - A, np.inf))
    ill_conditioned = condition > CONDITION_LIMIT
    if ill_conditioned:
        logger.warning("Eigenvector basis is ill-conditioned (cond = %.3e)", condition)
    return Diagonalization(
        V=V,
        eigenvalues=eigenvalues,
        V_inv=V_inv,
        condition=condition,
        reconstruction_error=error,
        ill_conditioned=ill_conditioned,
    )


class QuadratureError(ValueError):
    """Exception raised for invalid quadrature arguments."""
    pass


class FactorizationError(Exception):
    """Exception raised when the LU trick hits a zero pivot."""
    pass


class NotDiagonalizableError(Exception):
    """Exception raised when a matrix has no separated eigenvalues."""
    pass
