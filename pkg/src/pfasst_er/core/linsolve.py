"""Linear solvers for the innermost systems.

GMRES follows Kelley's formulation (Arnoldi with modified Gram-Schmidt and
Givens rotations on the Hessenberg matrix), written for complex arithmetic so
that the shifted node systems of the diagonalized sweeps can be solved with
complex shifts. Operators are matrix-free callables acting on arrays of the
right-hand side's shape.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve, solve_triangular

logger = logging.getLogger(__name__)

LinearOperator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GMRESSettings:
    """Tolerance and iteration limits for GMRES."""
    rel_tol: float = 1e-12
    restart: int = 30
    max_iter: int = 200

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"GMRES tolerance must be positive, got {self.rel_tol}")
        if self.restart < 1 or self.max_iter < 1:
            raise ValueError("GMRES restart length and iteration limit must be positive")


@dataclass
class SolveReport:
    """Outcome of one iterative solve.

    ``final_residual_norm`` is the true relative residual
    ``||b - A x|| / ||b||`` of the returned iterate.
    """
    iterations: int
    final_residual_norm: float
    converged: bool
    restarts: int = 0
    residual_history: List[float] = field(default_factory=list)


def gmres(
    A: LinearOperator,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    rel_tol: float = 1e-12,
    max_iter: int = 200,
    restart: int = 30,
    preconditioner: Optional[LinearOperator] = None
) -> Tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` with restarted GMRES.

    Args:
        A: Linear operator acting on arrays shaped like ``b``.
        b: Right-hand side, real or complex.
        x0: Initial guess, zero if omitted.
        rel_tol: Relative residual tolerance.
        max_iter: Total number of Arnoldi steps over all restarts.
        restart: Krylov dimension before restarting.
        preconditioner: Approximate inverse ``P`` of ``A``, applied from the
            right (``A P y = b``, ``x = P y``), so the reported residual is
            the true residual of ``A x = b``.

    Returns:
        Tuple of the best iterate and its SolveReport. A solve that hits
        ``max_iter`` returns ``converged=False``; the caller decides.
    """
    settings = GMRESSettings(rel_tol, restart, max_iter)
    b = np.asarray(b)
    shape = b.shape
    dtype = np.result_type(b.dtype, float if x0 is None else np.asarray(x0).dtype, float)
    rhs = b.astype(dtype).ravel()

    def matvec(v: np.ndarray) -> np.ndarray:
        return np.asarray(A(v.reshape(shape))).ravel()

    def precondition(v: np.ndarray) -> np.ndarray:
        if preconditioner is None:
            return v
        return np.asarray(preconditioner(v.reshape(shape)), dtype=dtype).ravel()

    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=dtype).ravel()
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return np.zeros(shape, dtype=dtype), SolveReport(0, 0.0, True)

    r = rhs - matvec(x) if x0 is not None else rhs.copy()
    beta = np.linalg.norm(r)
    history = [beta / b_norm]
    iterations = 0
    restarts = 0

    while history[-1] > settings.rel_tol and iterations < settings.max_iter:
        m = min(settings.restart, settings.max_iter - iterations)
        V = np.zeros((m + 1, rhs.size), dtype=dtype)
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m, dtype=dtype)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        V[0] = r / beta

        size = 0
        for k in range(m):
            iterations += 1
            w = matvec(precondition(V[k]))
            for j in range(k + 1):
                H[j, k] = np.vdot(V[j], w)
                w = w - H[j, k] * V[j]
            h_next = np.linalg.norm(w)
            H[k + 1, k] = h_next

            for i in range(k):
                temp = np.conj(cs[i]) * H[i, k] + np.conj(sn[i]) * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = temp

            rho = np.hypot(abs(H[k, k]), abs(H[k + 1, k]))
            if rho == 0.0:
                break
            cs[k] = H[k, k] / rho
            sn[k] = H[k + 1, k] / rho
            H[k, k] = rho
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = np.conj(cs[k]) * g[k]
            size = k + 1

            history.append(abs(g[k + 1]) / b_norm)
            if history[-1] <= settings.rel_tol or h_next <= np.finfo(float).eps * rho:
                break
            V[k + 1] = w / h_next

        if size:
            y = solve_triangular(H[:size, :size], g[:size])
            x = x + precondition(V[:size].T @ y)

        r = rhs - matvec(x)
        beta = np.linalg.norm(r)
        history.append(beta / b_norm)
        if history[-1] > settings.rel_tol and iterations < settings.max_iter:
            restarts += 1
            logger.debug("GMRES restart %d at residual %.3e", restarts, history[-1])

    residual = history[-1]
    converged = residual <= settings.rel_tol
    if not converged:
        logger.warning(
            "GMRES stopped after %d iterations at relative residual %.3e (tol %.1e)",
            iterations, residual, settings.rel_tol
        )
    report = SolveReport(iterations, residual, converged, restarts, history)
    return x.reshape(shape), report


def gmres_with(
    settings: GMRESSettings,
    A: LinearOperator,
    b: np.ndarray,
    preconditioner: Optional[LinearOperator] = None
) -> Tuple[np.ndarray, SolveReport]:
    """GMRES with a zero initial guess and the given settings."""
    return gmres(A, b, None, settings.rel_tol, settings.max_iter, settings.restart, preconditioner)


def dense_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve with partial pivoting for small dense systems.

    Raises:
        SingularMatrixError: If a pivot vanishes to machine precision.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Dense solve needs a square matrix, got shape {A.shape}")
    scale = np.abs(A).max() if A.size else 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() <= A.shape[0] * np.finfo(float).eps * scale:
        raise SingularMatrixError(
            f"Matrix is singular to machine precision (smallest pivot {pivots.min():.3e})"
        )
    return lu_solve((lu, piv), b)


class SingularMatrixError(Exception):
    """Exception raised when a dense system is singular."""
    pass
