"""Single-step kernels.

Two sweep families act on the collocation problem of one time-step:

* ``sdc_sweep_serial`` walks the nodes one by one (forward substitution with
  the lower-triangular ``Q_delta``) and solves each implicit node equation
  with a classical Newton iteration.
* ``qn_sweep_diag`` runs Quasi-Newton iterations whose Jacobian is frozen at
  the step's initial value. Diagonalizing ``Q_delta`` (or ``Q``) decouples
  the nodes, so the shifted node systems are independent tasks handed to a
  node runner, which may execute them concurrently.

All node collections are arrays of shape ``(M,) + field_shape``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .linsolve import GMRESSettings, SolveReport, gmres_with
from .problems import JacobianOperator, Problem
from .quadrature import QuadratureRule

logger = logging.getLogger(__name__)

VARIANTS = ("Qdelta", "Q")
INITIAL_GUESSES = ("previous", "spread")

# Relative bound on the imaginary part left after recombining node solutions
IMAGINARY_TOL = 1e-10
DIVERGENCE_WINDOW = 3

NodeTask = Callable[[], Tuple[np.ndarray, SolveReport]]
NodeRunner = Callable[[Sequence[NodeTask]], List[Tuple[np.ndarray, SolveReport]]]


def run_serially(tasks: Sequence[NodeTask]) -> List[Tuple[np.ndarray, SolveReport]]:
    """Default node runner: execute the node tasks in node order."""
    return [task() for task in tasks]


@dataclass
class StepState:
    """Values of one time-step on one level.

    Attributes:
        level: ``fine`` or ``coarse``.
        u: Node values.
        u0: Received initial value.
        tau: FAS correction per node, coarse level only.
        rhs_cache: Frozen right-hand side assembled at the start of the
            last sweep.
        f: Cached ``f(u)``, ``None`` when stale.
        jacobian: Jacobian frozen at ``u0``, rebuilt when ``u0`` changes.
        step: Index of the step inside its block.
    """
    level: str
    u: np.ndarray
    u0: np.ndarray
    tau: Optional[np.ndarray] = None
    rhs_cache: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    jacobian: Optional[JacobianOperator] = field(default=None, repr=False)
    step: int = 0

    @classmethod
    def spread(cls, level: str, u0: np.ndarray, M: int, step: int = 0) -> "StepState":
        """State with ``u0`` copied to every node."""
        u = np.repeat(np.asarray(u0)[np.newaxis], M, axis=0)
        return cls(level=level, u=u, u0=np.array(u0, copy=True), step=step)

    @property
    def M(self) -> int:
        return self.u.shape[0]

    @property
    def last(self) -> np.ndarray:
        return self.u[-1]

    def f_values(self, problem: Problem) -> np.ndarray:
        if self.f is None:
            self.f = problem.eval_f(self.u)
        return self.f

    def frozen_jacobian(self, problem: Problem) -> JacobianOperator:
        """Jacobian at ``u0``, cached while ``u0`` is unchanged."""
        if self.jacobian is None or not np.array_equal(self.jacobian.u0, self.u0):
            self.jacobian = problem.jacobian_at(self.u0)
        return self.jacobian

    def with_values(self, u: np.ndarray, f: Optional[np.ndarray] = None) -> "StepState":
        return replace(self, u=u, f=f)

    def with_initial_value(self, u0: np.ndarray) -> "StepState":
        return replace(self, u0=np.array(u0, copy=True))

    def copy(self) -> "StepState":
        return replace(
            self,
            u=self.u.copy(),
            u0=self.u0.copy(),
            tau=None if self.tau is None else self.tau.copy(),
            f=None if self.f is None else self.f.copy(),
        )


@dataclass
class SweepReport:
    """Work done by one sweep."""
    kind: str
    newton_iterations: int = 0
    qn_steps: int = 0
    linear_solves: int = 0
    gmres_iterations: int = 0
    node_gmres: List[int] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)

    def record(self, node: int, report: SolveReport) -> None:
        self.linear_solves += 1
        self.gmres_iterations += report.iterations
        self.node_gmres[node] += report.iterations


def node_sum(A: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``out[m] = sum_j A[m, j] values[j]`` in a fixed order."""
    out = np.zeros(A.shape[:1] + values.shape[1:], dtype=np.result_type(A, values))
    for m in range(A.shape[0]):
        for j in range(A.shape[1]):
            if A[m, j] != 0:
                out[m] = out[m] + A[m, j] * values[j]
    return out


def integrate(rule: QuadratureRule, dt: float, f_values: np.ndarray) -> np.ndarray:
    """Node-to-node integrals ``dt Q F`` from the interval start."""
    return dt * node_sum(rule.Q, f_values)


def collocation_operator(
    u: np.ndarray,
    f_values: np.ndarray,
    rule: QuadratureRule,
    dt: float
) -> np.ndarray:
    """``C(u) = u - dt Q F(u)`` without the initial value."""
    return u - integrate(rule, dt, f_values)


def collocation_residual(
    state: StepState,
    rule: QuadratureRule,
    dt: float,
    problem: Problem
) -> Tuple[np.ndarray, float]:
    """Residual of the step's collocation problem.

    Returns:
        Tuple of the per-node residual ``u0 + dt Q F(u) - u (+ tau)`` and its
        maximum norm over nodes and space.
    """
    r = state.u0[np.newaxis] + integrate(rule, dt, state.f_values(problem)) - state.u
    if state.tau is not None:
        r = r + state.tau
    return r, problem.norm(r)


def _solve_node_equation(
    problem: Problem,
    v: np.ndarray,
    weight: float,
    rhs: np.ndarray,
    newton_tol: float,
    newton_max: int,
    gmres_settings: GMRESSettings,
    report: SweepReport,
    node: int,
    state: StepState
) -> Tuple[np.ndarray, np.ndarray]:
    """Newton iteration for ``v - weight f(v) = rhs``, returns ``v`` and ``f(v)``.

    Every call takes at least one Newton step, also when the starting
    residual is already below ``newton_tol``.
    """
    f_v = problem.eval_f(v)
    g = v - weight * f_v - rhs
    residual = problem.norm(g)
    growth = 0
    iterations = 0
    while iterations < newton_max and (iterations == 0 or residual > newton_tol):
        J = problem.jacobian_at(v)
        e, solve = gmres_with(
            gmres_settings, lambda w: w - weight * J(w), -g, J.shifted_preconditioner(weight)
        )
        report.record(node, solve)
        if not solve.converged:
            raise LinearSolveError(
                f"GMRES did not converge in Newton step (residual {solve.final_residual_norm:.3e})",
                step=state.step, node=node, level=state.level
            )
        v = v + e
        f_v = problem.eval_f(v)
        g = v - weight * f_v - rhs
        previous, residual = residual, problem.norm(g)
        iterations += 1
        growth = growth + 1 if residual > previous else 0
        if growth >= DIVERGENCE_WINDOW or not np.isfinite(residual):
            raise NewtonDivergenceError(
                f"Newton residual grew to {residual:.3e}",
                step=state.step, node=node, level=state.level
            )
    report.newton_iterations += iterations
    return v, f_v


def sdc_sweep_serial(
    state: StepState,
    rule: QuadratureRule,
    dt: float,
    problem: Problem,
    newton_tol: float = 1e-11,
    newton_max: int = 50,
    gmres_settings: Optional[GMRESSettings] = None
) -> Tuple[StepState, SweepReport]:
    """One SDC sweep with node-by-node Newton solves.

    Node ``m`` solves
    ``u_m - dt Qd[m, m] f(u_m) = u0 + tau_m + dt ((Q - Qd) F(u^k))_m
    + dt sum_{n<m} Qd[m, n] f(u_n^{k+1})``
    starting from its previous value. The Jacobian is refreshed at every
    Newton iteration.

    Args:
        state: Current step values.
        rule: Quadrature rule of the level.
        dt: Step size.
        problem: Problem of the level.
        newton_tol: Newton residual threshold (maximum norm).
        newton_max: Newton iteration cap per node.
        gmres_settings: Settings of the inner linear solves.

    Returns:
        Tuple of the updated state and a SweepReport.

    Raises:
        NewtonDivergenceError: If the Newton residual grows three times in a row.
        LinearSolveError: If an inner GMRES solve fails.
    """
    gmres_settings = gmres_settings or GMRESSettings()
    M = rule.M
    Q_delta = rule.Q_delta
    f_old = state.f_values(problem)
    rhs = state.u0[np.newaxis] + dt * node_sum(rule.Q - Q_delta, f_old)
    if state.tau is not None:
        rhs = rhs + state.tau

    report = SweepReport(kind="newton", node_gmres=[0] * M)
    u_new = np.empty_like(state.u)
    f_new = np.empty_like(f_old)
    for m in range(M):
        b = rhs[m].copy()
        for n in range(m):
            b = b + dt * Q_delta[m, n] * f_new[n]
        u_new[m], f_new[m] = _solve_node_equation(
            problem, state.u[m], dt * Q_delta[m, m], b, newton_tol, newton_max,
            gmres_settings, report, m, state
        )

    logger.debug(
        "SDC sweep on %s step %d: %d Newton iterations, %d GMRES iterations",
        state.level, state.step, report.newton_iterations, report.gmres_iterations
    )
    new_state = replace(state, u=u_new, f=f_new, rhs_cache=rhs)
    return new_state, report


def qn_sweep_diag(
    state: StepState,
    rule: QuadratureRule,
    dt: float,
    problem: Problem,
    variant: str = "Qdelta",
    n_qn: int = 1,
    gmres_settings: Optional[GMRESSettings] = None,
    qn_tol: float = 0.0,
    initial_guess: str = "previous",
    node_runner: NodeRunner = run_serially
) -> Tuple[StepState, SweepReport]:
    """Quasi-Newton sweep with the Jacobian frozen at the initial value.

    The sweep equation is ``G(v) = v - dt A F(v) - c`` with ``A = Q_delta`` and
    ``c = u0 + tau + dt (Q - Q_delta) F(u^k)`` for the ``Qdelta`` variant, or
    ``A = Q`` and ``c = u0 + tau`` for the ``Q`` variant. With
    ``A = V diag(lam) V^-1`` each step computes ``r = V^-1 (-G(v))``, solves
    ``(I - dt lam_m J0) e_m = r_m`` for every node independently and updates
    ``v += V e``.

    Args:
        state: Current step values.
        rule: Quadrature rule of the level.
        dt: Step size.
        problem: Problem of the level.
        variant: ``Qdelta`` or ``Q``.
        n_qn: Maximum number of Quasi-Newton steps.
        gmres_settings: Settings of the node solves.
        qn_tol: Stop early once ``max|G(v)|`` drops below this, 0 disables.
        initial_guess: ``previous`` starts from ``u^k``, ``spread`` from
            ``u0`` on all nodes.
        node_runner: Callable executing the list of node tasks and
            returning their results in node order.

    Returns:
        Tuple of the updated state and a SweepReport.

    Raises:
        LinearSolveError: If a node solve does not converge.
        NumericalConsistencyError: If the recombined update is not real for a
            real problem.
    """
    if variant not in VARIANTS:
        raise ValueError(f"Unknown Quasi-Newton variant '{variant}'")
    if initial_guess not in INITIAL_GUESSES:
        raise ValueError(f"Unknown initial guess '{initial_guess}'")
    gmres_settings = gmres_settings or GMRESSettings()
    M = rule.M
    diag = rule.diagonalization(variant)
    J0 = state.frozen_jacobian(problem)

    if variant == "Qdelta":
        A = rule.Q_delta
        c = state.u0[np.newaxis] + dt * node_sum(rule.Q - rule.Q_delta, state.f_values(problem))
    else:
        A = rule.Q
        c = np.repeat(state.u0[np.newaxis], M, axis=0)
    if state.tau is not None:
        c = c + state.tau

    if initial_guess == "spread":
        v = np.repeat(state.u0[np.newaxis], M, axis=0)
    else:
        v = state.u.copy()
    real_problem = not np.iscomplexobj(problem.zeros())
    report = SweepReport(kind="qn-" + variant, node_gmres=[0] * M)

    f_v = problem.eval_f(v)
    for _ in range(n_qn):
        G = v - dt * node_sum(A, f_v) - c
        residual = problem.norm(G)
        report.residuals.append(residual)
        if qn_tol > 0 and residual <= qn_tol:
            break

        r_bar = node_sum(diag.V_inv, -G)
        tasks = [
            _shifted_solve_task(J0, dt * diag.eigenvalues[m], r_bar[m], gmres_settings)
            for m in range(M)
        ]
        results = node_runner(tasks)
        e_bar = np.empty_like(r_bar)
        for m, (e_m, solve) in enumerate(results):
            report.record(m, solve)
            if not solve.converged:
                raise LinearSolveError(
                    f"Shifted node solve did not converge (residual {solve.final_residual_norm:.3e})",
                    step=state.step, node=m, level=state.level
                )
            e_bar[m] = e_m
        e = node_sum(diag.V, e_bar)

        if real_problem:
            scale = max(problem.norm(v), problem.norm(e), np.finfo(float).tiny)
            imaginary = problem.norm(e.imag)
            if imaginary > IMAGINARY_TOL * scale:
                raise NumericalConsistencyError(
                    f"Recombined update has imaginary part {imaginary:.3e}",
                    step=state.step, level=state.level
                )
            e = e.real
        v = v + e
        f_v = problem.eval_f(v)
        report.qn_steps += 1

    logger.debug(
        "QN sweep (%s) on %s step %d: %d steps, %d GMRES iterations",
        variant, state.level, state.step, report.qn_steps, report.gmres_iterations
    )
    new_state = replace(state, u=v, f=f_v, rhs_cache=c)
    return new_state, report


def _shifted_solve_task(
    J0: JacobianOperator,
    shift: complex,
    rhs: np.ndarray,
    settings: GMRESSettings
) -> NodeTask:
    preconditioner = J0.shifted_preconditioner(shift)

    def task() -> Tuple[np.ndarray, SolveReport]:
        return gmres_with(settings, lambda w: w - shift * J0(w), rhs, preconditioner)
    return task


class SweepError(Exception):
    """Exception raised when a sweep fails.

    Attributes:
        step: Step index inside the block, if known.
        node: Node index, if known.
        level: Level name, if known.
    """

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        node: Optional[int] = None,
        level: Optional[str] = None
    ):
        self.step = step
        self.node = node
        self.level = level
        location = ", ".join(
            f"{key}={value}" for key, value in
            (("step", step), ("node", node), ("level", level)) if value is not None
        )
        super().__init__(f"{message} [{location}]" if location else message)
        self.message = message


class NewtonDivergenceError(SweepError):
    """Exception raised when a node Newton iteration diverges."""
    pass


class LinearSolveError(SweepError):
    """Exception raised when an inner linear solve fails."""
    pass


class NumericalConsistencyError(SweepError):
    """Exception raised when a result that must be real is not."""
    pass
