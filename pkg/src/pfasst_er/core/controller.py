"""Outer iteration of SDC, MLSDC, PFASST and PFASST-ER.

Time-steps are processed in blocks of ``block_size`` steps. Inside a block
every outer iteration performs, per step:

1. the FAS correction of the coarse level from the current fine iterate,
2. a coarse sweep, pipelined from step to step,
3. the coarse-grid correction of the fine iterate and its initial value,
4. a fine sweep, concurrently for all steps,

followed by forwarding the new fine end values and checking the composite
collocation residual. Blocks run one after the other; the end value of one
block starts the next.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .executor import Executor, IterationPlan, MessageKind, WorkerGrid, LayoutError
from .linsolve import GMRESSettings
from .problems import Problem, make_problem
from .quadrature import QuadratureRule
from .sweeps import (
    StepState,
    SweepError,
    SweepReport,
    collocation_operator,
    collocation_residual,
    qn_sweep_diag,
    sdc_sweep_serial
)

logger = logging.getLogger(__name__)


class Mode(Enum):
    """Supported run modes."""
    SL_SDC = "SL-SDC"
    MLSDC = "MLSDC"
    PFASST = "PFASST"
    PFASST_ER_QDELTA = "PFASST-ER-Qdelta"
    PFASST_ER_Q = "PFASST-ER-Q"

    @property
    def multilevel(self) -> bool:
        return self is not Mode.SL_SDC

    @property
    def quasi_newton(self) -> bool:
        return self in (Mode.PFASST_ER_QDELTA, Mode.PFASST_ER_Q)

    @property
    def step_parallel(self) -> bool:
        return self in (Mode.PFASST, Mode.PFASST_ER_QDELTA, Mode.PFASST_ER_Q)

    @property
    def variant(self) -> Optional[str]:
        if self is Mode.PFASST_ER_QDELTA:
            return "Qdelta"
        if self is Mode.PFASST_ER_Q:
            return "Q"
        return None


@dataclass
class Level:
    """Problem and quadrature rule of one level."""
    name: str
    problem: Problem
    rule: QuadratureRule


@dataclass
class LevelHierarchy:
    """Fine and optional coarse level with node-wise transfer operators.

    Both levels share the quadrature rule; only space is coarsened.
    """
    fine: Level
    coarse: Optional[Level] = None

    @classmethod
    def build(
        cls,
        problem: Problem,
        num_nodes: int,
        dt: float,
        n_coarse: Optional[int] = None,
        multilevel: bool = True,
        qdelta: str = "LU"
    ) -> "LevelHierarchy":
        rule = QuadratureRule.build(num_nodes, 0.0, dt, qdelta)
        fine = Level("fine", problem, rule)
        if not multilevel:
            return cls(fine)
        if problem.mesh is None:
            coarse_problem = problem.on_mesh(None)
        elif n_coarse is None or n_coarse == problem.mesh.n // 2:
            coarse_problem = problem.on_mesh(problem.mesh.coarsen())
        elif n_coarse == problem.mesh.n:
            coarse_problem = problem.on_mesh(problem.mesh)
        else:
            raise LayoutError(
                f"Coarse mesh size {n_coarse} must be {problem.mesh.n // 2} or {problem.mesh.n}"
            )
        coarse = Level("coarse", coarse_problem, QuadratureRule.build(num_nodes, 0.0, dt, qdelta))
        return cls(fine, coarse)

    @property
    def M(self) -> int:
        return self.fine.rule.M

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return self.fine.problem.restrict_to(self.coarse.problem, u)

    def interpolate(self, u: np.ndarray) -> np.ndarray:
        return self.fine.problem.interpolate_from(self.coarse.problem, u)


@dataclass
class CompositeState:
    """Fine and coarse states of all steps of a block."""
    fine: List[StepState]
    coarse: List[Optional[StepState]]
    iteration: int = 0
    converged: List[bool] = field(default_factory=list)
    frozen: List[bool] = field(default_factory=list)
    first_step: int = 0

    @classmethod
    def spread(cls, u_start: np.ndarray, M: int, L: int, first_step: int = 0) -> "CompositeState":
        return cls(
            fine=[StepState.spread("fine", u_start, M, step=l) for l in range(L)],
            coarse=[None] * L,
            converged=[False] * L,
            frozen=[False] * L,
            first_step=first_step,
        )

    @property
    def L(self) -> int:
        return len(self.fine)


@dataclass
class LevelCounters:
    """Work counters of one step on one level."""
    sweeps: int = 0
    newton_iterations: int = 0
    qn_steps: int = 0
    linear_solves: int = 0
    gmres_iterations: int = 0

    def add(self, report: SweepReport) -> None:
        self.sweeps += 1
        self.newton_iterations += report.newton_iterations
        self.qn_steps += report.qn_steps
        self.linear_solves += report.linear_solves
        self.gmres_iterations += report.gmres_iterations


@dataclass
class StepStats:
    """Counters of one time-step."""
    step: int
    block: int
    iterations: int = 0
    fine: LevelCounters = field(default_factory=LevelCounters)
    coarse: LevelCounters = field(default_factory=LevelCounters)
    messages_sent: int = 0
    messages_received: int = 0
    residual: float = float("inf")
    converged: bool = False

    @property
    def linear_solves(self) -> int:
        return self.fine.linear_solves + self.coarse.linear_solves

    @property
    def gmres_iterations(self) -> int:
        return self.fine.gmres_iterations + self.coarse.gmres_iterations


@dataclass
class BlockStats:
    """Outcome of one block of steps."""
    block: int
    iterations: int = 0
    converged: bool = False
    residual_history: List[float] = field(default_factory=list)
    messages: Dict[str, int] = field(default_factory=dict)


@dataclass
class RunStats:
    """Counters of a complete run."""
    mode: str
    p_steps: int
    p_nodes: int
    block_size: int
    steps: List[StepStats] = field(default_factory=list)
    blocks: List[BlockStats] = field(default_factory=list)
    node_gmres: List[int] = field(default_factory=list)
    group_gmres: List[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return bool(self.blocks) and all(block.converged for block in self.blocks)

    @property
    def outer_iterations(self) -> int:
        return sum(block.iterations for block in self.blocks)

    @property
    def linear_solves_total(self) -> int:
        return sum(step.linear_solves for step in self.steps)

    @property
    def gmres_iterations_total(self) -> int:
        return sum(step.gmres_iterations for step in self.steps)

    @property
    def messages(self) -> Dict[str, int]:
        totals: Dict[str, int] = {kind.value: 0 for kind in MessageKind}
        for block in self.blocks:
            for kind, count in block.messages.items():
                totals[kind] += count
        return totals

    @property
    def messages_total(self) -> int:
        return sum(self.messages.values())

    @property
    def residual_history(self) -> List[float]:
        return [r for block in self.blocks for r in block.residual_history]

    def summary(self) -> Dict[str, Any]:
        """Flat record of the run totals."""
        return {
            "mode": self.mode,
            "p_steps": self.p_steps,
            "p_nodes": self.p_nodes,
            "outer_iters": self.outer_iterations,
            "linear_solves_total": self.linear_solves_total,
            "gmres_iters_total": self.gmres_iterations_total,
            "messages": self.messages_total,
            "converged": self.converged,
        }


@dataclass
class Solution:
    """Fine node values of every step and the value at the final time."""
    final: np.ndarray
    nodes: List[np.ndarray]
    times: List[float]


def fas_correction(fine_state: StepState, hierarchy: LevelHierarchy, dt: float) -> np.ndarray:
    """``tau = C_coarse(R u) - R C_fine(u)`` with ``C(u) = u - u0 - dt Q F(u)``."""
    fine, coarse = hierarchy.fine, hierarchy.coarse
    u, u0 = fine_state.u, fine_state.u0[np.newaxis]
    Ru, Ru0 = hierarchy.restrict(u), hierarchy.restrict(u0)
    fine_C = collocation_operator(u, fine_state.f_values(fine.problem), fine.rule, dt) - u0
    coarse_C = collocation_operator(Ru, coarse.problem.eval_f(Ru), coarse.rule, dt) - Ru0
    return coarse_C - hierarchy.restrict(fine_C)


def cgc_update(
    fine_state: StepState,
    coarse_before: np.ndarray,
    coarse_after: np.ndarray,
    hierarchy: LevelHierarchy
) -> StepState:
    """Coarse-grid correction ``u + T(u_coarse_new - R u)`` on every node."""
    u = fine_state.u + hierarchy.interpolate(coarse_after - coarse_before)
    return fine_state.with_values(u)


class Controller:
    """Runs one configured method over all time-steps."""

    def __init__(self, config: Any, problem: Optional[Problem] = None):
        """Initialize the controller.

        Args:
            config: Run configuration (``RunConfig`` or any object with the
                same attributes).
            problem: Fine-level problem, built from ``config`` if omitted.

        Raises:
            LayoutError: If the worker layout does not fit the block.
        """
        self.config = config
        self.mode = Mode(config.mode)
        self.dt = float(config.dt)
        self.block_size = config.block_size or config.p_steps
        if config.total_steps % self.block_size:
            raise LayoutError(
                f"Block size {self.block_size} does not divide {config.total_steps} steps"
            )
        if self.block_size % config.p_steps:
            raise LayoutError(
                f"Block size {self.block_size} is not a multiple of {config.p_steps} step-workers"
            )
        self.grid = WorkerGrid(config.p_steps, config.p_nodes, config.num_nodes)
        problem = problem or make_problem(config)
        self.hierarchy = LevelHierarchy.build(
            problem, config.num_nodes, self.dt, config.n_coarse,
            self.mode.multilevel, config.qdelta
        )
        self.gmres = GMRESSettings(config.gmres_tol, config.gmres_restart, config.gmres_maxiter)

    def run(self) -> Tuple[Solution, RunStats]:
        """Integrate over ``total_steps`` steps.

        Returns:
            Tuple of the fine solution and the run statistics. A block that
            does not converge within ``max_outer`` iterations is recorded as
            unconverged and the run continues from its last iterate.
        """
        config = self.config
        M = self.hierarchy.M
        stats = RunStats(self.mode.value, config.p_steps, config.p_nodes, self.block_size)
        node_gmres = np.zeros(M, dtype=int)
        u_start = self.hierarchy.fine.problem.initial_condition()
        nodes: List[np.ndarray] = []
        times: List[float] = []

        for block in range(config.total_steps // self.block_size):
            step_stats = [
                StepStats(step=block * self.block_size + l, block=block)
                for l in range(self.block_size)
            ]
            state, block_stats = self.run_block(u_start, block, step_stats, node_gmres)
            stats.steps.extend(step_stats)
            stats.blocks.append(block_stats)
            nodes.extend(s.u.copy() for s in state.fine)
            times.extend((s.step + 1) * self.dt for s in step_stats)
            u_start = state.fine[-1].last.copy()
            logger.info(
                "Block %d: %s after %d iterations (residual %.3e)",
                block, "converged" if block_stats.converged else "NOT converged",
                block_stats.iterations,
                block_stats.residual_history[-1] if block_stats.residual_history else float("nan")
            )

        stats.node_gmres = node_gmres.tolist()
        stats.group_gmres = [int(sum(node_gmres[m] for m in group)) for group in self.grid.groups()]
        if not stats.converged:
            logger.warning("Run in mode %s did not converge in every block", self.mode.value)
        return Solution(u_start, nodes, times), stats

    def run_block(
        self,
        u_start: np.ndarray,
        block: int,
        step_stats: List[StepStats],
        node_gmres: np.ndarray
    ) -> Tuple[CompositeState, BlockStats]:
        """Iterate one block until its composite residual meets the tolerance."""
        config = self.config
        L = self.block_size
        state = CompositeState.spread(u_start, self.hierarchy.M, L, block * L)
        block_stats = BlockStats(block)

        with Executor(self.grid, L, config.progress_timeout) as executor:
            if config.predictor and self.mode.multilevel:
                self.predict(state, u_start, executor, step_stats, node_gmres)

            for k in range(config.max_outer):
                state.iteration = k
                coarse_out: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
                plan = IterationPlan(
                    coarse=[self._coarse_task(state, l, k, coarse_out, executor) for l in range(L)]
                    if self.mode.multilevel else [],
                    fine=[self._fine_task(state, l, u_start, coarse_out, executor) for l in range(L)],
                    initial=self.hierarchy.restrict(u_start) if self.mode.multilevel else None,
                )
                coarse_results, fine_results = executor.execute(plan, k)

                for l in range(L):
                    if coarse_results and coarse_results[l] is not None:
                        state.coarse[l], report = coarse_results[l]
                        self._record(step_stats[l].coarse, report, node_gmres)
                    if fine_results[l] is not None:
                        state.fine[l], report = fine_results[l]
                        self._record(step_stats[l].fine, report, node_gmres)
                        step_stats[l].iterations += 1

                received = executor.forward(MessageKind.FINE_FORWARD, [s.last for s in state.fine], k)
                for l in range(1, L):
                    state.fine[l] = state.fine[l].with_initial_value(received[l])

                residuals = [self.residual(s) for s in state.fine]
                state.converged = [r <= config.tol_outer for r in residuals]
                block_stats.residual_history.append(max(residuals))
                block_stats.iterations = k + 1
                for l in range(L):
                    step_stats[l].residual = residuals[l]
                    step_stats[l].converged = state.converged[l]
                logger.debug("Block %d iteration %d: residual %.3e", block, k, max(residuals))

                if config.lock_converged:
                    self._lock(state, k, executor)
                if all(state.converged):
                    block_stats.converged = True
                    break

            block_stats.messages = executor.counters.as_dict()
            for l in range(L):
                step_stats[l].messages_sent = executor.counters.sent.get(l, 0)
                step_stats[l].messages_received = executor.counters.received.get(l, 0)
        return state, block_stats

    def residual(self, state: StepState) -> float:
        """Fine collocation residual of one step, absolute or relative to ``|u0|``."""
        problem = self.hierarchy.fine.problem
        _, norm = collocation_residual(state, self.hierarchy.fine.rule, self.dt, problem)
        if self.config.residual_type == "relative":
            norm /= max(problem.norm(state.u0), np.finfo(float).tiny)
        return norm

    def _lock(self, state: CompositeState, iteration: int, executor: Executor) -> None:
        for l in range(state.L):
            if state.frozen[l] or not state.converged[l]:
                continue
            if l == 0 or state.frozen[l - 1]:
                state.frozen[l] = True
                executor.notify(MessageKind.CONVERGED_FLAG, l, iteration)

    def _record(self, counters: LevelCounters, report: SweepReport, node_gmres: np.ndarray) -> None:
        counters.add(report)
        node_gmres += np.asarray(report.node_gmres, dtype=int)

    def sweep(
        self,
        level: Level,
        state: StepState,
        global_step: int,
        executor: Optional[Executor] = None
    ) -> Tuple[StepState, SweepReport]:
        """One sweep of the mode's family on ``level``.

        Raises:
            SweepError: With the global step and the level filled in.
        """
        config = self.config
        try:
            if self.mode.quasi_newton:
                runner = executor.node_runner(state.step) if executor is not None else None
                kwargs = {"node_runner": runner} if runner is not None else {}
                return qn_sweep_diag(
                    state, level.rule, self.dt, level.problem,
                    variant=self.mode.variant,
                    n_qn=config.n_qn,
                    gmres_settings=self.gmres,
                    qn_tol=config.qn_tol,
                    initial_guess=config.qn_initial_guess,
                    **kwargs
                )
            return sdc_sweep_serial(
                state, level.rule, self.dt, level.problem,
                newton_tol=config.tol_newton,
                newton_max=config.newton_max,
                gmres_settings=self.gmres,
            )
        except SweepError as error:
            raise type(error)(
                error.message, step=global_step, node=error.node, level=level.name
            ) from error

    def coarse_sweep_step(
        self,
        state: CompositeState,
        l: int,
        incoming: np.ndarray,
        executor: Optional[Executor] = None
    ) -> Tuple[Optional[Tuple[StepState, SweepReport]], np.ndarray, Optional[np.ndarray]]:
        """FAS correction and one coarse sweep of step ``l``.

        Returns:
            Tuple of the (state, report) pair or ``None`` for a frozen step,
            the payload for step ``l + 1`` and the restricted fine iterate the
            sweep started from.
        """
        fine_state = state.fine[l]
        if state.frozen[l]:
            return None, self.hierarchy.restrict(fine_state.last), None
        before = self.hierarchy.restrict(fine_state.u)
        tau = fas_correction(fine_state, self.hierarchy, self.dt)
        previous = state.coarse[l]
        coarse_state = StepState(
            level="coarse",
            u=before.copy(),
            u0=np.array(incoming, copy=True),
            tau=tau,
            jacobian=previous.jacobian if previous is not None else None,
            step=l,
        )
        result = self.sweep(self.hierarchy.coarse, coarse_state, self._global(state, l), executor)
        return result, result[0].last.copy(), before

    def fine_sweep_step(
        self,
        state: CompositeState,
        l: int,
        u_start: np.ndarray,
        coarse: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
        executor: Optional[Executor] = None
    ) -> Optional[Tuple[StepState, SweepReport]]:
        """Coarse-grid correction and one fine sweep of step ``l``.

        Args:
            state: Block state.
            l: Step index in the block.
            u_start: Initial value of the block.
            coarse: ``(before, after, received)``: the restricted iterate, the
                coarse iterate after its sweep and the coarse value received
                from step ``l - 1``; ``None`` on a single level.
            executor: Executor providing the node runner.

        Returns:
            The new fine state and its report, ``None`` for a frozen step.
        """
        if state.frozen[l]:
            return None
        fine_state = state.fine[l]
        if coarse is not None:
            before, after, received = coarse
            fine_state = cgc_update(fine_state, before, after, self.hierarchy)
            if l == 0:
                u0 = u_start
            else:
                recv_fine = fine_state.u0
                u0 = recv_fine + self.hierarchy.interpolate(
                    received - self.hierarchy.restrict(recv_fine)
                )
            fine_state = fine_state.with_initial_value(u0)
        return self.sweep(self.hierarchy.fine, fine_state, self._global(state, l), executor)

    def _coarse_task(self, state, l, iteration, coarse_out, executor):
        def task(incoming):
            result, payload, before = self.coarse_sweep_step(state, l, incoming, executor)
            if result is not None:
                coarse_out[l] = (before, result[0].u, np.array(incoming, copy=True))
            return result, payload
        return task

    def _fine_task(self, state, l, u_start, coarse_out, executor):
        return lambda: self.fine_sweep_step(state, l, u_start, coarse_out.get(l), executor)

    def _global(self, state: CompositeState, l: int) -> int:
        return state.first_step + l

    def predict(
        self,
        state: CompositeState,
        u_start: np.ndarray,
        executor: Executor,
        step_stats: List[StepStats],
        node_gmres: np.ndarray
    ) -> None:
        """Serial coarse pass through the block, interpolated into the fine guess."""
        hierarchy = self.hierarchy
        M = hierarchy.M
        spread_start = np.repeat(u_start[np.newaxis], M, axis=0)
        coarse_start = hierarchy.restrict(spread_start)

        def make_task(l):
            def task(incoming):
                coarse_state = StepState.spread("coarse", incoming, M, step=l)
                new, report = self.sweep(hierarchy.coarse, coarse_state, state.first_step + l, executor)
                return (new, report), new.last.copy()
            return task

        results = executor.pipeline(
            [make_task(l) for l in range(state.L)], hierarchy.restrict(u_start), -1
        )
        for l, (coarse_state, report) in enumerate(results):
            self._record(step_stats[l].coarse, report, node_gmres)
            u = spread_start + hierarchy.interpolate(coarse_state.u - coarse_start)
            state.fine[l] = state.fine[l].with_values(u)
        received = executor.forward(MessageKind.FINE_FORWARD, [s.last for s in state.fine], -1)
        for l in range(1, state.L):
            state.fine[l] = state.fine[l].with_initial_value(received[l])


def run(config: Any, problem: Optional[Problem] = None) -> Tuple[Solution, RunStats]:
    """Run the configured method and return the solution and its statistics."""
    return Controller(config, problem).run()
