"""Tests for the outer iteration of all run modes."""

import dataclasses
import logging

import numpy as np
import pytest

from pfasst_er.core.controller import (
    Controller,
    LevelHierarchy,
    Mode,
    cgc_update,
    fas_correction,
    run
)
from pfasst_er.core.executor import LayoutError, MessageKind
from pfasst_er.core.problems import AllenCahn, AllenCahnParams, Dahlquist, DahlquistJacobian
from pfasst_er.core.problems import allen_cahn
from pfasst_er.core.problems.base import JacobianOperator, Problem
from pfasst_er.core.quadrature import QuadratureRule
from pfasst_er.core.spatial import Mesh2D
from pfasst_er.core.sweeps import NewtonDivergenceError, StepState, collocation_residual

PARALLEL_MODES = ["PFASST", "PFASST-ER-Qdelta", "PFASST-ER-Q"]


def sequential_collocation(lam, dt, M, steps, u0=1.0):
    """Node values of the composite collocation system, solved step by step."""
    rule = QuadratureRule.build(M)
    system = np.eye(M) - dt * lam * rule.Q
    values = []
    for _ in range(steps):
        u = np.linalg.solve(system, np.full(M, u0, dtype=np.result_type(lam, float)))
        values.append(u.reshape(M, 1))
        u0 = u[-1]
    return values


class ZeroProblem(Problem):
    """u_t = 0 on a periodic mesh."""
    name = "zero"

    class Jacobian(JacobianOperator):
        def apply(self, w):
            return np.zeros_like(w)

    def eval_f(self, u):
        return np.zeros_like(u)

    def jacobian_at(self, u0):
        return self.Jacobian(u0)

    def initial_condition(self):
        return np.ones(self.field_shape)

    def on_mesh(self, mesh):
        return ZeroProblem(mesh)


@pytest.fixture
def ac_problem():
    return AllenCahn(Mesh2D(16, allen_cahn.DOMAIN), AllenCahnParams(reaction="cubic"))


def random_state(problem, M, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((M,) + problem.field_shape)
    return StepState("fine", u=u, u0=rng.standard_normal(problem.field_shape))


def test_mode_properties():
    assert not Mode.SL_SDC.multilevel
    assert Mode.MLSDC.multilevel and not Mode.MLSDC.step_parallel
    assert Mode.PFASST_ER_Q.quasi_newton and Mode.PFASST_ER_Q.variant == "Q"
    assert Mode.PFASST_ER_QDELTA.variant == "Qdelta"
    assert Mode.PFASST.variant is None


def test_hierarchy_coarsens_space_only(ac_problem):
    hierarchy = LevelHierarchy.build(ac_problem, 3, 1e-3)
    assert hierarchy.coarse.problem.mesh.n == 8
    assert hierarchy.coarse.rule.M == hierarchy.fine.rule.M == 3


def test_fas_correction_vanishes_for_identical_levels(ac_problem):
    hierarchy = LevelHierarchy.build(ac_problem, 3, 1e-3, n_coarse=16)
    tau = fas_correction(random_state(ac_problem, 3), hierarchy, 1e-3)
    assert np.array_equal(tau, np.zeros_like(tau))


def test_fas_correction_vanishes_without_dynamics():
    problem = ZeroProblem(Mesh2D(16))
    hierarchy = LevelHierarchy.build(problem, 3, 0.1)
    tau = fas_correction(random_state(problem, 3), hierarchy, 0.1)
    assert tau.shape == (3, 1, 8, 8)
    assert np.abs(tau).max() <= 1e-14


def test_fas_correction_matches_direct_formula(ac_problem):
    dt = 1e-3
    hierarchy = LevelHierarchy.build(ac_problem, 3, dt)
    state = random_state(ac_problem, 3, seed=4)
    coarse = hierarchy.coarse.problem
    RF = hierarchy.restrict(ac_problem.eval_f(state.u))
    FR = coarse.eval_f(hierarchy.restrict(state.u))
    expected = dt * np.einsum("mn,n...->m...", hierarchy.fine.rule.Q, RF - FR)
    np.testing.assert_allclose(fas_correction(state, hierarchy, dt), expected, atol=1e-12)


def test_cgc_update_without_coarse_change(ac_problem):
    hierarchy = LevelHierarchy.build(ac_problem, 2, 1e-3)
    state = random_state(ac_problem, 2)
    before = hierarchy.restrict(state.u)
    new = cgc_update(state, before, before.copy(), hierarchy)
    np.testing.assert_array_equal(new.u, state.u)


def test_cgc_update_with_identity_transfers(dahlquist):
    hierarchy = LevelHierarchy.build(dahlquist, 2, 0.1)
    state = StepState.spread("fine", np.ones(1), 2)
    after = np.array([[0.5], [0.25]])
    new = cgc_update(state, hierarchy.restrict(state.u), after, hierarchy)
    np.testing.assert_allclose(new.u, after)


def test_sl_sdc_reaches_sequential_collocation(dahlquist_config):
    solution, stats = run(dahlquist_config(mode="SL-SDC"))
    expected = sequential_collocation(-1.0, 0.1, 2, 3)
    for nodes, reference in zip(solution.nodes, expected):
        np.testing.assert_allclose(nodes, reference, atol=1e-11)
    assert stats.converged
    assert len(stats.blocks) == 3
    assert solution.times == pytest.approx([0.1, 0.2, 0.3])


def test_pfasst_on_one_worker_equals_mlsdc(dahlquist_config):
    ml_solution, ml_stats = run(dahlquist_config(mode="MLSDC"))
    pf_solution, pf_stats = run(dahlquist_config(mode="PFASST"))
    for a, b in zip(ml_solution.nodes, pf_solution.nodes):
        assert np.array_equal(a, b)
    assert ml_stats.outer_iterations == pf_stats.outer_iterations
    assert ml_stats.linear_solves_total == pf_stats.linear_solves_total


@pytest.mark.parametrize("mode", PARALLEL_MODES)
def test_composite_system_oracle(dahlquist_config, mode):
    solution, stats = run(dahlquist_config(mode=mode, p_steps=3))
    assert stats.converged
    for nodes, reference in zip(solution.nodes, sequential_collocation(-1.0, 0.1, 2, 3)):
        np.testing.assert_allclose(nodes, reference, atol=1e-10)


@pytest.mark.parametrize("mode", PARALLEL_MODES)
def test_converged_residual_bound(dahlquist_config, mode):
    config = dahlquist_config(mode=mode, p_steps=3)
    controller = Controller(config)
    solution, _ = controller.run()
    problem = controller.hierarchy.fine.problem
    u0 = problem.initial_condition()
    for nodes in solution.nodes:
        state = StepState("fine", u=nodes, u0=u0)
        _, norm = collocation_residual(state, controller.hierarchy.fine.rule, config.dt, problem)
        assert norm <= config.tol_outer
        u0 = nodes[-1]


def test_layout_does_not_change_iterates(dahlquist_config):
    serial_solution, serial = run(dahlquist_config(mode="PFASST-ER-Q", block_size=3))
    parallel_solution, parallel = run(dahlquist_config(mode="PFASST-ER-Q", p_steps=3))
    for a, b in zip(serial_solution.nodes, parallel_solution.nodes):
        assert np.array_equal(a, b)
    assert serial.outer_iterations == parallel.outer_iterations
    assert serial.linear_solves_total == parallel.linear_solves_total
    assert serial.messages_total == 0
    assert parallel.messages_total > 0


def test_message_counts_follow_iterations(dahlquist_config):
    _, stats = run(dahlquist_config(mode="PFASST", p_steps=3, lock_converged=False))
    iterations = stats.outer_iterations
    assert stats.messages[MessageKind.COARSE_FORWARD.value] == 2 * iterations
    assert stats.messages[MessageKind.FINE_FORWARD.value] == 2 * iterations
    assert stats.messages[MessageKind.CONVERGED_FLAG.value] == 0
    assert stats.messages_total == sum(s.messages_sent for s in stats.steps)


def test_locking_sends_one_flag_per_frozen_step(dahlquist_config):
    locked_solution, locked = run(dahlquist_config(mode="PFASST", p_steps=3))
    free_solution, _ = run(dahlquist_config(mode="PFASST", p_steps=3, lock_converged=False))
    assert locked.messages[MessageKind.CONVERGED_FLAG.value] == 2
    np.testing.assert_allclose(locked_solution.final, free_solution.final, atol=1e-10)


def test_predictor_keeps_the_solution(dahlquist_config):
    plain, _ = run(dahlquist_config(mode="PFASST", p_steps=3))
    predicted, stats = run(dahlquist_config(mode="PFASST", p_steps=3, predictor=True))
    assert stats.converged
    np.testing.assert_allclose(predicted.final, plain.final, atol=1e-10)
    assert all(step.coarse.sweeps > step.iterations for step in stats.steps)


def test_relative_residual(dahlquist_config):
    _, stats = run(dahlquist_config(mode="SL-SDC", residual_type="relative", dahlquist_lambda=-2.0))
    assert stats.converged


def test_complex_eigenvalue(dahlquist_config):
    lam = complex(-1.0, 2.0)
    solution, stats = run(dahlquist_config(mode="PFASST-ER-Q", p_steps=3, dahlquist_lambda=lam))
    assert stats.converged
    expected = sequential_collocation(lam, 0.1, 2, 3)
    np.testing.assert_allclose(solution.final, expected[-1][-1], atol=1e-10)


def test_unconverged_run_is_reported(dahlquist_config, caplog):
    with caplog.at_level(logging.WARNING, logger="pfasst_er"):
        _, stats = run(dahlquist_config(mode="PFASST", p_steps=3, max_outer=1, tol_outer=1e-15))
    assert not stats.converged
    assert stats.summary()["converged"] is False
    assert len(stats.residual_history) == 1
    assert "did not converge" in caplog.text


def test_totals_equal_sums_of_parts(dahlquist_config):
    _, stats = run(dahlquist_config(mode="PFASST-ER-Qdelta", p_steps=3))
    assert stats.linear_solves_total == sum(
        s.fine.linear_solves + s.coarse.linear_solves for s in stats.steps
    )
    assert stats.gmres_iterations_total == sum(stats.node_gmres) == sum(stats.group_gmres)


def test_sweep_failures_name_step_and_level(dahlquist_config):
    class WrongJacobian(Dahlquist):
        def jacobian_at(self, u0):
            return DahlquistJacobian(u0, 0.9)

    config = dahlquist_config(mode="SL-SDC", dt=1.0, tol_newton=1e-14, newton_max=10)
    with pytest.raises(NewtonDivergenceError) as info:
        Controller(config, problem=WrongJacobian(-1.0)).run()
    assert info.value.step == 0
    assert info.value.level == "fine"


def test_pfasst_on_allen_cahn_agrees_with_sdc(dahlquist_config):
    overrides = dict(problem="allen-cahn", n_fine=16, total_steps=2, dt=1e-3,
                     ac_reaction="cubic", tol_outer=1e-10)
    sdc, sdc_stats = run(dahlquist_config(mode="SL-SDC", **overrides))
    pfasst, pfasst_stats = run(dahlquist_config(mode="PFASST-ER-Q", p_steps=2, **overrides))
    assert sdc_stats.converged and pfasst_stats.converged
    assert np.abs(sdc.final - pfasst.final).max() <= 1e-8


@pytest.mark.parametrize("mode", ["SL-SDC", "MLSDC", "PFASST"])
@pytest.mark.parametrize("newton_max", [1, 50])
def test_newton_modes_converge_below_newton_threshold(dahlquist_config, mode, newton_max):
    p_steps = 3 if mode == "PFASST" else 1
    config = dahlquist_config(
        mode=mode, p_steps=p_steps, tol_outer=1e-12, tol_newton=1e-11, newton_max=newton_max
    )
    solution, stats = run(config)
    assert stats.converged
    assert all(block.residual_history[-1] <= 1e-12 for block in stats.blocks)
    for nodes, reference in zip(solution.nodes, sequential_collocation(-1.0, 0.1, 2, 3)):
        np.testing.assert_allclose(nodes, reference, atol=1e-11)


def test_spread_start_stalls_single_quasi_newton_step(dahlquist_config):
    """One QN step from u0 ignores the iterate, so the outer iteration cannot converge."""
    overrides = dict(problem="allen-cahn", n_fine=16, total_steps=2, dt=1e-3,
                     ac_reaction="cubic", tol_outer=1e-10, mode="PFASST-ER-Q", p_steps=2, n_qn=1)
    _, spread_stats = run(dahlquist_config(qn_initial_guess="spread", max_outer=15, **overrides))
    _, previous_stats = run(dahlquist_config(qn_initial_guess="previous", **overrides))
    assert not spread_stats.converged
    assert spread_stats.blocks[0].residual_history[-1] > 1e-10
    assert previous_stats.converged


def test_block_size_must_be_multiple_of_step_workers(dahlquist_config):
    config = dataclasses.replace(dahlquist_config(mode="PFASST", total_steps=6, p_steps=2), block_size=3)
    with pytest.raises(LayoutError, match="not a multiple"):
        Controller(config)
