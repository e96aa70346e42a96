"""Desk-scale benchmark runs on Allen-Cahn and Gray-Scott."""

import itertools

import numpy as np
import pytest

from pfasst_er.config import load_config
from pfasst_er.core.controller import run
from pfasst_er.tools.experiment_tool import ExperimentTool

pytestmark = pytest.mark.slow

ALL_MODES = ["SL-SDC", "MLSDC", "PFASST", "PFASST-ER-Qdelta", "PFASST-ER-Q"]


def allen_cahn(**overrides):
    base = {"problem": "allen-cahn", "ac_reaction": "cubic", "n_fine": 64, "total_steps": 8,
            "dt": 1e-3, "tol_outer": 1e-10}
    base.update(overrides)
    return load_config(overrides=base)


def gray_scott(**overrides):
    base = {"problem": "gray-scott", "gs_coupling": "printed", "n_fine": 64, "total_steps": 8,
            "dt": 1.0, "tol_outer": 1e-12}
    base.update(overrides)
    return load_config(overrides=base)


def mode_settings(mode, steps=8):
    if mode in ("SL-SDC", "MLSDC"):
        return {"mode": mode}
    return {"mode": mode, "p_steps": steps}


@pytest.fixture(scope="module")
def ac_runs():
    """Every mode on the Allen-Cahn desk run with eight parallel steps."""
    return {mode: run(allen_cahn(**mode_settings(mode))) for mode in ALL_MODES}


def test_allen_cahn_layouts_agree():
    """Test node values and counters of every layout against the serial one."""
    reference, reference_stats = run(allen_cahn(mode="PFASST-ER-Q", block_size=8))
    for p_steps, p_nodes in itertools.product([1, 2, 4, 8], [1, 2, 4]):
        if (p_steps, p_nodes) == (1, 1):
            continue
        solution, stats = run(allen_cahn(
            mode="PFASST-ER-Q", block_size=8, p_steps=p_steps, p_nodes=p_nodes
        ))
        for a, b in zip(solution.nodes, reference.nodes):
            assert np.abs(a - b).max() <= 1e-12
        assert stats.outer_iterations == reference_stats.outer_iterations
        assert stats.linear_solves_total == reference_stats.linear_solves_total


def test_all_modes_converge_to_the_same_solution(ac_runs):
    tol = 1e-10
    for mode, (_, stats) in ac_runs.items():
        assert stats.converged, mode
    for (a, (sa, _)), (b, (sb, _)) in itertools.combinations(ac_runs.items(), 2):
        assert np.abs(sa.final - sb.final).max() <= 100 * tol, (a, b)


def test_full_preconditioner_needs_fewer_solves(ac_runs):
    q_solves = ac_runs["PFASST-ER-Q"][1].linear_solves_total
    qdelta_solves = ac_runs["PFASST-ER-Qdelta"][1].linear_solves_total
    assert q_solves < qdelta_solves


def test_inexact_newton_needs_fewer_solves(ac_runs):
    _, single = run(allen_cahn(mode="PFASST", p_steps=8, newton_max=1))
    assert single.converged
    assert ac_runs["PFASST"][1].linear_solves_total >= single.linear_solves_total


def test_node_imbalance_and_grouping():
    _, stats = run(allen_cahn(mode="PFASST-ER-Qdelta", p_steps=8, p_nodes=2))
    node_gmres = np.array(stats.node_gmres)
    assert node_gmres.max() / node_gmres.min() > 1.0
    groups = stats.group_gmres
    assert len(groups) == 2
    assert abs(groups[0] - groups[1]) < node_gmres.max() - node_gmres.min()


def test_gray_scott_modes_converge_and_agree():
    solutions = {}
    for mode in ALL_MODES:
        solution, stats = run(gray_scott(**mode_settings(mode)))
        assert stats.converged, mode
        assert all(block.iterations <= 100 for block in stats.blocks)
        solutions[mode] = solution.final
    for a, b in itertools.combinations(solutions.values(), 2):
        assert np.abs(a - b).max() <= 1e-9


def test_csv_is_byte_identical_across_reruns():
    tool = ExperimentTool()
    config = allen_cahn(mode="PFASST-ER-Qdelta", total_steps=4, n_fine=32, p_steps=2, p_nodes=2)
    first = tool.format_stats(tool.run_experiment(config), "csv")
    second = tool.format_stats(tool.run_experiment(config), "csv")
    assert first == second
