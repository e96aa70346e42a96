"""Tests for collocation nodes and quadrature matrices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfasst_er.core.quadrature import (
    FactorizationError,
    NotDiagonalizableError,
    QuadratureError,
    QuadratureRule,
    build_Q,
    build_QDelta_Euler,
    build_QDelta_LU,
    diagonalize,
    lu_nopivot,
    radau_right_nodes
)


def test_single_node_is_endpoint():
    """M=1 gives only the right boundary."""
    assert radau_right_nodes(1, 0.0, 1.0) == [1.0]


def test_two_nodes_reference_values():
    """M=2 nodes on [0, 1] and the affine map to [2, 4]."""
    np.testing.assert_allclose(radau_right_nodes(2, 0.0, 1.0), [1 / 3, 1.0], atol=1e-15)
    np.testing.assert_allclose(radau_right_nodes(2, 2.0, 4.0), [2 + 2 / 3, 4.0], atol=1e-14)


def test_three_nodes_reference_values():
    """M=3 nodes are (4 -+ sqrt(6)) / 10 and 1."""
    expected = [(4 - np.sqrt(6)) / 10, (4 + np.sqrt(6)) / 10, 1.0]
    np.testing.assert_allclose(radau_right_nodes(3, 0.0, 1.0), expected, atol=1e-14)


@pytest.mark.parametrize("M", [1, 2, 3, 4, 5, 7])
def test_nodes_increasing_and_last_is_boundary(M):
    nodes = radau_right_nodes(M, -0.5, 1.5)
    assert nodes[-1] == 1.5
    assert all(a < b for a, b in zip(nodes, nodes[1:]))
    assert nodes[0] > -0.5


@pytest.mark.parametrize("args", [(0, 0.0, 1.0), (-2, 0.0, 1.0), (3, 1.0, 1.0), (3, 2.0, 1.0)])
def test_invalid_node_arguments(args):
    with pytest.raises(QuadratureError):
        radau_right_nodes(*args)


def test_Q_single_node():
    np.testing.assert_allclose(build_Q([1.0], 0.0, 1.0), [[1.0]])


def test_Q_two_nodes():
    """Hand-integrated Lagrange weights for nodes 1/3 and 1."""
    Q = build_Q(radau_right_nodes(2, 0.0, 1.0), 0.0, 1.0)
    np.testing.assert_allclose(Q, [[5 / 12, -1 / 12], [3 / 4, 1 / 4]], atol=1e-15)


def test_Q_duplicate_nodes_rejected():
    with pytest.raises(QuadratureError):
        build_Q([0.5, 0.5, 1.0], 0.0, 1.0)


@given(M=st.integers(min_value=1, max_value=8),
       t_left=st.floats(min_value=-10.0, max_value=10.0),
       length=st.floats(min_value=0.01, max_value=10.0))
@settings(max_examples=40, deadline=None)
def test_Q_row_sums_are_normalized_nodes(M, t_left, length):
    """Integrating the constant one gives the node positions."""
    rule = QuadratureRule.build(M, t_left, t_left + length)
    np.testing.assert_allclose(rule.Q.sum(axis=1), rule.normalized_nodes, atol=1e-12)


def test_Q_is_invariant_under_interval_map():
    """Normalized Q does not depend on the interval."""
    Q_unit = QuadratureRule.build(4, 0.0, 1.0).Q
    Q_shifted = QuadratureRule.build(4, 3.0, 3.25).Q
    np.testing.assert_allclose(Q_unit, Q_shifted, atol=1e-12)


@pytest.mark.parametrize("M", [2, 3, 4, 5])
def test_Q_rows_exact_for_degree_below_M(M):
    rule = QuadratureRule.build(M)
    tau = rule.normalized_nodes
    for d in range(M):
        np.testing.assert_allclose(rule.Q @ tau**d, tau**(d + 1) / (d + 1), atol=1e-13)


def test_full_interval_row_radau_exactness():
    """The last row of M=4 integrates monomials up to degree 6."""
    rule = QuadratureRule.build(4)
    tau = rule.normalized_nodes
    for d in range(2 * 4 - 1):
        assert abs(rule.Q[-1] @ tau**d - 1.0 / (d + 1)) <= 1e-13


def test_collocation_order_on_dahlquist():
    """Dense M=4 collocation converges to exp(-1) with order close to seven."""
    lam = -1.0
    step_sizes = [0.5, 0.25, 0.125]
    errors = []
    for dt in step_sizes:
        rule = QuadratureRule.build(4, 0.0, dt)
        system = np.eye(4) - dt * lam * rule.Q
        u = 1.0
        for _ in range(int(round(1.0 / dt))):
            u = np.linalg.solve(system, np.full(4, u))[-1]
        errors.append(abs(u - np.exp(lam)))
    # dt = 0.0625 already sits at roundoff level
    slope = np.polyfit(np.log(step_sizes), np.log(errors), 1)[0]
    assert slope >= 6.5


def test_QDelta_LU_single_node():
    np.testing.assert_allclose(build_QDelta_LU(np.array([[1.0]])), [[1.0]])


def test_QDelta_LU_two_nodes():
    Q = build_Q(radau_right_nodes(2, 0.0, 1.0), 0.0, 1.0)
    np.testing.assert_allclose(build_QDelta_LU(Q), [[5 / 12, 0.0], [3 / 4, 2 / 5]], atol=1e-15)


@pytest.mark.parametrize("M", [2, 3, 4, 5])
def test_lu_trick_reconstructs_Q_transpose(M):
    Q = QuadratureRule.build(M).Q
    L, U = lu_nopivot(Q.T)
    np.testing.assert_allclose(L @ U, Q.T, atol=1e-13)
    np.testing.assert_allclose(np.diag(L), np.ones(M))
    Q_delta = build_QDelta_LU(Q)
    assert np.all(np.triu(Q_delta, k=1) == 0.0)
    np.testing.assert_allclose(Q_delta, U.T)


def test_lu_zero_pivot():
    with pytest.raises(FactorizationError):
        lu_nopivot(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_QDelta_Euler_two_nodes():
    nodes = radau_right_nodes(2, 0.0, 1.0)
    np.testing.assert_allclose(build_QDelta_Euler(nodes), [[1 / 3, 0.0], [1 / 3, 2 / 3]], atol=1e-15)
    np.testing.assert_allclose(build_QDelta_Euler([1.0]), [[1.0]])


@pytest.mark.parametrize("M", [1, 3, 5])
def test_QDelta_Euler_rows_telescope(M):
    rule = QuadratureRule.build(M, 1.0, 3.0, qdelta_type="IE")
    np.testing.assert_allclose(rule.Q_delta.sum(axis=1), rule.normalized_nodes, atol=1e-14)
    assert np.all(np.triu(rule.Q_delta, k=1) == 0.0)


def test_unknown_qdelta_type():
    with pytest.raises(QuadratureError):
        QuadratureRule.build(3, qdelta_type="MIN")


def test_diagonalize_identity():
    result = diagonalize(np.eye(3))
    np.testing.assert_allclose(result.V, np.eye(3))
    np.testing.assert_allclose(result.Lambda, np.eye(3))
    assert not result.ill_conditioned


def test_diagonalize_two_node_qdelta():
    Q_delta = np.array([[5 / 12, 0.0], [3 / 4, 2 / 5]])
    result = diagonalize(Q_delta)
    np.testing.assert_allclose(result.eigenvalues, [2 / 5, 5 / 12], atol=1e-15)
    np.testing.assert_allclose(result.reconstruct(), Q_delta, atol=1e-14)


@pytest.mark.parametrize("M", [2, 3, 4, 5])
@pytest.mark.parametrize("qdelta_type", ["LU", "IE"])
def test_diagonalization_round_trip(M, qdelta_type):
    rule = QuadratureRule.build(M, qdelta_type=qdelta_type)
    for matrix, factors in ((rule.Q, rule.diag_Q), (rule.Q_delta, rule.diag_Qdelta)):
        norm = np.linalg.norm(matrix, np.inf)
        assert np.linalg.norm(factors.reconstruct() - matrix, np.inf) <= 1e-12 * norm
        assert abs(factors.eigenvalues.sum().imag) <= 1e-13


def test_eigenvalue_ordering():
    """Ascending real part, then ascending imaginary part."""
    eigenvalues = QuadratureRule.build(4).diag_Q.eigenvalues
    keys = list(zip(eigenvalues.real, eigenvalues.imag))
    assert keys == sorted(keys)
    complex_ones = eigenvalues[np.abs(eigenvalues.imag) > 1e-12]
    np.testing.assert_allclose(np.sort_complex(complex_ones), np.sort_complex(complex_ones.conj()))


def test_diagonalize_repeated_eigenvalue():
    with pytest.raises(NotDiagonalizableError):
        diagonalize(np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_diagonalize_flags_ill_conditioning():
    """Nearly parallel eigenvectors trip the condition flag."""
    A = np.array([[1.0, 1.0], [0.0, 1.0 + 1e-9]])
    result = diagonalize(A)
    assert result.ill_conditioned
    assert result.condition > 1e8


def test_rule_selects_factorization():
    rule = QuadratureRule.build(3)
    assert rule.diagonalization("Q") is rule.diag_Q
    assert rule.diagonalization("Qdelta") is rule.diag_Qdelta
    with pytest.raises(QuadratureError):
        rule.diagonalization("LU")
