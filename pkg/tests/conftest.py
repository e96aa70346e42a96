"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from pfasst_er.config import load_config
from pfasst_er.core.linsolve import GMRESSettings
from pfasst_er.core.problems import Dahlquist
from pfasst_er.core.quadrature import QuadratureRule


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale acceptance runs")


@pytest.fixture
def dahlquist():
    """Scalar test equation with lambda = -1."""
    return Dahlquist(-1.0)


@pytest.fixture
def rule4():
    """Four-node Radau IIA rule on [0, 1] with the LU-trick preconditioner."""
    return QuadratureRule.build(4)


@pytest.fixture
def gmres_settings():
    """Tight inner solver settings."""
    return GMRESSettings(rel_tol=1e-13, restart=30, max_iter=200)


@pytest.fixture
def dense_collocation():
    """Dense collocation solution of u' = lam u over one step."""
    def solve(rule, dt, lam, u0=1.0):
        system = np.eye(rule.M) - dt * lam * rule.Q
        return np.linalg.solve(system, np.full(rule.M, u0)).reshape(rule.M, 1)
    return solve


@pytest.fixture
def dahlquist_config():
    """Effective configuration for small Dahlquist runs."""
    def make(**overrides):
        base = {"problem": "dahlquist", "total_steps": 3, "dt": 0.1, "num_nodes": 2,
                "tol_outer": 1e-12}
        base.update(overrides)
        return load_config(overrides=base)
    return make
