"""
LeverageCycle - Shared Test Fixtures
====================================
Puts code/ on the import path and caches the two-agent solves that several
test modules reuse.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "code"))

import pytest


@pytest.fixture(scope="session")
def params():
    from model_core import EconomyParams
    return EconomyParams(mu_D=0.01, sigma_D=0.032, rho=0.02)


@pytest.fixture(scope="session")
def calibrated_agents():
    """Risk-tolerant and risk-averse agent, both with margin 1.2"""
    from model_core import AgentSpec
    return [AgentSpec(1.1, 1.2), AgentSpec(5.0, 1.2)]


@pytest.fixture(scope="session")
def calibrated_edge(params, calibrated_agents):
    from edge_solver import EdgeProblem, solve_edge
    return solve_edge(EdgeProblem(agents=calibrated_agents, P=40), params)


@pytest.fixture(scope="session")
def calibrated_edge_benchmark(params, calibrated_agents):
    from edge_solver import EdgeProblem, solve_edge
    return solve_edge(EdgeProblem(agents=calibrated_agents, P=40, benchmark=True, label="benchmark"),
                      params)


@pytest.fixture(scope="session")
def homogeneous_edge(params):
    from edge_solver import EdgeProblem, solve_edge
    from model_core import AgentSpec
    agents = [AgentSpec(2.0), AgentSpec(2.0)]
    return solve_edge(EdgeProblem(agents=agents, P=10), params)
