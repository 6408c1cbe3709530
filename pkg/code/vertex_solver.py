"""
LeverageCycle - Vertex Solver
=============================
Closed-form equilibrium at a simplex vertex, where one agent consumes the
whole dividend and prices are those of that agent's representative-agent
economy. Supplies the Dirichlet data of every edge and interior solve.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from errors import InvalidParameterError, TransversalityError
from model_core import AgentSpec, EconomyParams


@dataclass
class VertexSolution:
    dominant: int
    theta: float
    r: float
    sigma: float
    nu: np.ndarray
    V: np.ndarray


def _check_index(i: int, agents: Sequence[AgentSpec]):
    if not 0 <= i < len(agents):
        raise InvalidParameterError("agent index out of range", {"index": i, "agents": len(agents)})


def vertex_aggregates(j: int, agents: Sequence[AgentSpec],
                      params: EconomyParams) -> Tuple[float, float, float]:
    """(theta, r, sigma) when agent j dominates"""
    _check_index(j, agents)
    g = agents[j].gamma
    sd = params.sigma_D
    theta = sd * g
    r = params.rho + params.mu_D * g - g * (1.0 + g) * sd ** 2 / 2.0
    return theta, r, sd


def vertex_adjustment(i: int, j: int, agents: Sequence[AgentSpec],
                      params: EconomyParams, benchmark: bool = False) -> float:
    """Adjustment of agent i at the vertex of agent j"""
    _check_index(i, agents)
    _check_index(j, agents)
    agent = agents[i]
    if benchmark or not agent.constrained:
        return 0.0
    return min(0.0, (agent.margin * agent.gamma - agents[j].gamma) * params.sigma_D ** 2)


def vertex_V(i: int, j: int, agents: Sequence[AgentSpec], params: EconomyParams,
             benchmark: bool = False) -> float:
    """Wealth/consumption ratio of agent i at the vertex of agent j"""
    dominant = agents[j]
    if dominant.constrained and not benchmark and dominant.margin < 1.0:
        raise InvalidParameterError(
            "dominant agent cannot hold the market with margin below one",
            {"agent": j, "margin": dominant.margin},
        )
    theta, r, sd = vertex_aggregates(j, agents, params)
    nu = vertex_adjustment(i, j, agents, params, benchmark)
    agent = agents[i]
    g = agent.gamma
    delta = 0.0 if nu == 0.0 else -agent.margin * nu
    kappa = theta + nu / sd
    denom = params.rho - (1.0 - g) * (kappa ** 2 / (2.0 * g) + r + delta)
    if not denom > 0:
        raise TransversalityError(
            "wealth/consumption ratio is unbounded at this vertex",
            {"agent": i, "dominant": j, "gamma": g, "denominator": denom},
        )
    return g / denom


def solve_vertex(j: int, agents: Sequence[AgentSpec], params: EconomyParams,
                 benchmark: bool = False) -> VertexSolution:
    theta, r, sigma = vertex_aggregates(j, agents, params)
    idx = range(len(agents))
    return VertexSolution(
        dominant=j,
        theta=theta,
        r=r,
        sigma=sigma,
        nu=np.array([vertex_adjustment(i, j, agents, params, benchmark) for i in idx]),
        V=np.array([vertex_V(i, j, agents, params, benchmark) for i in idx]),
    )
