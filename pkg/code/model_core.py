"""
LeverageCycle - Model Core
==========================
Domain types and the closed-form aggregate maps of the margin-constrained
heterogeneous-agent economy.

A state is the vector of consumption weights. Given per-agent adjustments
nu and the stock diffusion sigma, everything else (market price of risk,
interest rate, consumption-weight dynamics) is an explicit formula.

Each public map has a vectorized "_field" counterpart working on arrays of
shape (P, N) so the grid solvers can evaluate all points at once.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidAdjustmentError, InvalidParameterError


# Margin sentinel for agents without a borrowing limit
UNCONSTRAINED = math.inf

# Tolerance for weight validation
WEIGHT_TOL = 1e-12


# ============================================================================
# Domain types
# ============================================================================

@dataclass(frozen=True)
class EconomyParams:
    """Dividend process and time preference"""
    mu_D: float = 0.01
    sigma_D: float = 0.032
    rho: float = 0.02

    def __post_init__(self):
        if not self.sigma_D > 0:
            raise InvalidParameterError("sigma_D must be positive", {"sigma_D": self.sigma_D})
        if not self.rho > 0:
            raise InvalidParameterError("rho must be positive", {"rho": self.rho})


@dataclass(frozen=True)
class AgentSpec:
    """One CRRA agent: relative risk aversion and margin cap"""
    gamma: float
    margin: float = UNCONSTRAINED

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError("gamma must be positive", {"gamma": self.gamma})
        if not self.margin > 0:
            raise InvalidParameterError("margin must be positive", {"margin": self.margin})

    @property
    def constrained(self) -> bool:
        return math.isfinite(self.margin)


@dataclass(frozen=True)
class StatePoint:
    """Consumption weights of the first N-1 agents; the last is implied"""
    omega: Tuple[float, ...]

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        object.__setattr__(self, "omega", omega)
        if any(w < -WEIGHT_TOL for w in omega) or sum(omega) > 1.0 + WEIGHT_TOL:
            raise InvalidParameterError("consumption weights outside the simplex", {"omega": omega})

    @property
    def full_weights(self) -> np.ndarray:
        w = np.clip(np.asarray(self.omega, dtype=float), 0.0, 1.0)
        return np.append(w, max(0.0, 1.0 - w.sum()))

    @classmethod
    def vertex(cls, j: int, n_agents: int) -> "StatePoint":
        """State where agent j consumes everything"""
        full = np.zeros(n_agents)
        full[j] = 1.0
        return cls(tuple(full[:-1]))


@dataclass
class MarketState:
    """Aggregates at one state point"""
    theta: float
    r: float
    sigma: float
    nu: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        if np.any(self.nu > 0):
            raise InvalidAdjustmentError("adjustments must be non-positive", {"nu": self.nu})
        if not self.sigma > 0:
            raise InvalidParameterError("stock diffusion must be positive", {"sigma": self.sigma})


@dataclass
class WeightDynamics:
    """Drift and diffusion of each agent's consumption weight (per unit weight)"""
    mu_w: np.ndarray
    sigma_w: np.ndarray


@dataclass
class MarginalGamma:
    """Risk-aversion level whose consumption weight has zero volatility"""
    unconstrained: float
    by_agent: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ============================================================================
# Parameter arrays
# ============================================================================

def gammas(agents: Sequence[AgentSpec]) -> np.ndarray:
    return np.array([a.gamma for a in agents], dtype=float)


def margins(agents: Sequence[AgentSpec], benchmark: bool = False) -> np.ndarray:
    """Margin caps; benchmark=True treats every agent as unconstrained"""
    if benchmark:
        return np.full(len(agents), UNCONSTRAINED)
    return np.array([a.margin for a in agents], dtype=float)


# ============================================================================
# Vectorized kernels: W (P, N), nu (P, N), sigma (P,)
# ============================================================================

def support_field(nu: np.ndarray, m: np.ndarray) -> np.ndarray:
    """delta_i(nu_i) = -m_i nu_i, and 0 for unconstrained agents"""
    finite = np.isfinite(m)
    return np.where(finite, -np.where(finite, m, 0.0) * nu, 0.0)


def theta_field(W: np.ndarray, nu: np.ndarray, sigma: np.ndarray,
                g: np.ndarray, sigma_D: float) -> np.ndarray:
    xi = W @ (1.0 / g)
    if np.any(xi <= 0):
        raise InvalidParameterError("weighted risk tolerance must be positive")
    big_xi = (W * nu / g).sum(axis=-1)
    return (sigma_D - big_xi / sigma) / xi


def kappa_field(theta: np.ndarray, nu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return theta[..., None] + nu / sigma[..., None]


def rate_field(W: np.ndarray, nu: np.ndarray, kappa: np.ndarray, g: np.ndarray,
               m: np.ndarray, params: EconomyParams) -> np.ndarray:
    xi = W @ (1.0 / g)
    delta = support_field(nu, m)
    prudence = 0.5 * ((1.0 + g) / g ** 2 * kappa ** 2 * W).sum(axis=-1)
    return (params.mu_D + params.rho * xi - (W / g * delta).sum(axis=-1) - prudence) / xi


def dynamics_field(nu: np.ndarray, kappa: np.ndarray, r: np.ndarray, g: np.ndarray,
                   m: np.ndarray, params: EconomyParams) -> Tuple[np.ndarray, np.ndarray]:
    """(mu_w, sigma_w) per agent; weight drift/diffusion are these times omega_i"""
    delta = support_field(nu, m)
    sd = params.sigma_D
    mu_w = (r[..., None] + delta - params.rho + 0.5 * (1.0 + g) / g * kappa ** 2
            - sd * kappa) / g + sd ** 2 - params.mu_D
    sigma_w = kappa / g - sd
    return mu_w, sigma_w


def gamma_star_field(W: np.ndarray, nu: np.ndarray, sigma: np.ndarray,
                     g: np.ndarray, sigma_D: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unconstrained-branch level (P,) and per-agent level (P, N)"""
    xi = W @ (1.0 / g)
    big_xi = (W * nu / g).sum(axis=-1)
    base = 1.0 / xi - big_xi / (xi * sigma_D * sigma)
    return base, base[..., None] + nu / (sigma_D * sigma[..., None])


def consumption_moments(nu: np.ndarray, kappa: np.ndarray, r: np.ndarray, g: np.ndarray,
                        m: np.ndarray, params: EconomyParams) -> Tuple[np.ndarray, np.ndarray]:
    """Individual consumption growth drift and diffusion"""
    delta = support_field(nu, m)
    mu_c = (r[..., None] - params.rho + delta) / g + (1.0 + g) / (2.0 * g ** 2) * kappa ** 2
    return mu_c, kappa / g


# ============================================================================
# Point maps
# ============================================================================

def support_value(agent: AgentSpec, nu: float) -> float:
    """Support function of the margin constraint set, evaluated at nu"""
    if not agent.constrained:
        return 0.0
    if nu > 0:
        raise InvalidAdjustmentError(
            "adjustment outside the effective domain (must be <= 0)",
            {"nu": nu, "margin": agent.margin},
        )
    return -agent.margin * nu


def _point_arrays(state: StatePoint, nu: Sequence[float], sigma: float,
                  agents: Sequence[AgentSpec]):
    W = state.full_weights
    if len(W) != len(agents):
        raise InvalidParameterError(
            "state dimension does not match agent count",
            {"weights": len(W), "agents": len(agents)},
        )
    if not sigma > 0:
        raise InvalidParameterError("stock diffusion must be positive", {"sigma": sigma})
    nu_arr = np.asarray(nu, dtype=float).reshape(1, -1)
    return W[None, :], nu_arr, np.array([float(sigma)])


def market_price_of_risk(state: StatePoint, nu: Sequence[float], sigma: float,
                         agents: Sequence[AgentSpec], params: EconomyParams) -> float:
    W, nu_arr, s = _point_arrays(state, nu, sigma, agents)
    return float(theta_field(W, nu_arr, s, gammas(agents), params.sigma_D)[0])


def interest_rate(state: StatePoint, nu: Sequence[float], sigma: float, theta: float,
                  agents: Sequence[AgentSpec], params: EconomyParams) -> float:
    W, nu_arr, s = _point_arrays(state, nu, sigma, agents)
    kappa = kappa_field(np.array([theta]), nu_arr, s)
    return float(rate_field(W, nu_arr, kappa, gammas(agents), margins(agents), params)[0])


def market_state(state: StatePoint, nu: Sequence[float], sigma: float,
                 agents: Sequence[AgentSpec], params: EconomyParams) -> MarketState:
    """Assemble theta, r and kappa from adjustments and stock diffusion"""
    for agent, n in zip(agents, nu):
        support_value(agent, n)
    theta = market_price_of_risk(state, nu, sigma, agents, params)
    r = interest_rate(state, nu, sigma, theta, agents, params)
    nu_arr = np.asarray(nu, dtype=float)
    return MarketState(theta=theta, r=r, sigma=float(sigma), nu=nu_arr,
                       kappa=theta + nu_arr / sigma)


def weight_dynamics(state: StatePoint, market: MarketState, agents: Sequence[AgentSpec],
                    params: EconomyParams) -> WeightDynamics:
    mu_w, sigma_w = dynamics_field(
        market.nu[None, :], market.kappa[None, :], np.array([market.r]),
        gammas(agents), margins(agents), params,
    )
    return WeightDynamics(mu_w=mu_w[0], sigma_w=sigma_w[0])


def marginal_gamma(state: StatePoint, market: MarketState, agents: Sequence[AgentSpec],
                   params: EconomyParams) -> MarginalGamma:
    base, per_agent = gamma_star_field(
        state.full_weights[None, :], market.nu[None, :], np.array([market.sigma]),
        gammas(agents), params.sigma_D,
    )
    return MarginalGamma(unconstrained=float(base[0]), by_agent=per_agent[0])


# ============================================================================
# Complete-market path (no adjustments anywhere)
# ============================================================================

def complete_market_state(state: StatePoint, sigma: float, agents: Sequence[AgentSpec],
                          params: EconomyParams) -> MarketState:
    """Aggregates of the unconstrained economy, written without nu or delta"""
    W = state.full_weights
    g = gammas(agents)
    xi = float(W @ (1.0 / g))
    theta = params.sigma_D / xi
    r = (params.mu_D + params.rho * xi
         - 0.5 * float(((1.0 + g) / g ** 2 * theta ** 2 * W).sum())) / xi
    return MarketState(theta=theta, r=r, sigma=float(sigma), nu=np.zeros(len(agents)),
                       kappa=np.full(len(agents), theta))


def complete_market_dynamics(market: MarketState, agents: Sequence[AgentSpec],
                             params: EconomyParams) -> WeightDynamics:
    g = gammas(agents)
    theta, sd = market.theta, params.sigma_D
    mu_w = (market.r - params.rho + 0.5 * (1.0 + g) / g * theta ** 2 - sd * theta) / g \
        + sd ** 2 - params.mu_D
    return WeightDynamics(mu_w=mu_w, sigma_w=theta / g - sd)


def validate_agents(agents: Sequence[AgentSpec], allowed: Optional[Tuple[int, ...]] = None) -> List[AgentSpec]:
    agents = list(agents)
    if not agents:
        raise InvalidParameterError("at least one agent is required")
    if allowed is not None and len(agents) not in allowed:
        raise InvalidParameterError(
            "unsupported agent count", {"agents": len(agents), "allowed": allowed}
        )
    return agents
