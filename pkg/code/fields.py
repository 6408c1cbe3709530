"""
LeverageCycle - Solution Fields
===============================
Per-grid-point solution arrays shared by the edge and simplex solvers,
post-processing and the simulator, plus the convergence report.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from model_core import AgentSpec, EconomyParams, gammas
from simplex_grid import SimplexGrid


@dataclass
class SolutionFields:
    """
    Converged equilibrium on a grid.

    coords:  (L, d) state coordinates (first N-1 weights)
    weights: (L, N) full consumption weights
    V, nu, kappa, hedge, pi, active: (L, N) per agent
    sigma, theta, r: (L,)
    hedge is sum_j s_j dV_i/dx_j / V_i with the solver's difference operator.
    """
    coords: np.ndarray
    weights: np.ndarray
    classes: List[str]
    V: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    kappa: np.ndarray
    hedge: np.ndarray
    pi: np.ndarray
    active: np.ndarray
    agents: Sequence[AgentSpec]
    params: EconomyParams
    benchmark: bool = False
    grid: Optional[SimplexGrid] = None

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def n_agents(self) -> int:
        return self.weights.shape[1]

    @property
    def S(self) -> np.ndarray:
        return (self.weights * self.V).sum(axis=1)

    def gammas(self) -> np.ndarray:
        return gammas(self.agents)


@dataclass
class ConvergenceReport:
    stage: str
    steps: int = 0
    update_norm: float = float("nan")
    residual: float = float("nan")
    dt_history: List[Tuple[int, float]] = field(default_factory=list)
    fallbacks: int = 0
    active_counts: Dict[str, int] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "steps": self.steps,
            "update_norm": self.update_norm,
            "residual": self.residual,
            "dt_history": [[s, dt] for s, dt in self.dt_history],
            "fallbacks": self.fallbacks,
            "active_counts": dict(self.active_counts),
            "warnings": list(self.warnings),
            **self.extra,
        }
