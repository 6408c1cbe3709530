"""
LeverageCycle - Edge Solver
===========================
Two-agent economy on the unit interval: the standalone N=2 solver and the
boundary solver for each edge of the three-agent simplex.

For every agent i the stationary ODE

    A_i V_i + B_i V_i' + C V_i'' + 1 = 0

is marched in pseudo-time with an implicit step whose coefficients are
frozen at the current iterate (Picard). Each step solves the per-point
fixed point for (nu, sigma), rebuilds A, B, C and performs one
tridiagonal solve per agent. The agent with zero weight on the edge is
solved too; its values are the boundary data of the three-agent solve.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import InvalidParameterError, LeverageCycleError, NonConvergenceError
from events import DT_HALVED, EDGE_STEP, SOLVE_DONE, events
from fields import ConvergenceReport, SolutionFields
from fixed_point import BatchSolution, PointBatch, solve_points
from model_core import (
    AgentSpec,
    EconomyParams,
    dynamics_field,
    gammas,
    margins,
    rate_field,
    support_field,
)
from numerics import TriDiagonalSystem, solve_tridiagonal
from vertex_solver import VertexSolution, solve_vertex


PATIENCE = 25          # consecutive rising updates before the step is halved
DT_FLOOR = 1e-8        # relative to the initial step


# ============================================================================
# Pseudo-time step control (shared with the simplex solver)
# ============================================================================

class StepControl:
    """Tracks the update norm and halves dt on divergence or a rising tail"""

    def __init__(self, dt: float, stage: str, patience: int = PATIENCE):
        self.dt = dt
        self.dt_min = dt * DT_FLOOR
        self.stage = stage
        self.patience = patience
        self.history = [(0, dt)]
        self._rising = 0
        self._previous = math.inf

    def halve(self, step: int, reason: str):
        self.dt *= 0.5
        self.history.append((step, self.dt))
        self._rising = 0
        self._previous = math.inf
        events.emit(DT_HALVED, {"stage": self.stage, "step": step, "dt": self.dt, "reason": reason})
        if self.dt < self.dt_min:
            raise NonConvergenceError(
                "pseudo-time step fell below its floor",
                {"stage": self.stage, "step": step, "dt": self.dt},
            )

    def observe(self, step: int, update: float):
        if update > self._previous:
            self._rising += 1
            if self._rising >= self.patience:
                self.halve(step, "update norm not decreasing")
        else:
            self._rising = 0
        self._previous = update


def accept(V_new: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(V_new)) and np.all(V_new > 0))


# ============================================================================
# Problem and solution
# ============================================================================

@dataclass
class EdgeProblem:
    """
    pair = (state agent, residual agent): the state is the first agent's
    weight, running from 0 (residual agent dominates) to 1.
    """
    agents: Sequence[AgentSpec]
    pair: Tuple[int, int] = (0, 1)
    P: int = 100
    dt: float = 0.5
    tol_outer: float = 1e-8
    tol_point: float = 1e-10
    max_steps: int = 20000
    relaxation: float = 1.0
    benchmark: bool = False
    label: str = "edge"

    def __post_init__(self):
        a, b = self.pair
        n = len(self.agents)
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise InvalidParameterError("invalid agent pair", {"pair": self.pair, "agents": n})
        if self.P < 2:
            raise InvalidParameterError("an edge needs at least one interior point", {"P": self.P})
        if not self.dt > 0:
            raise InvalidParameterError("pseudo-time step must be positive", {"dt": self.dt})
        if not 0 < self.relaxation <= 1:
            raise InvalidParameterError("relaxation must lie in (0, 1]", {"relaxation": self.relaxation})

    @property
    def h(self) -> float:
        return 1.0 / self.P

    def omega(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.P + 1)

    def weights(self) -> np.ndarray:
        x = self.omega()
        W = np.zeros((self.P + 1, len(self.agents)))
        W[:, self.pair[0]] = x
        W[:, self.pair[1]] = 1.0 - x
        return W


@dataclass
class EdgeSolution:
    problem: EdgeProblem
    fields: SolutionFields
    report: ConvergenceReport

    @property
    def omega(self) -> np.ndarray:
        return self.problem.omega()

    @property
    def V(self) -> np.ndarray:
        return self.fields.V


@dataclass
class OdeCoefficients:
    """A, B, C at interior points, shape (P-1, N); C is shared by all agents"""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    point: BatchSolution
    r: np.ndarray


# ============================================================================
# Coefficients and linear step
# ============================================================================

def edge_coefficients(problem: EdgeProblem, V: np.ndarray, params: EconomyParams,
                      previous_active: Optional[np.ndarray] = None) -> OdeCoefficients:
    agents = problem.agents
    a, b = problem.pair
    h = problem.h
    W = problem.weights()[1:-1]
    grad = ((V[2:] - V[:-2]) / (2.0 * h))[:, :, None]

    batch = PointBatch(W, V[1:-1], grad, (a,), b)
    sol = solve_points(batch, agents, params, previous_active, problem.tol_point, problem.benchmark)

    g = gammas(agents)
    m = margins(agents, problem.benchmark)
    r = rate_field(W, sol.nu, sol.kappa, g, m, params)
    mu_w, sigma_w = dynamics_field(sol.nu, sol.kappa, r, g, m, params)
    s = W[:, a] * sigma_w[:, a]
    drift = W[:, a] * mu_w[:, a]
    delta = support_field(sol.nu, m)
    k2 = sol.kappa ** 2

    A = ((1.0 - g) * (r[:, None] + delta) - params.rho + (1.0 - g) / (2.0 * g) * k2) / g
    B = (1.0 - g) / g * sol.kappa * s[:, None] + drift[:, None]
    C = np.repeat((0.5 * s ** 2)[:, None], len(agents), axis=1)
    return OdeCoefficients(A=A, B=B, C=C, point=sol, r=r)


def _bands(coef: OdeCoefficients, h: float, inv_dt: float):
    lower = coef.C / h ** 2 - coef.B / (2.0 * h)
    diag = coef.A - 2.0 * coef.C / h ** 2 - inv_dt
    upper = coef.C / h ** 2 + coef.B / (2.0 * h)
    return lower, diag, upper


def implicit_step(coef: OdeCoefficients, V: np.ndarray, h: float, dt: float) -> np.ndarray:
    """One implicit pseudo-time step for all agents; endpoints stay fixed"""
    lower, diag, upper = _bands(coef, h, 1.0 / dt)
    rhs = -1.0 - V[1:-1] / dt
    rhs[0] -= lower[0] * V[0]
    rhs[-1] -= upper[-1] * V[-1]
    lower = lower.copy()
    upper = upper.copy()
    lower[0] = 0.0
    upper[-1] = 0.0
    V_new = V.copy()
    V_new[1:-1] = solve_tridiagonal(TriDiagonalSystem(lower, diag, upper, rhs))
    return V_new


def ode_residual(coef: OdeCoefficients, V: np.ndarray, h: float) -> float:
    lower, diag, upper = _bands(coef, h, 0.0)
    res = lower * V[:-2] + diag * V[1:-1] + upper * V[2:] + 1.0
    return float(np.max(np.abs(res), initial=0.0))


# ============================================================================
# Solve
# ============================================================================

def initial_guess(problem: EdgeProblem, low: VertexSolution, high: VertexSolution) -> np.ndarray:
    x = problem.omega()[:, None]
    return (1.0 - x) * low.V[None, :] + x * high.V[None, :]


def solve_edge(problem: EdgeProblem, params: EconomyParams) -> EdgeSolution:
    agents = problem.agents
    a, b = problem.pair
    h = problem.h
    low = solve_vertex(b, agents, params, problem.benchmark)
    high = solve_vertex(a, agents, params, problem.benchmark)

    V = initial_guess(problem, low, high)
    control = StepControl(problem.dt, problem.label)
    previous_active = None
    fallbacks = 0
    update = math.inf
    converged = False
    step = 0

    while step < problem.max_steps:
        step += 1
        try:
            coef = edge_coefficients(problem, V, params, previous_active)
        except LeverageCycleError:
            if step == 1:
                raise
            V = V_good
            control.halve(step, "point solve failed")
            continue
        V_good = V
        previous_active = coef.point.active
        fallbacks += coef.point.fallbacks

        V_new = implicit_step(coef, V, h, control.dt)
        if not accept(V_new):
            control.halve(step, "non-finite or non-positive iterate")
            continue

        update = float(np.max(np.abs(V_new - V)))
        V = V + problem.relaxation * (V_new - V)
        events.emit(EDGE_STEP, {"edge": problem.label, "step": step, "update": update,
                                "dt": control.dt})
        if update < problem.tol_outer:
            converged = True
            break
        control.observe(step, update)

    if not converged:
        raise NonConvergenceError(
            "edge iteration did not reach the stationarity tolerance",
            {"edge": problem.label, "steps": step, "update": update},
        )

    coef = edge_coefficients(problem, V, params, previous_active)
    fields = _assemble_fields(problem, V, coef, low, high, params)
    report = ConvergenceReport(
        stage=problem.label,
        steps=step,
        update_norm=update,
        residual=ode_residual(coef, V, h),
        dt_history=control.history,
        fallbacks=fallbacks + coef.point.fallbacks,
        active_counts={f"agent{i + 1}": int(fields.active[:, i].sum()) for i in range(len(agents))},
    )
    events.emit(SOLVE_DONE, {"stage": problem.label, "steps": step, "residual": report.residual})
    return EdgeSolution(problem=problem, fields=fields, report=report)


def _vertex_row(vertex: VertexSolution, g: np.ndarray):
    kappa = vertex.theta + vertex.nu / vertex.sigma
    pi = kappa / (g * vertex.sigma)
    return kappa, pi


def _assemble_fields(problem: EdgeProblem, V: np.ndarray, coef: OdeCoefficients,
                     low: VertexSolution, high: VertexSolution,
                     params: EconomyParams) -> SolutionFields:
    agents = problem.agents
    g = gammas(agents)
    L, N = V.shape
    sol = coef.point

    def stack(first, middle, last):
        return np.concatenate([np.atleast_1d(first)[None], middle, np.atleast_1d(last)[None]])

    k_low, pi_low = _vertex_row(low, g)
    k_high, pi_high = _vertex_row(high, g)
    nu = stack(low.nu, sol.nu, high.nu)
    return SolutionFields(
        coords=problem.omega()[:, None],
        weights=problem.weights(),
        classes=["vertex"] + ["interior"] * (L - 2) + ["vertex"],
        V=V.copy(),
        nu=nu,
        sigma=np.concatenate([[low.sigma], sol.sigma, [high.sigma]]),
        theta=np.concatenate([[low.theta], sol.theta, [high.theta]]),
        r=np.concatenate([[low.r], coef.r, [high.r]]),
        kappa=stack(k_low, sol.kappa, k_high),
        hedge=stack(np.zeros(N), sol.hedge, np.zeros(N)),
        pi=stack(pi_low, sol.pi, pi_high),
        active=nu < 0,
        agents=list(agents),
        params=params,
        benchmark=problem.benchmark,
    )


def edge_residual(solution: EdgeSolution, params: EconomyParams) -> float:
    """Max stationary ODE residual over interior points and agents"""
    coef = edge_coefficients(solution.problem, solution.fields.V, params,
                             solution.fields.active[1:-1])
    return ode_residual(coef, solution.fields.V, solution.problem.h)
