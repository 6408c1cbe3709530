"""
LeverageCycle - Simplex Solver
==============================
Three-agent equilibrium on the consumption-weight triangle.

Boundary data come from the vertex closed forms and from one two-agent
edge solve per side of the triangle. Interior values are marched in
pseudo-time: per-point fixed point for (nu, sigma), nine-point stencil
assembly with Dirichlet neighbors folded into the right-hand side, one
sparse solve per agent. Points on the first diagonal next to the
hypotenuse use a one-sided cross difference so the stencil never leaves
the triangle.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from edge_solver import EdgeProblem, EdgeSolution, StepControl, accept, solve_edge
from errors import InvalidParameterError, LeverageCycleError, NonConvergenceError
from events import SIMPLEX_STEP, SOLVE_DONE, events, warn
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
from numerics import SparseSystem, solve_sparse
from simplex_grid import EDGE_AGENTS, EdgeId, PointClass, SimplexGrid
from vertex_solver import solve_vertex


# Cross-partial weights by stencil slot
CENTRAL_CROSS = {5: 1.0, 6: -1.0, 7: -1.0, 8: 1.0}       # scaled by s1 s2 / (4 h^2)
DIAGONAL_CROSS = {3: 1.0, 7: -1.0, 4: -1.0, 8: 1.0}      # scaled by s1 s2 / (2 h^2)


# ============================================================================
# Coefficients
# ============================================================================

@dataclass
class InteriorCoefficients:
    """Picard-frozen PDE coefficients at the solved points"""
    A: np.ndarray           # (n_s, N)
    beta: np.ndarray        # (n_s, N, 2)
    s: np.ndarray           # (n_s, 2) state diffusion
    r: np.ndarray           # (n_s,)
    point: BatchSolution


@dataclass
class StencilCoefficients:
    """
    a[:, i, slot] multiplies V_i at grid.stencil[point, slot]; slot order
    is self, (j+1,k), (j-1,k), (j,k+1), (j,k-1), (j+1,k+1), (j+1,k-1),
    (j-1,k+1), (j-1,k-1). b is the constant right-hand side.
    """
    a: np.ndarray           # (n_s, N, 9)
    b: np.ndarray           # (n_s, N)
    standard: np.ndarray    # central-stencil coefficients before the diagonal rewrite


def state_gradient(grid: SimplexGrid, V: np.ndarray) -> np.ndarray:
    """Central differences at solved points, shape (n_s, N, 2)"""
    st = grid.stencil[grid.solved]
    d1 = (V[st[:, 1]] - V[st[:, 2]]) / (2.0 * grid.h)
    d2 = (V[st[:, 3]] - V[st[:, 4]]) / (2.0 * grid.h)
    return np.stack([d1, d2], axis=2)


def interior_coefficients(grid: SimplexGrid, V: np.ndarray, agents: Sequence[AgentSpec],
                          params: EconomyParams, benchmark: bool = False,
                          previous_active: Optional[np.ndarray] = None,
                          tol_point: float = 1e-10) -> InteriorCoefficients:
    W = grid.full_weights()[grid.solved]
    batch = PointBatch(W, V[grid.solved], state_gradient(grid, V), (0, 1), 2)
    sol = solve_points(batch, agents, params, previous_active, tol_point, benchmark)

    g = gammas(agents)
    m = margins(agents, benchmark)
    r = rate_field(W, sol.nu, sol.kappa, g, m, params)
    mu_w, sigma_w = dynamics_field(sol.nu, sol.kappa, r, g, m, params)
    s = W[:, :2] * sigma_w[:, :2]
    drift = W[:, :2] * mu_w[:, :2]
    delta = support_field(sol.nu, m)

    A = ((1.0 - g) * (r[:, None] + delta) - params.rho
         + (1.0 - g) / (2.0 * g) * sol.kappa ** 2) / g
    beta = ((1.0 - g) / g * sol.kappa)[:, :, None] * s[:, None, :] + drift[:, None, :]
    return InteriorCoefficients(A=A, beta=beta, s=s, r=r, point=sol)


def stencil_coefficients(grid: SimplexGrid, coef: InteriorCoefficients,
                         inv_dt: float) -> StencilCoefficients:
    h = grid.h
    n_s, N = coef.A.shape
    s1 = coef.s[:, 0][:, None]
    s2 = coef.s[:, 1][:, None]
    b1 = coef.beta[:, :, 0]
    b2 = coef.beta[:, :, 1]

    a = np.zeros((n_s, N, 9))
    a[:, :, 0] = coef.A - s1 ** 2 / h ** 2 - s2 ** 2 / h ** 2 - inv_dt
    a[:, :, 1] = s1 ** 2 / (2 * h ** 2) + b1 / (2 * h)
    a[:, :, 2] = s1 ** 2 / (2 * h ** 2) - b1 / (2 * h)
    a[:, :, 3] = s2 ** 2 / (2 * h ** 2) + b2 / (2 * h)
    a[:, :, 4] = s2 ** 2 / (2 * h ** 2) - b2 / (2 * h)
    standard = a.copy()

    diagonal = np.array([grid.classes[p] is PointClass.DIAGONAL for p in grid.solved])
    central = np.broadcast_to(s1 * s2 / (4 * h ** 2), (n_s, N))
    one_sided = np.broadcast_to(s1 * s2 / (2 * h ** 2), (n_s, N))
    for slot, w in CENTRAL_CROSS.items():
        standard[:, :, slot] += w * central
        a[~diagonal, :, slot] += w * central[~diagonal]
    for slot, w in DIAGONAL_CROSS.items():
        a[diagonal, :, slot] += w * one_sided[diagonal]

    return StencilCoefficients(a=a, b=np.full((n_s, N), -1.0), standard=standard)


def diagonal_identity_gap(grid: SimplexGrid, stencil: StencilCoefficients) -> float:
    """
    Largest violation of the rewritten diagonal-point coefficients against
    the central ones: a4 + 2a6, a5 - 2a6, 2a6 at (j-1,k-1), 2a7 at (j-1,k+1),
    and nothing at (j+1,k+1) or (j+1,k-1).
    """
    diagonal = np.array([grid.classes[p] is PointClass.DIAGONAL for p in grid.solved])
    if not diagonal.any():
        return 0.0
    a = stencil.a[diagonal]
    c = stencil.standard[diagonal]
    gaps = [
        a[:, :, 3] - (c[:, :, 3] + 2 * c[:, :, 5]),
        a[:, :, 4] - (c[:, :, 4] - 2 * c[:, :, 5]),
        a[:, :, 8] - 2 * c[:, :, 5],
        a[:, :, 7] - 2 * c[:, :, 6],
        a[:, :, 5],
        a[:, :, 6],
        c[:, :, 5] + c[:, :, 6],
        c[:, :, 5] - c[:, :, 8],
    ]
    return float(max(np.max(np.abs(x)) for x in gaps))


# ============================================================================
# Assembly
# ============================================================================

def assemble_systems(grid: SimplexGrid, V: np.ndarray, stencil: StencilCoefficients,
                     inv_dt: float) -> List[SparseSystem]:
    """One sparse system per agent over the solved points"""
    solved = grid.solved
    n_s = len(solved)
    unknown = np.full(grid.size, -1, dtype=int)
    unknown[solved] = np.arange(n_s)
    st = grid.stencil[solved]
    rows_all = np.arange(n_s)

    systems = []
    for i in range(V.shape[1]):
        rhs = stencil.b[:, i] - inv_dt * V[solved, i]
        rows, cols, vals = [], [], []
        for slot in range(st.shape[1]):
            nb = st[:, slot]
            coeff = stencil.a[:, i, slot]
            used = nb >= 0
            if np.any(~used & (coeff != 0)):
                raise LeverageCycleError("stencil coefficient without a grid neighbor",
                                         {"slot": slot})
            inner = used & (unknown[np.where(used, nb, 0)] >= 0)
            known = used & ~inner
            rows.append(rows_all[inner])
            cols.append(unknown[nb[inner]])
            vals.append(coeff[inner])
            rhs[known] -= coeff[known] * V[nb[known], i]
        systems.append(SparseSystem.from_triplets(
            np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n_s, rhs,
        ))
    return systems


def assemble(grid: SimplexGrid, V: np.ndarray, dt: float, params: EconomyParams,
             agents: Sequence[AgentSpec], benchmark: bool = False) -> List[SparseSystem]:
    """Systems of one implicit step at the current fields"""
    coef = interior_coefficients(grid, V, agents, params, benchmark)
    return assemble_systems(grid, V, stencil_coefficients(grid, coef, 1.0 / dt), 1.0 / dt)


# ============================================================================
# Solve
# ============================================================================

@dataclass
class SimplexSolution:
    grid: SimplexGrid
    fields: SolutionFields
    report: ConvergenceReport
    edges: Dict[EdgeId, EdgeSolution] = field(default_factory=dict)


def _boundary_fields(grid: SimplexGrid, agents: Sequence[AgentSpec], params: EconomyParams,
                     edges: Dict[EdgeId, EdgeSolution]) -> Dict[str, np.ndarray]:
    L, N = grid.size, len(agents)
    out = {name: np.full((L, N), np.nan) for name in ("V", "nu", "kappa", "hedge", "pi")}
    out.update({name: np.full(L, np.nan) for name in ("sigma", "theta", "r")})
    out["active"] = np.zeros((L, N), dtype=bool)
    for edge, sol in edges.items():
        pts = grid.edge_points(edge)
        f = sol.fields
        for name in ("V", "nu", "kappa", "hedge", "pi", "sigma", "theta", "r", "active"):
            out[name][pts] = getattr(f, name)
    return out


def initial_interior(grid: SimplexGrid, agents: Sequence[AgentSpec], params: EconomyParams,
                     benchmark: bool = False) -> np.ndarray:
    """Barycentric blend of the three vertex solutions"""
    vertex_V = np.array([solve_vertex(j, agents, params, benchmark).V for j in range(len(agents))])
    return grid.full_weights() @ vertex_V


def monotonicity_warnings(grid: SimplexGrid, nu: np.ndarray, agent: int = 0) -> List[str]:
    """Rows of fixed omega2 where agent's binding set is not a lower interval in omega1"""
    found = []
    for k in range(grid.n + 1):
        pts = [grid.lookup(j, k) for j in range(grid.n + 1 - k)]
        binding = nu[pts, agent] < 0
        if binding.any():
            last = int(np.flatnonzero(binding)[-1])
            if not binding[: last + 1].all():
                found.append(f"agent{agent + 1} binding set not monotone at omega2={k * grid.h:.6g}")
    return found


def solve_simplex(grid: SimplexGrid, params: EconomyParams, agents: Sequence[AgentSpec],
                  dt: float = 0.5, tol_outer: float = 1e-8, max_steps: int = 20000,
                  tol_point: float = 1e-10, relaxation: float = 1.0,
                  benchmark: bool = False) -> SimplexSolution:
    agents = list(agents)
    if grid.N != 3 or len(agents) != 3:
        raise InvalidParameterError("the simplex solver needs three agents on a triangle grid",
                                    {"grid_N": grid.N, "agents": len(agents)})

    edges: Dict[EdgeId, EdgeSolution] = {}
    for edge, (a, b, _) in EDGE_AGENTS.items():
        problem = EdgeProblem(agents=agents, pair=(a, b), P=grid.n, dt=dt, tol_outer=tol_outer,
                              tol_point=tol_point, max_steps=max_steps, relaxation=relaxation,
                              benchmark=benchmark, label=edge.value)
        edges[edge] = solve_edge(problem, params)

    boundary = _boundary_fields(grid, agents, params, edges)
    solved = grid.solved
    V = boundary["V"].copy()
    V[solved] = initial_interior(grid, agents, params, benchmark)[solved]

    control = StepControl(dt, "simplex")
    previous_active = None
    fallbacks = 0
    update = math.inf
    converged = False
    step = 0

    while step < max_steps:
        step += 1
        try:
            coef = interior_coefficients(grid, V, agents, params, benchmark,
                                         previous_active, tol_point)
        except LeverageCycleError:
            if step == 1:
                raise
            V = V_good
            control.halve(step, "point solve failed")
            continue
        V_good = V
        previous_active = coef.point.active
        fallbacks += coef.point.fallbacks

        inv_dt = 1.0 / control.dt
        systems = assemble_systems(grid, V, stencil_coefficients(grid, coef, inv_dt), inv_dt)
        V_new = V.copy()
        try:
            for i, system in enumerate(systems):
                V_new[solved, i] = solve_sparse(system)
        except LeverageCycleError:
            control.halve(step, "linear solve failed")
            continue
        if not accept(V_new[solved]):
            control.halve(step, "non-finite or non-positive iterate")
            continue

        update = float(np.max(np.abs(V_new[solved] - V[solved])))
        V = V + relaxation * (V_new - V)
        events.emit(SIMPLEX_STEP, {"step": step, "update": update, "dt": control.dt})
        if update < tol_outer:
            converged = True
            break
        control.observe(step, update)

    if not converged:
        raise NonConvergenceError("simplex iteration did not reach the stationarity tolerance",
                                  {"steps": step, "update": update})

    coef = interior_coefficients(grid, V, agents, params, benchmark, previous_active, tol_point)
    stationary = stencil_coefficients(grid, coef, 0.0)
    fields = _assemble_fields(grid, V, boundary, coef, agents, params, benchmark)

    warnings = [] if benchmark else monotonicity_warnings(grid, fields.nu)
    for message in warnings:
        warn(message)
    report = ConvergenceReport(
        stage="simplex",
        steps=step,
        update_norm=update,
        residual=_residual(grid, V, stationary),
        dt_history=control.history,
        fallbacks=fallbacks + coef.point.fallbacks,
        active_counts=_active_counts(fields, grid),
        warnings=warnings,
        extra={
            "diagonal_identity_gap": diagonal_identity_gap(grid, stationary),
            "edges": {e.value: s.report.to_dict() for e, s in edges.items()},
        },
    )
    events.emit(SOLVE_DONE, {"stage": "simplex", "steps": step, "residual": report.residual})
    return SimplexSolution(grid=grid, fields=fields, report=report, edges=edges)


def _active_counts(fields: SolutionFields, grid: SimplexGrid) -> Dict[str, int]:
    act = fields.active[grid.solved]
    counts = {f"agent{i + 1}": int(act[:, i].sum()) for i in range(act.shape[1])}
    counts["agents12"] = int((act[:, 0] & act[:, 1]).sum())
    return counts


def _assemble_fields(grid: SimplexGrid, V: np.ndarray, boundary: Dict[str, np.ndarray],
                     coef: InteriorCoefficients, agents: Sequence[AgentSpec],
                     params: EconomyParams, benchmark: bool) -> SolutionFields:
    solved = grid.solved
    sol = coef.point
    out = {name: arr.copy() for name, arr in boundary.items()}
    out["V"] = V.copy()
    for name in ("nu", "sigma", "theta", "kappa", "hedge", "pi", "active"):
        out[name][solved] = getattr(sol, name)
    out["r"][solved] = coef.r
    return SolutionFields(
        coords=grid.coords.copy(),
        weights=grid.full_weights(),
        classes=[c.value for c in grid.classes],
        V=out["V"], nu=out["nu"], sigma=out["sigma"], theta=out["theta"], r=out["r"],
        kappa=out["kappa"], hedge=out["hedge"], pi=out["pi"], active=out["active"],
        agents=list(agents), params=params, benchmark=benchmark, grid=grid,
    )


def _residual(grid: SimplexGrid, V: np.ndarray, stationary: StencilCoefficients) -> float:
    systems = assemble_systems(grid, V, stationary, 0.0)
    return float(max(s.residual(V[grid.solved, i]) for i, s in enumerate(systems)))


def pde_residual(solution: SimplexSolution, params: EconomyParams,
                 agents: Optional[Sequence[AgentSpec]] = None) -> float:
    """Max stationary PDE residual over solved points and agents"""
    grid = solution.grid
    f = solution.fields
    agents = list(agents) if agents is not None else f.agents
    coef = interior_coefficients(grid, f.V, agents, params, f.benchmark, f.active[grid.solved])
    return _residual(grid, f.V, stencil_coefficients(grid, coef, 0.0))
