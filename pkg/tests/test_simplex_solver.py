"""
LeverageCycle - Simplex Solver Tests
====================================
Stencil algebra, sparse assembly and the three-agent solve.
"""

import numpy as np
import pytest


def three_agents(margin=1.2):
    from model_core import AgentSpec
    return [AgentSpec(1.1, margin), AgentSpec(1.5, margin), AgentSpec(3.0, margin)]


def blended_coefficients(params, K=8):
    """Coefficients at the barycentric vertex blend, a non-trivial but cheap state"""
    from simplex_grid import build_grid
    from simplex_solver import initial_interior, interior_coefficients

    grid = build_grid(K, 3)
    agents = three_agents()
    V = initial_interior(grid, agents, params)
    return grid, V, interior_coefficients(grid, V, agents, params)


@pytest.fixture(scope="module")
def calibrated_simplex(params):
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex
    return solve_simplex(build_grid(8, 3), params, three_agents())


# =============================================================================
# TEST 1: Stencil Algebra
# =============================================================================
# WHY: The one-sided cross difference on the first diagonal must equal the
#      central stencil rewritten through the hypotenuse identity.

def test_central_corner_antisymmetry(params):
    """Central corners satisfy c5 = c8 = -c6 = -c7"""
    from simplex_solver import stencil_coefficients

    grid, _, coef = blended_coefficients(params)
    c = stencil_coefficients(grid, coef, 0.0).standard
    np.testing.assert_allclose(c[:, :, 5], c[:, :, 8], atol=1e-15)
    np.testing.assert_allclose(c[:, :, 6], -c[:, :, 5], atol=1e-15)
    np.testing.assert_allclose(c[:, :, 7], -c[:, :, 5], atol=1e-15)


def test_diagonal_rewrite_identity(params):
    """Diagonal-point coefficients match the rewritten central ones"""
    from simplex_solver import diagonal_identity_gap, stencil_coefficients

    grid, _, coef = blended_coefficients(params)
    stencil = stencil_coefficients(grid, coef, 2.0)
    assert diagonal_identity_gap(grid, stencil) < 1e-12


def test_pseudo_time_shift(params):
    """Only the self coefficient changes with dt, by exactly -1/dt"""
    from simplex_solver import stencil_coefficients

    grid, _, coef = blended_coefficients(params)
    a0 = stencil_coefficients(grid, coef, 0.0).a
    a2 = stencil_coefficients(grid, coef, 2.0).a
    np.testing.assert_allclose(a2[:, :, 0] - a0[:, :, 0], -2.0, atol=1e-12)
    np.testing.assert_array_equal(a2[:, :, 1:], a0[:, :, 1:])


def test_state_gradient_on_affine_fields():
    """Central differences are exact for affine V"""
    from simplex_grid import build_grid
    from simplex_solver import state_gradient

    grid = build_grid(9, 3)
    x = grid.coords
    V = np.column_stack([1 + 2 * x[:, 0] - 3 * x[:, 1], 4 - x[:, 0], 2 + 0.5 * x[:, 1]])
    grad = state_gradient(grid, V)
    np.testing.assert_allclose(grad[:, 0], np.tile([2.0, -3.0], (len(grid.solved), 1)), atol=1e-12)
    np.testing.assert_allclose(grad[:, 1, 0], -1.0, atol=1e-12)
    np.testing.assert_allclose(grad[:, 2, 1], 0.5, atol=1e-12)


# =============================================================================
# TEST 2: Assembly
# =============================================================================
# WHY: Dirichlet folding and the block-tridiagonal structure decide whether
#      the sparse solve is both correct and cheap.

def test_assembly_is_block_tridiagonal(params):
    """Nonzeros only couple points at most one step apart in j and in k"""
    from simplex_solver import assemble_systems, stencil_coefficients

    grid, V, coef = blended_coefficients(params, K=9)
    systems = assemble_systems(grid, V, stencil_coefficients(grid, coef, 2.0), 2.0)
    assert len(systems) == 3
    idx = grid.index[grid.solved]
    for system in systems:
        coo = system.matrix.tocoo()
        assert coo.shape == (len(grid.solved), len(grid.solved))
        jump = np.abs(idx[coo.row] - idx[coo.col])
        assert np.all(jump <= 1)


def test_smallest_grid_has_scalar_systems(params):
    """K = 4 leaves a single solved point and 1x1 systems"""
    from simplex_grid import build_grid
    from simplex_solver import assemble, initial_interior

    grid = build_grid(4, 3)
    agents = three_agents()
    systems = assemble(grid, initial_interior(grid, agents, params), 0.5, params, agents)
    assert all(s.matrix.shape == (1, 1) for s in systems)


def test_flat_vertex_value_solves_homogeneous_system(params):
    """For identical agents the vertex value is a fixed point of the implicit step"""
    from model_core import AgentSpec
    from simplex_grid import build_grid
    from simplex_solver import assemble, initial_interior

    agents = [AgentSpec(2.0, 1.2)] * 3
    grid = build_grid(7, 3)
    V = initial_interior(grid, agents, params)
    np.testing.assert_allclose(V, V[0, 0], rtol=1e-12)
    for i, system in enumerate(assemble(grid, V, 0.5, params, agents)):
        assert system.residual(V[grid.solved, i]) < 1e-10


# =============================================================================
# TEST 3: Three-Agent Solves
# =============================================================================
# WHY: Boundary data come from the edges; the interior must clear markets
#      and respect every margin.

def test_homogeneous_simplex_is_flat(params):
    """Identical agents converge immediately to a constant V"""
    from model_core import AgentSpec
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex

    sol = solve_simplex(build_grid(6, 3), params, [AgentSpec(2.0)] * 3)
    np.testing.assert_allclose(sol.fields.V, sol.fields.V[0, 0], rtol=1e-10)
    np.testing.assert_array_equal(sol.fields.nu, 0.0)
    assert sol.report.steps == 1


def test_solver_rejects_wrong_dimension(params, calibrated_agents):
    """Two agents or an interval grid are rejected"""
    from errors import InvalidParameterError
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex

    with pytest.raises(InvalidParameterError):
        solve_simplex(build_grid(6, 3), params, calibrated_agents)
    with pytest.raises(InvalidParameterError):
        solve_simplex(build_grid(6, 2), params, three_agents())


def test_boundary_rows_come_from_edges(calibrated_simplex):
    """Edge points carry the edge solutions unchanged"""
    f = calibrated_simplex.fields
    for edge, sol in calibrated_simplex.edges.items():
        pts = calibrated_simplex.grid.edge_points(edge)
        np.testing.assert_array_equal(f.V[pts], sol.fields.V)
        np.testing.assert_array_equal(f.sigma[pts], sol.fields.sigma)
    assert set(e.value for e in calibrated_simplex.edges) == set(calibrated_simplex.report.extra["edges"])


def test_simplex_equilibrium(calibrated_simplex, params):
    """Clearing, slackness and the stationary residual at K = 8"""
    from postproc import equilibrium_checks
    from simplex_solver import pde_residual

    checks = equilibrium_checks(calibrated_simplex.fields)
    assert checks["stock_clearing"] < 1e-8
    assert checks["slackness"] < 1e-8
    assert checks["pi_excess"] <= 1e-8
    assert checks["nu_max"] <= 0.0
    assert calibrated_simplex.fields.active[:, 0].any()
    assert np.all(np.isfinite(calibrated_simplex.fields.V)) and np.all(calibrated_simplex.fields.V > 0)
    assert pde_residual(calibrated_simplex, params) < 1e-5
    assert calibrated_simplex.report.extra["diagonal_identity_gap"] < 1e-12


@pytest.mark.slow
def test_fine_simplex(params):
    """K = 30: joint binding, sigma not raised where binding, a turning leverage deviation"""
    from postproc import deviations
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex

    grid = build_grid(30, 3)
    sol = solve_simplex(grid, params, three_agents())
    bench = solve_simplex(grid, params, three_agents(), benchmark=True)
    counts = sol.report.active_counts
    assert sol.report.residual < 1e-5
    assert counts["agent1"] > 0
    assert counts["agents12"] > 0

    # points whose whole stencil lies where some constraint binds
    binding = sol.fields.active.any(axis=1)
    inner = [p for p in grid.solved
             if all(binding[q] for q in grid.stencil[p] if q >= 0)]
    assert inner
    gap = sol.fields.sigma[inner] - bench.fields.sigma[inner]
    assert gap.max() <= 1e-6

    lev = deviations(sol.fields, bench.fields)["leverage"].to_numpy()
    turning = 0
    for k in range(grid.n + 1):
        line = [grid.lookup(j, k) for j in range(grid.n + 1 - k)]
        slope = np.diff(lev[line])
        slope = slope[np.abs(slope) > 1e-10]
        if (slope > 0).any() and (slope < 0).any():
            turning += 1
    assert turning >= 1


@pytest.mark.slow
def test_three_agent_refinement_order(params):
    """K = 15, 30, 60 against the finest grid converge at about second order"""
    from numerics import interp_simplex, refinement_order
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex

    sols = {K: solve_simplex(build_grid(K, 3), params, three_agents(), tol_outer=1e-10)
            for K in (15, 30, 60)}
    coarse = sols[15]
    points = coarse.grid.coords
    finest = interp_simplex(sols[60].grid, sols[60].fields.V, points)
    middle = interp_simplex(sols[30].grid, sols[30].fields.V, points)
    e_c = np.max(np.abs(coarse.fields.V - finest))
    e_m = np.max(np.abs(middle - finest))
    h = tuple(sols[K].grid.h for K in (15, 30, 60))
    assert 1.7 <= refinement_order(h, (e_c, e_m)) <= 2.3


@pytest.mark.slow
def test_loose_margins_match_benchmark(params):
    """m = 1e6 reproduces the complete-market simplex"""
    from simplex_grid import build_grid
    from simplex_solver import solve_simplex

    grid = build_grid(20, 3)
    a = solve_simplex(grid, params, three_agents(1e6))
    b = solve_simplex(grid, params, three_agents(1e6), benchmark=True)
    assert not a.fields.active.any()
    np.testing.assert_allclose(a.fields.V, b.fields.V, rtol=1e-9)
