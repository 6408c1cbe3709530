"""
LeverageCycle - Fixed Point Tests
=================================
Per-point adjustments and stock diffusion: closed-form limits, active
sets, slackness and agreement between the batched and single-point paths.
"""

import numpy as np
import pytest


def vertex_line(params, agents, omega):
    """Inputs on the segment between the two vertices with linear V"""
    from fixed_point import PointBatch
    from vertex_solver import solve_vertex

    low = solve_vertex(1, agents, params).V
    high = solve_vertex(0, agents, params).V
    omega = np.atleast_1d(omega)
    W = np.column_stack([omega, 1 - omega])
    V = (1 - omega)[:, None] * low + omega[:, None] * high
    grad = np.repeat((high - low)[None, :, None], len(omega), axis=0)
    return PointBatch(W, V, grad, (0,), 1)


# =============================================================================
# TEST 1: Candidate Active Sets
# =============================================================================
# WHY: Only constrained agents may bind; the empty set goes first.

def test_candidate_sets():
    """Subsets of constrained agents, smallest first; benchmark allows none"""
    from fixed_point import candidate_sets
    from model_core import AgentSpec

    agents = [AgentSpec(1.1, 1.2), AgentSpec(1.5, 1.2), AgentSpec(3.0)]
    assert candidate_sets(agents) == [(), (0,), (1,), (0, 1)]
    assert candidate_sets(agents, benchmark=True) == [()]


# =============================================================================
# TEST 2: Closed-Form Limits
# =============================================================================
# WHY: Flat V and vertex inputs have known answers.

def test_homogeneous_flat_inputs(params):
    """Identical agents with flat V give nu = 0 and sigma = sigma_D"""
    from fixed_point import PointInputs, solve_point, solve_points
    from model_core import AgentSpec

    agents = [AgentSpec(2.0, 1.2), AgentSpec(2.0, 1.2)]
    inputs = PointInputs(np.array([0.4, 0.6]), np.array([30.0, 30.0]), np.zeros((2, 1)), (0,), 1)
    nu, sigma = solve_point(inputs, agents, params)
    np.testing.assert_allclose(nu, 0.0, atol=1e-14)
    assert sigma == pytest.approx(params.sigma_D, abs=1e-12)

    batch = solve_points(inputs.as_batch(), agents, params)
    np.testing.assert_allclose(batch.sigma, params.sigma_D, atol=1e-12)
    assert not batch.active.any()


def test_vertex_inputs_reproduce_vertex_adjustment(params, calibrated_agents):
    """With the risk-averse agent dominating, agent 1 is pinned at its margin"""
    from fixed_point import PointInputs, active_set_solve
    from vertex_solver import solve_vertex

    v = solve_vertex(1, calibrated_agents, params)
    inputs = PointInputs(np.array([0.0, 1.0]), v.V, np.zeros((2, 1)), (0,), 1)
    sol = active_set_solve(inputs, calibrated_agents, params)
    assert sol.active == (0,)
    assert sol.sigma == pytest.approx(params.sigma_D, abs=1e-12)
    np.testing.assert_allclose(sol.nu, v.nu, atol=1e-10)


def test_unconstrained_agents_never_adjust(params):
    """Unbounded margins force nu = 0 everywhere"""
    from fixed_point import solve_points
    from model_core import AgentSpec

    agents = [AgentSpec(1.1), AgentSpec(5.0)]
    sol = solve_points(vertex_line(params, agents, np.linspace(0.05, 0.95, 10)), agents, params)
    np.testing.assert_array_equal(sol.nu, 0.0)
    assert np.all(sol.sigma > 0)


# =============================================================================
# TEST 3: Binding Region
# =============================================================================
# WHY: Deep in the region where the risk-tolerant agent is poor, its
#      leverage hits the margin and the shadow cost turns negative.

def test_binding_point_and_slackness(params, calibrated_agents):
    """A = {agent 1}, nu_1 < 0, pi_1 = m; complementary slackness at every point"""
    from fixed_point import solve_points

    batch = vertex_line(params, calibrated_agents, np.linspace(0.02, 0.98, 25))
    sol = solve_points(batch, calibrated_agents, params)

    assert sol.active[0, 0] and not sol.active[0, 1]
    assert sol.nu[0, 0] < 0
    assert sol.pi[0, 0] == pytest.approx(1.2, abs=1e-8)

    m = np.array([1.2, 1.2])
    assert np.all(sol.nu <= 0)
    assert np.all(sol.pi <= m + 1e-8)
    assert np.max(np.abs(sol.nu * (sol.pi - m))) < 1e-8


def test_batch_matches_single_point_solver(params, calibrated_agents):
    """The stacked linear solve and the root-finding path agree"""
    from fixed_point import active_set_solve, solve_points

    batch = vertex_line(params, calibrated_agents, np.array([0.05, 0.3, 0.6, 0.9]))
    fast = solve_points(batch, calibrated_agents, params)
    for p in range(batch.size):
        slow = active_set_solve(batch.point(p), calibrated_agents, params)
        np.testing.assert_allclose(slow.nu, fast.nu[p], atol=1e-9)
        assert slow.sigma == pytest.approx(fast.sigma[p], abs=1e-9)
        assert set(slow.active) == set(np.flatnonzero(fast.active[p]))


def test_warm_start_and_scale_invariance(params, calibrated_agents):
    """Warm-started solves and jointly scaled V and gradients leave (nu, sigma) unchanged"""
    from fixed_point import PointBatch, solve_points

    batch = vertex_line(params, calibrated_agents, np.linspace(0.05, 0.95, 12))
    cold = solve_points(batch, calibrated_agents, params)
    warm = solve_points(batch, calibrated_agents, params, previous_active=cold.active)
    np.testing.assert_allclose(warm.nu, cold.nu, atol=1e-12)
    np.testing.assert_allclose(warm.sigma, cold.sigma, atol=1e-12)

    scaled = PointBatch(batch.weights, 3.0 * batch.V, 3.0 * batch.grad, (0,), 1)
    again = solve_points(scaled, calibrated_agents, params)
    np.testing.assert_allclose(again.nu, cold.nu, atol=1e-12)
    np.testing.assert_allclose(again.sigma, cold.sigma, atol=1e-12)


def test_point_batch_validation(params):
    """Non-positive wealth/consumption ratios are rejected"""
    from errors import InvalidParameterError
    from fixed_point import PointBatch

    with pytest.raises(InvalidParameterError):
        PointBatch(np.array([[0.5, 0.5]]), np.array([[10.0, -1.0]]), np.zeros((1, 2, 1)), (0,), 1)
