"""
LeverageCycle - Numerical Kernel Tests
======================================
Tridiagonal and sparse solves, root finding and simplex interpolation.
"""

import numpy as np
import pytest


# =============================================================================
# TEST 1: Tridiagonal Solve
# =============================================================================
# WHY: Every edge step is one Thomas sweep per agent.

def test_tridiagonal_small_systems():
    """Identity, the classic (-1, 2, -1) system and a 1x1 system"""
    from numerics import TriDiagonalSystem, solve_tridiagonal

    b = np.array([3.0, -1.0, 2.0, 5.0])
    eye = TriDiagonalSystem(np.zeros(4), np.ones(4), np.zeros(4), b)
    np.testing.assert_allclose(solve_tridiagonal(eye), b)

    sys3 = TriDiagonalSystem([0.0, -1.0, -1.0], [2.0, 2.0, 2.0], [-1.0, -1.0, 0.0], [1.0, 0.0, 1.0])
    np.testing.assert_allclose(solve_tridiagonal(sys3), [1.0, 1.0, 1.0], atol=1e-14)

    one = TriDiagonalSystem([0.0], [4.0], [0.0], [2.0])
    np.testing.assert_allclose(solve_tridiagonal(one), [0.5])


def test_tridiagonal_batched_and_residual():
    """Several systems along a trailing axis solve independently to 1e-10"""
    from numerics import TriDiagonalSystem, solve_tridiagonal

    rng = np.random.default_rng(3)
    n, m = 30, 3
    lower = rng.uniform(-1, 1, (n, m))
    upper = rng.uniform(-1, 1, (n, m))
    lower[0] = 0.0
    upper[-1] = 0.0
    diag = 4.0 + rng.uniform(0, 1, (n, m))
    rhs = rng.normal(size=(n, m))
    system = TriDiagonalSystem(lower, diag, upper, rhs)
    x = solve_tridiagonal(system)
    assert np.max(np.abs(system.matvec(x) - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))


def test_tridiagonal_zero_pivot():
    """A zero pivot raises a singular-system error"""
    from errors import SingularSystemError
    from numerics import TriDiagonalSystem, solve_tridiagonal

    with pytest.raises(SingularSystemError):
        solve_tridiagonal(TriDiagonalSystem([0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]))


# =============================================================================
# TEST 2: Sparse Solve
# =============================================================================
# WHY: The simplex step solves one sparse system per agent.

def test_sparse_diagonal_and_dense_spd():
    """Diagonal systems divide elementwise; SPD systems match the explicit inverse"""
    import scipy.sparse as sp
    from numerics import SparseSystem, solve_sparse

    d = np.array([2.0, 4.0, 5.0])
    b = np.array([1.0, 2.0, 10.0])
    np.testing.assert_allclose(solve_sparse(SparseSystem(sp.diags(d), b)), b / d)

    rng = np.random.default_rng(11)
    M = rng.normal(size=(4, 4))
    A = M @ M.T + 4 * np.eye(4)
    rhs = rng.normal(size=4)
    np.testing.assert_allclose(solve_sparse(SparseSystem(A, rhs)), np.linalg.inv(A) @ rhs, atol=1e-9)


def test_sparse_matches_tridiagonal():
    """The two linear solvers agree on a tridiagonal system"""
    from numerics import TriDiagonalSystem, solve_sparse, solve_tridiagonal

    n = 25
    lower = np.full(n, -1.0)
    upper = np.full(n, -1.3)
    lower[0] = 0.0
    upper[-1] = 0.0
    system = TriDiagonalSystem(lower, np.full(n, 3.0), upper, np.linspace(-1, 2, n))
    np.testing.assert_allclose(solve_sparse(system.to_sparse()), solve_tridiagonal(system),
                               atol=1e-9)


def test_sparse_storage_and_failure():
    """Triplets are summed, indices sorted, and a singular matrix is reported"""
    from errors import LinearSolveError
    from numerics import SparseSystem, solve_sparse

    system = SparseSystem.from_triplets(
        np.array([1, 0, 0, 1]), np.array([1, 1, 0, 1]), np.array([1.0, 2.0, 3.0, 4.0]),
        2, np.array([1.0, 1.0]),
    )
    assert system.matrix[1, 1] == 5.0
    for row in range(2):
        cols = system.indices[system.indptr[row]:system.indptr[row + 1]]
        assert np.all(np.diff(cols) > 0)

    singular = SparseSystem.from_triplets(np.array([0]), np.array([0]), np.array([1.0]), 2,
                                          np.array([1.0, 1.0]))
    with pytest.raises(LinearSolveError):
        solve_sparse(singular)


# =============================================================================
# TEST 3: Root Finding
# =============================================================================
# WHY: The per-point fallback relies on it when the linear branch fails.

def test_find_root_examples():
    """Shifted identity, a quadratic and a 2-d linear system"""
    from numerics import RootProblem, find_root

    c = np.array([0.3, -2.0])
    np.testing.assert_allclose(find_root(RootProblem(lambda z: z - c, np.zeros(2))), c, atol=1e-10)
    np.testing.assert_allclose(find_root(RootProblem(lambda z: z ** 2 - 4.0, np.array([3.0]))),
                               [2.0], atol=1e-9)
    lin = lambda z: np.array([z[0] + z[1] - 1.0, z[0] - z[1]])
    np.testing.assert_allclose(find_root(RootProblem(lin, np.array([2.0, -1.0]))), [0.5, 0.5],
                               atol=1e-10)


def test_find_root_scaling_invariance():
    """F and 10*F give the same root"""
    from numerics import RootProblem, find_root

    F = lambda z: np.array([np.exp(z[0]) - 2.0 + z[1], z[1] ** 3 + z[0] - 1.0])
    a = find_root(RootProblem(F, np.array([0.5, 0.5]), tol=1e-12))
    b = find_root(RootProblem(lambda z: 10.0 * F(z), np.array([0.5, 0.5]), tol=1e-11))
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_find_root_reports_best_iterate():
    """A residual without a root raises non-convergence with diagnostics"""
    from errors import NonConvergenceError
    from numerics import RootProblem, find_root

    with pytest.raises(NonConvergenceError) as info:
        find_root(RootProblem(lambda z: z ** 2 + 1.0, np.array([0.7]), max_iter=20))
    assert "best_iterate" in info.value.context
    assert info.value.context["residual"] >= 1.0 - 1e-12


# =============================================================================
# TEST 4: Interpolation On The Triangle
# =============================================================================
# WHY: The simulator reads drift, diffusion and output series this way.

def _simplex_points(n, seed):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(3), size=n)[:, :2]


def test_interp_reproduces_affine_fields():
    """Affine fields are exact anywhere in the triangle, including its edges"""
    from numerics import interp_simplex
    from simplex_grid import build_grid

    grid = build_grid(11, 3)
    f = lambda x: np.column_stack([1.0 + 2.0 * x[:, 0] - 3.0 * x[:, 1], x[:, 0]])
    pts = np.vstack([_simplex_points(500, 1), [[0.3, 0.7], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]])
    np.testing.assert_allclose(interp_simplex(grid, f(grid.coords), pts), f(pts), atol=1e-12)


def test_interp_nodes_and_interval():
    """Nodal values are returned exactly; the interval grid uses linear interpolation"""
    from numerics import interp_simplex
    from simplex_grid import build_grid

    grid = build_grid(7, 3)
    values = np.sin(grid.coords[:, 0] * 3) + grid.coords[:, 1] ** 2
    np.testing.assert_allclose(interp_simplex(grid, values, grid.coords), values, atol=1e-14)
    assert np.ndim(interp_simplex(grid, values, [0.2, 0.2])) == 0

    line = build_grid(10, 2)
    np.testing.assert_allclose(interp_simplex(line, 2 * line.coords[:, 0], [[0.25], [0.93]]).ravel(),
                               [0.5, 1.86], atol=1e-14)


def test_interp_product_error_and_order():
    """omega1*omega2 at a cell centroid errs by at most h^2; the error is second order"""
    from numerics import interp_simplex
    from simplex_grid import build_grid

    f = lambda x: x[:, 0] * x[:, 1]
    grid = build_grid(11, 3)
    h = grid.h
    centroids = np.array([[(j + 1 / 3) * h, (k + 1 / 3) * h] for j in range(8) for k in range(8 - j)])
    err = np.abs(interp_simplex(grid, f(grid.coords), centroids) - f(centroids))
    assert np.max(err) <= h ** 2

    pts = _simplex_points(2000, 5)
    coarse, fine = build_grid(11, 3), build_grid(21, 3)
    e_c = np.max(np.abs(interp_simplex(coarse, f(coarse.coords), pts) - f(pts)))
    e_f = np.max(np.abs(interp_simplex(fine, f(fine.coords), pts) - f(pts)))
    assert 3.0 < e_c / e_f < 5.0


def test_interp_outside_simplex():
    """Points outside the simplex raise out-of-domain errors"""
    from errors import OutOfDomainError
    from numerics import interp_simplex
    from simplex_grid import build_grid

    grid = build_grid(6, 3)
    values = np.zeros(grid.size)
    with pytest.raises(OutOfDomainError):
        interp_simplex(grid, values, [0.7, 0.5])
    with pytest.raises(OutOfDomainError):
        interp_simplex(grid, values, [-0.1, 0.5])


# =============================================================================
# TEST 5: Observed Order
# =============================================================================
# WHY: Refinement studies compare against the finest grid, which is not
#      always a halving of the middle one.

def test_refinement_order_nested_grids():
    """Halved spacings with e ~ h^2 - h_f^2 give order two"""
    from numerics import refinement_order

    h = (0.04, 0.02, 0.01)
    e = [3.0 * (v ** 2 - h[-1] ** 2) for v in h[:2]]
    assert refinement_order(h, e) == pytest.approx(2.0, abs=1e-9)


def test_refinement_order_unnested_grids():
    """Spacings 1/14, 1/29, 1/59 recover the generating order"""
    from numerics import refinement_order

    h = (1 / 14, 1 / 29, 1 / 59)
    for p in (1.0, 1.5, 2.0):
        e = [0.7 * (v ** p - h[-1] ** p) for v in h[:2]]
        assert refinement_order(h, e) == pytest.approx(p, abs=1e-8)


def test_refinement_order_rejects_bad_input():
    """Non-decreasing spacings or errors are invalid; absurd ratios leave the bracket"""
    from errors import InvalidParameterError, NonConvergenceError
    from numerics import refinement_order

    with pytest.raises(InvalidParameterError):
        refinement_order((0.01, 0.02, 0.04), (1.0, 0.5))
    with pytest.raises(InvalidParameterError):
        refinement_order((0.04, 0.02, 0.01), (0.5, 1.0))
    with pytest.raises(NonConvergenceError):
        refinement_order((0.04, 0.02, 0.01), (1e6, 1.0))
