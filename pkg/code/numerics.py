"""
LeverageCycle - Numerical Kernels
=================================
Tridiagonal (Thomas) solves, sparse linear solves, small nonlinear root
finding, piecewise-linear interpolation on the simplex grid and observed
orders of convergence.
"""

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, root

from errors import (
    InvalidParameterError,
    LinearSolveError,
    NonConvergenceError,
    OutOfDomainError,
    SingularSystemError,
)
from simplex_grid import SimplexGrid


# ============================================================================
# Tridiagonal systems
# ============================================================================

@dataclass
class TriDiagonalSystem:
    """
    Bands of a tridiagonal matrix, each of length n (or shape (n, m) for m
    systems solved together).

    lower = (0, a_2, ..., a_n), diagonal = (b_1, ..., b_n),
    upper = (c_1, ..., c_{n-1}, 0)
    """
    lower: np.ndarray
    diagonal: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.diagonal = np.asarray(self.diagonal, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        shapes = {a.shape for a in (self.lower, self.diagonal, self.upper, self.rhs)}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent band shapes: {sorted(shapes)}")

    @property
    def size(self) -> int:
        return self.rhs.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal * x
        y[1:] += self.lower[1:] * x[:-1]
        y[:-1] += self.upper[:-1] * x[1:]
        return y

    def to_sparse(self) -> "SparseSystem":
        """Single-system copy in compressed-row storage"""
        if self.rhs.ndim != 1:
            raise ValueError("only a single system can be converted")
        A = sp.diags(
            [self.lower[1:], self.diagonal, self.upper[:-1]], offsets=[-1, 0, 1],
            shape=(self.size, self.size), format="csr",
        )
        return SparseSystem(matrix=A, rhs=self.rhs.copy())


def solve_tridiagonal(system: TriDiagonalSystem) -> np.ndarray:
    """Thomas algorithm; bands may carry a trailing axis of independent systems"""
    a, c = system.lower, system.upper
    b = system.diagonal.copy()
    d = system.rhs.copy()
    n = system.size

    if np.any(b[0] == 0):
        raise SingularSystemError("zero pivot in tridiagonal solve", {"row": 0})
    for k in range(1, n):
        m = a[k] / b[k - 1]
        b[k] = b[k] - m * c[k - 1]
        d[k] = d[k] - m * d[k - 1]
        if np.any(b[k] == 0):
            raise SingularSystemError("zero pivot in tridiagonal solve", {"row": k})

    x = b
    x[-1] = d[-1] / b[-1]
    for k in range(n - 2, -1, -1):
        x[k] = (d[k] - c[k] * x[k + 1]) / b[k]
    return x


# ============================================================================
# Sparse systems
# ============================================================================

@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.matrix.sum_duplicates()
        self.matrix.sort_indices()
        self.rhs = np.asarray(self.rhs, dtype=float)

    @classmethod
    def from_triplets(cls, rows: np.ndarray, cols: np.ndarray, values: np.ndarray,
                      size: int, rhs: np.ndarray) -> "SparseSystem":
        A = sp.coo_matrix((values, (rows, cols)), shape=(size, size)).tocsr()
        return cls(matrix=A, rhs=rhs)

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.matrix @ x - self.rhs), initial=0.0))


SPARSE_TOL = 1e-9
REFINEMENT_STEPS = 3


def solve_sparse(system: SparseSystem, tol: float = SPARSE_TOL) -> np.ndarray:
    """
    Direct LU solve with iterative refinement.

    Succeeds when ||Ax - b||_inf <= tol * (1 + ||b||_inf); otherwise raises
    LinearSolveError carrying the achieved residual.
    """
    A = system.matrix
    b = system.rhs
    target = tol * (1.0 + float(np.max(np.abs(b), initial=0.0)))

    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as e:
        raise LinearSolveError(f"sparse factorization failed: {e}", {"size": A.shape[0]})

    x = lu.solve(b)
    res = system.residual(x)
    for _ in range(REFINEMENT_STEPS):
        if np.isfinite(res) and res <= target:
            break
        x = x + lu.solve(b - A @ x)
        res = system.residual(x)

    if not (np.isfinite(res) and res <= target):
        raise LinearSolveError(
            "sparse solve did not reach the residual target",
            {"residual": res, "target": target, "size": A.shape[0]},
        )
    return x


# ============================================================================
# Root finding
# ============================================================================

@dataclass
class RootProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    guess: np.ndarray
    tol: float = 1e-10
    max_iter: int = 100

    @property
    def dim(self) -> int:
        return int(np.size(self.guess))


FD_STEP = 1e-7


def _fd_jacobian(F: Callable, z: np.ndarray, fz: np.ndarray) -> np.ndarray:
    J = np.empty((fz.size, z.size))
    for k in range(z.size):
        step = FD_STEP * (1.0 + abs(z[k]))
        zk = z.copy()
        zk[k] += step
        J[:, k] = (F(zk) - fz) / step
    return J


def _norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f))) if f.size else 0.0


def find_root(problem: RootProblem) -> np.ndarray:
    """
    Damped Newton with a finite-difference Jacobian, falling back to
    scipy's Powell hybrid (dogleg trust region) from the best iterate.
    """
    F = lambda z: np.atleast_1d(np.asarray(problem.residual(z), dtype=float))
    z = np.atleast_1d(np.asarray(problem.guess, dtype=float)).copy()
    fz = F(z)
    best_z, best_f = z.copy(), _norm(fz)

    for _ in range(problem.max_iter):
        if best_f <= problem.tol:
            return best_z
        try:
            step = np.linalg.solve(_fd_jacobian(F, z, fz), -fz)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-4:
            trial = z + t * step
            ft = F(trial)
            if np.all(np.isfinite(ft)) and _norm(ft) < _norm(fz):
                break
            t *= 0.5
        else:
            break
        z, fz = trial, ft
        if _norm(fz) < best_f:
            best_z, best_f = z.copy(), _norm(fz)

    if best_f <= problem.tol:
        return best_z

    sol = root(F, best_z, method="hybr", tol=problem.tol * 1e-2,
               options={"maxfev": 200 * (problem.dim + 1)})
    f_sol = F(sol.x)
    if np.all(np.isfinite(f_sol)) and _norm(f_sol) < best_f:
        best_z, best_f = np.asarray(sol.x, dtype=float), _norm(f_sol)

    if best_f > problem.tol:
        raise NonConvergenceError(
            "root finder did not converge",
            {"best_iterate": best_z.tolist(), "residual": best_f},
        )
    return best_z


# ============================================================================
# Interpolation on the grid
# ============================================================================

def interp_simplex(grid: SimplexGrid, values: np.ndarray,
                   points: Union[np.ndarray, Sequence[float]],
                   tol: float = 1e-12) -> np.ndarray:
    """
    Piecewise-linear interpolation of nodal values.

    values: (L,) or (L, m) nodal data. points: (P, d) or a single (d,)
    point of the first N-1 weights. On the triangle each grid cell is split
    into a lower and an upper triangle; barycentric weights are exact for
    affine fields.
    """
    values = np.asarray(values, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != grid.dim:
        raise OutOfDomainError("point dimension does not match the grid",
                               {"expected": grid.dim, "got": pts.shape[1]})
    if np.any(pts < -tol) or np.any(pts.sum(axis=1) > 1.0 + tol):
        bad = pts[(pts < -tol).any(axis=1) | (pts.sum(axis=1) > 1.0 + tol)][0]
        raise OutOfDomainError("point outside the simplex", {"point": bad.tolist()})
    pts = np.clip(pts, 0.0, 1.0)

    if grid.N == 2:
        nodes = grid.coords[:, 0]
        if values.ndim == 1:
            out = np.interp(pts[:, 0], nodes, values)
        else:
            out = np.column_stack([np.interp(pts[:, 0], nodes, values[:, c])
                                   for c in range(values.shape[1])])
        return out[0] if single else out

    n = grid.n
    u = pts[:, 0] * n
    v = pts[:, 1] * n
    j0 = np.clip(np.floor(u).astype(int), 0, n - 1)
    k0 = np.clip(np.floor(v).astype(int), 0, n - 1)
    over = j0 + k0 > n - 1
    shift_j = over & (j0 > 0)
    j0 = np.where(shift_j, j0 - 1, j0)
    k0 = np.where(over & ~shift_j, k0 - 1, k0)
    fu = u - j0
    fv = v - k0
    upper = (fu + fv > 1.0) & (j0 + k0 <= n - 2)

    def flat(j, k):
        return j * (n + 1) - j * (j - 1) // 2 + k

    # lower triangle: (j0,k0), (j0+1,k0), (j0,k0+1)
    # upper triangle: (j0+1,k0+1), (j0,k0+1), (j0+1,k0)
    i_a = np.where(upper, flat(j0 + 1, k0 + 1), flat(j0, k0))
    i_b = flat(j0 + 1, k0)
    i_c = flat(j0, k0 + 1)
    w_a = np.where(upper, fu + fv - 1.0, 1.0 - fu - fv)
    w_b = np.where(upper, 1.0 - fv, fu)
    w_c = np.where(upper, 1.0 - fu, fv)

    if values.ndim == 1:
        out = w_a * values[i_a] + w_b * values[i_b] + w_c * values[i_c]
    else:
        out = (w_a[:, None] * values[i_a] + w_b[:, None] * values[i_b]
               + w_c[:, None] * values[i_c])
    return out[0] if single else out


# ============================================================================
# Convergence order
# ============================================================================

ORDER_BRACKET = (0.05, 8.0)


def refinement_order(h: Sequence[float], errors: Sequence[float]) -> float:
    """
    Observed order p from three grids h_c > h_m > h_f.

    errors are the coarse and middle solutions measured against the finest,
    so e ~ C (h^p - h_f^p) and p solves
    (h_c^p - h_f^p) / (h_m^p - h_f^p) = e_c / e_m. Grids need not be nested.
    """
    h_c, h_m, h_f = (float(v) for v in h)
    e_c, e_m = (float(v) for v in errors)
    if not h_c > h_m > h_f > 0:
        raise InvalidParameterError("grid spacings must be decreasing and positive",
                                    {"h": (h_c, h_m, h_f)})
    if not e_c > e_m > 0:
        raise InvalidParameterError("errors must decrease under refinement",
                                    {"errors": (e_c, e_m)})
    target = e_c / e_m

    def gap(p: float) -> float:
        return (h_c ** p - h_f ** p) / (h_m ** p - h_f ** p) - target

    lo, hi = ORDER_BRACKET
    if gap(lo) * gap(hi) > 0:
        raise NonConvergenceError("observed order outside the search bracket",
                                  {"ratio": target, "bracket": ORDER_BRACKET})
    return float(brentq(gap, lo, hi, xtol=1e-12))
