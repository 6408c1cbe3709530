"""
LeverageCycle - Simplex Grid
============================
Uniform discretization of the consumption-weight state space.

N=2: the unit interval, ω1 = j/K for j = 0..K (K+1 points).
N=3: the triangle {ω1, ω2 >= 0, ω1 + ω2 <= 1} with K points per axis,
     h = 1/(K-1), points (j, k) with j + k <= K-1, L = K(K+1)/2.

Points are stored row-major: j outer, k inner.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import InvalidParameterError, ResolutionError


class PointClass(Enum):
    VERTEX = "vertex"
    EDGE = "edge"
    DIAGONAL = "diag"
    INTERIOR = "interior"


class EdgeId(Enum):
    OMEGA2_ZERO = "omega2=0"
    OMEGA1_ZERO = "omega1=0"
    HYPOTENUSE = "omega1+omega2=1"


# (state agent, residual agent, passive agent), 0-based
EDGE_AGENTS: Dict[EdgeId, Tuple[int, int, int]] = {
    EdgeId.HYPOTENUSE: (0, 1, 2),
    EdgeId.OMEGA2_ZERO: (0, 2, 1),
    EdgeId.OMEGA1_ZERO: (1, 2, 0),
}

# Stencil slot offsets (dj, dk); slot 0 is the point itself
STENCIL_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (0, 0),
    (1, 0), (-1, 0),
    (0, 1), (0, -1),
    (1, 1), (1, -1),
    (-1, 1), (-1, -1),
)

MIN_RESOLUTION = 4


# ============================================================================
# Grid
# ============================================================================

@dataclass(frozen=True)
class SimplexGrid:
    K: int
    N: int
    n: int                          # intervals per axis
    h: float
    index: np.ndarray               # (L, d) integer coordinates
    coords: np.ndarray              # (L, d) consumption weights
    classes: Tuple[PointClass, ...]
    edges: Tuple[Optional[EdgeId], ...]
    solved: np.ndarray              # indices of points solved by the interior PDE
    stencil: np.ndarray             # (L, 9) neighbor indices, -1 where unused

    @property
    def size(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.N - 1

    def lookup(self, *idx: int) -> int:
        """Flat index of integer coordinates"""
        if self.N == 2:
            (j,) = idx
            if not 0 <= j <= self.n:
                raise InvalidParameterError("grid index out of range", {"index": idx})
            return j
        j, k = idx
        if j < 0 or k < 0 or j + k > self.n:
            raise InvalidParameterError("grid index out of range", {"index": idx})
        return _flat(j, k, self.n)

    def full_weights(self) -> np.ndarray:
        """(L, N) weights including the implied last agent"""
        last = np.clip(1.0 - self.coords.sum(axis=1), 0.0, 1.0)
        return np.column_stack([self.coords, last])

    def count(self, kind: PointClass) -> int:
        return sum(1 for c in self.classes if c is kind)

    def edge_points(self, edge: EdgeId) -> np.ndarray:
        """Points on an edge ordered by the state agent's weight, vertices included"""
        if self.N != 3:
            raise InvalidParameterError("edges are defined for the triangle only")
        p = np.arange(self.n + 1)
        if edge is EdgeId.OMEGA2_ZERO:
            return np.array([_flat(j, 0, self.n) for j in p])
        if edge is EdgeId.OMEGA1_ZERO:
            return np.array([_flat(0, k, self.n) for k in p])
        return np.array([_flat(j, self.n - j, self.n) for j in p])

    def vertex_point(self, agent: int) -> int:
        """Grid index of the vertex where `agent` consumes everything"""
        if self.N == 2:
            return self.n if agent == 0 else 0
        return {0: _flat(self.n, 0, self.n), 1: _flat(0, self.n, self.n), 2: 0}[agent]

    def dominant_agent(self, point: int) -> int:
        if self.classes[point] is not PointClass.VERTEX:
            raise InvalidParameterError("not a vertex", {"point": point})
        return int(np.argmax(self.full_weights()[point]))


def _flat(j: int, k: int, n: int) -> int:
    return j * (n + 1) - j * (j - 1) // 2 + k


# ============================================================================
# Construction
# ============================================================================

def classify(grid_n: int, N: int, index: Tuple[int, ...]) -> Tuple[PointClass, Optional[EdgeId]]:
    """Class of one integer point; edge id for edge points"""
    if N == 2:
        (j,) = index
        return (PointClass.VERTEX, None) if j in (0, grid_n) else (PointClass.INTERIOR, None)
    j, k = index
    n = grid_n
    if (j, k) in ((0, 0), (n, 0), (0, n)):
        return PointClass.VERTEX, None
    if k == 0:
        return PointClass.EDGE, EdgeId.OMEGA2_ZERO
    if j == 0:
        return PointClass.EDGE, EdgeId.OMEGA1_ZERO
    if j + k == n:
        return PointClass.EDGE, EdgeId.HYPOTENUSE
    if j + k == n - 1:
        return PointClass.DIAGONAL, None
    return PointClass.INTERIOR, None


def build_grid(K: int, N: int) -> SimplexGrid:
    if N not in (2, 3):
        raise InvalidParameterError("grid supports 2 or 3 agents", {"N": N})
    if K < MIN_RESOLUTION:
        raise ResolutionError(
            f"at least {MIN_RESOLUTION} points per axis are required", {"K": K}
        )

    if N == 2:
        n = K
        index = np.arange(n + 1).reshape(-1, 1)
    else:
        n = K - 1
        index = np.array([(j, k) for j in range(n + 1) for k in range(n + 1 - j)])

    h = 1.0 / n
    labels = [classify(n, N, tuple(int(v) for v in row)) for row in index]
    classes = tuple(c for c, _ in labels)
    edges = tuple(e for _, e in labels)
    solved = np.array(
        [i for i, c in enumerate(classes) if c in (PointClass.INTERIOR, PointClass.DIAGONAL)],
        dtype=int,
    )

    stencil = np.full((len(index), len(STENCIL_OFFSETS)), -1, dtype=int)
    if N == 3:
        for p in solved:
            j, k = index[p]
            for slot, (dj, dk) in enumerate(STENCIL_OFFSETS):
                jj, kk = j + dj, k + dk
                if jj >= 0 and kk >= 0 and jj + kk <= n:
                    stencil[p, slot] = _flat(jj, kk, n)
            if classes[p] is PointClass.DIAGONAL:
                # the one-sided cross difference never reaches these corners
                stencil[p, 5] = -1
                stencil[p, 6] = -1
    else:
        for p in solved:
            stencil[p, 0] = p
            stencil[p, 1] = p + 1
            stencil[p, 2] = p - 1

    return SimplexGrid(
        K=K, N=N, n=n, h=h, index=index, coords=index * h,
        classes=classes, edges=edges, solved=solved, stencil=stencil,
    )


def class_labels(grid: SimplexGrid) -> List[str]:
    return [c.value for c in grid.classes]
