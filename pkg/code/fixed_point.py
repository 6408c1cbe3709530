"""
LeverageCycle - Adjustment/Volatility Fixed Point
=================================================
Per-point solution of the N+1 equations for the adjustments nu_1..nu_N and
the stock diffusion sigma, given frozen V and its state gradient.

With u_i = nu_i / sigma, and a fixed set A of agents whose margin binds,
the equations are linear in (u, sigma):

    i in A:      kappa_i + gamma_i * g_i = m_i * gamma_i * sigma   (pi_i = m_i)
    i not in A:  u_i = 0
    sigma:       sigma = sigma_D + sum_j s_j * dS_j / S

where kappa_i = theta + u_i, s_j is the diffusion of state weight j and
g_i = sum_j s_j dV_i/dx_j / V_i. Candidate sets are enumerated and the
first one satisfying nu_i <= 0 on A and pi_i <= m_i off A is accepted.
solve_points does this for a whole grid with stacked dense solves;
active_set_solve does it for one point with the nonlinear residual and
numerics.find_root, and is the fallback for points the batch cannot verify.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidParameterError, LeverageCycleError, NonConvergenceError
from model_core import AgentSpec, EconomyParams, gammas, margins, theta_field
from numerics import RootProblem, find_root


SIGMA_FLOOR = 0.1   # fraction of sigma_D
DEFAULT_TOL = 1e-10


# ============================================================================
# Inputs and results
# ============================================================================

@dataclass
class PointBatch:
    """
    Frozen inputs for P points.

    weights: (P, N) full consumption weights
    V:       (P, N) wealth/consumption ratios
    grad:    (P, N, d) derivative of V_i along state coordinate j
    state_agents: agents whose weights are the d state coordinates
    residual_agent: agent whose weight is one minus the others
    """
    weights: np.ndarray
    V: np.ndarray
    grad: np.ndarray
    state_agents: Tuple[int, ...]
    residual_agent: int

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.grad = np.asarray(self.grad, dtype=float)
        if self.grad.ndim == 2:
            self.grad = self.grad[None]
        self.state_agents = tuple(self.state_agents)
        if np.any(self.V <= 0):
            raise InvalidParameterError("wealth/consumption ratios must be positive")
        if np.any(self.S <= 0):
            raise InvalidParameterError("price/dividend ratio must be positive")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def S(self) -> np.ndarray:
        return (self.weights * self.V).sum(axis=1)

    @property
    def dS(self) -> np.ndarray:
        """(P, d) derivative of S along each state coordinate"""
        a = list(self.state_agents)
        jump = self.V[:, a] - self.V[:, [self.residual_agent]]
        return jump + np.einsum("pi,pid->pd", self.weights, self.grad)

    def point(self, p: int) -> "PointInputs":
        return PointInputs(self.weights[p], self.V[p], self.grad[p],
                           self.state_agents, self.residual_agent)


@dataclass
class PointInputs:
    weights: np.ndarray
    V: np.ndarray
    grad: np.ndarray
    state_agents: Tuple[int, ...]
    residual_agent: int

    def as_batch(self) -> PointBatch:
        return PointBatch(self.weights[None], self.V[None], np.asarray(self.grad)[None],
                          self.state_agents, self.residual_agent)


@dataclass
class PointSolution:
    nu: np.ndarray
    sigma: float
    active: Tuple[int, ...]


@dataclass
class BatchSolution:
    nu: np.ndarray          # (P, N)
    sigma: np.ndarray       # (P,)
    active: np.ndarray      # (P, N) bool
    theta: np.ndarray       # (P,)
    kappa: np.ndarray       # (P, N)
    hedge: np.ndarray       # (P, N) sum_j s_j dV_i/dx_j / V_i
    pi: np.ndarray          # (P, N)
    fallbacks: int = 0


def candidate_sets(agents: Sequence[AgentSpec], benchmark: bool = False) -> List[Tuple[int, ...]]:
    """Subsets of constrained agents, smallest first"""
    if benchmark:
        return [()]
    eligible = [i for i, a in enumerate(agents) if a.constrained]
    return [c for size in range(len(eligible) + 1) for c in combinations(eligible, size)]


# ============================================================================
# Batched exact solve
# ============================================================================

class _AffineMaps:
    """kappa, g and sigma as affine functions of u for every point of a batch"""

    def __init__(self, batch: PointBatch, g: np.ndarray, sigma_D: float):
        W = batch.weights
        P, N = W.shape
        xi = W @ (1.0 / g)
        theta0 = sigma_D / xi
        c_theta = -(W / g) / xi[:, None]

        self.K0 = np.repeat(theta0[:, None], N, axis=1)
        self.Kmat = c_theta[:, None, :] + np.eye(N)[None]

        a = list(batch.state_agents)
        sw0 = self.K0 / g - sigma_D
        swmat = self.Kmat / g[None, :, None]
        Wa = W[:, a]
        s0 = Wa * sw0[:, a]
        smat = Wa[:, :, None] * swmat[:, a, :]

        H = batch.grad / batch.V[:, :, None]
        self.g0 = np.einsum("pid,pd->pi", H, s0)
        self.gmat = np.einsum("pid,pdn->pin", H, smat)

        q = batch.dS / batch.S[:, None]
        self.sig0 = sigma_D + np.einsum("pd,pd->p", q, s0)
        self.sigvec = np.einsum("pd,pdn->pn", q, smat)
        self.theta0 = theta0
        self.c_theta = c_theta

    def system(self, active: np.ndarray, g: np.ndarray, m: np.ndarray):
        P, N = active.shape
        M = np.zeros((P, N + 1, N + 1))
        rhs = np.zeros((P, N + 1))
        C = self.Kmat + g[None, :, None] * self.gmat
        M[:, :N, :N] = np.where(active[:, :, None], C, np.eye(N)[None])
        m_finite = np.where(np.isfinite(m), m, 0.0)
        M[:, :N, N] = np.where(active, -m_finite * g, 0.0)
        rhs[:, :N] = np.where(active, -(self.K0 + g * self.g0), 0.0)
        M[:, N, :N] = -self.sigvec
        M[:, N, N] = 1.0
        rhs[:, N] = self.sig0
        return M, rhs

    def evaluate(self, z: np.ndarray, g: np.ndarray):
        N = z.shape[1] - 1
        u, sigma = z[:, :N], z[:, N]
        theta = self.theta0 + (self.c_theta * u).sum(axis=1)
        kappa = self.K0 + np.einsum("pij,pj->pi", self.Kmat, u)
        hedge = self.g0 + np.einsum("pij,pj->pi", self.gmat, u)
        with np.errstate(divide="ignore", invalid="ignore"):
            pi = (kappa + g * hedge) / (g * sigma[:, None])
        return u * sigma[:, None], sigma, theta, kappa, hedge, pi


def _stacked_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        z = np.full(rhs.shape, np.nan)
        for p in range(M.shape[0]):
            try:
                z[p] = np.linalg.solve(M[p], rhs[p])
            except np.linalg.LinAlgError:
                pass
        return z


def _verified(nu, sigma, pi, active, m, sigma_D, tol) -> np.ndarray:
    finite = np.all(np.isfinite(nu), axis=1) & np.isfinite(sigma) & np.all(np.isfinite(pi), axis=1)
    with np.errstate(invalid="ignore"):
        ok_sigma = sigma > SIGMA_FLOOR * sigma_D
        ok_rows = np.where(active, nu <= tol, pi <= m + tol)
    return finite & ok_sigma & np.all(ok_rows, axis=1)


def solve_points(batch: PointBatch, agents: Sequence[AgentSpec], params: EconomyParams,
                 previous_active: Optional[np.ndarray] = None, tol: float = DEFAULT_TOL,
                 benchmark: bool = False) -> BatchSolution:
    """Solve every point of a batch; previous_active (P, N) is tried first"""
    g = gammas(agents)
    m = margins(agents, benchmark)
    P, N = batch.weights.shape
    maps = _AffineMaps(batch, g, params.sigma_D)

    out_z = np.full((P, N + 1), np.nan)
    out_active = np.zeros((P, N), dtype=bool)
    done = np.zeros(P, dtype=bool)

    trials = []
    if previous_active is not None and not benchmark:
        trials.append(np.asarray(previous_active, dtype=bool) & np.isfinite(m)[None, :])
    for cand in candidate_sets(agents, benchmark):
        mask = np.zeros((P, N), dtype=bool)
        mask[:, list(cand)] = True
        trials.append(mask)

    for mask in trials:
        todo = ~done
        if not todo.any():
            break
        M, rhs = maps.system(mask, g, m)
        z = np.full((P, N + 1), np.nan)
        z[todo] = _stacked_solve(M[todo], rhs[todo])
        nu, sigma, _, _, _, pi = maps.evaluate(z, g)
        ok = todo & _verified(nu, sigma, pi, mask, m, params.sigma_D, tol)
        out_z[ok] = z[ok]
        out_active[ok] = mask[ok]
        done |= ok

    fallbacks = 0
    for p in np.flatnonzero(~done):
        sol = active_set_solve(batch.point(p), agents, params, tol=tol, benchmark=benchmark)
        mask = np.zeros(N, dtype=bool)
        mask[list(sol.active)] = True
        out_z[p, :N] = sol.nu / sol.sigma
        out_z[p, N] = sol.sigma
        out_active[p] = mask
        fallbacks += 1

    nu, sigma, theta, kappa, hedge, pi = maps.evaluate(out_z, g)
    nu = np.where(out_active, np.minimum(nu, 0.0), 0.0)
    return BatchSolution(nu=nu, sigma=sigma, active=out_active, theta=theta, kappa=kappa,
                         hedge=hedge, pi=pi, fallbacks=fallbacks)


# ============================================================================
# Single point, nonlinear residual
# ============================================================================

def point_quantities(inputs: PointInputs, nu: np.ndarray, sigma: float,
                     agents: Sequence[AgentSpec], params: EconomyParams):
    """theta, kappa, hedge term and portfolios at one point for given (nu, sigma)"""
    g = gammas(agents)
    W = np.asarray(inputs.weights, dtype=float)
    theta = float(theta_field(W[None], nu[None], np.array([sigma]), g, params.sigma_D)[0])
    kappa = theta + nu / sigma
    a = list(inputs.state_agents)
    s = W[a] * (kappa[a] / g[a] - params.sigma_D)
    hedge = (np.asarray(inputs.grad) / np.asarray(inputs.V)[:, None]) @ s
    pi = (kappa + g * hedge) / (g * sigma)
    return theta, kappa, hedge, pi, s


def _residual(inputs: PointInputs, active: Tuple[int, ...], agents: Sequence[AgentSpec],
              params: EconomyParams, m: np.ndarray, q: np.ndarray):
    N = len(agents)
    floor = SIGMA_FLOOR * params.sigma_D

    def F(z: np.ndarray) -> np.ndarray:
        nu, sigma = z[:N], z[N]
        _, _, _, pi, s = point_quantities(inputs, nu, max(sigma, floor), agents, params)
        out = np.empty(N + 1)
        for i in range(N):
            out[i] = pi[i] - m[i] if i in active else nu[i]
        out[N] = sigma - params.sigma_D - q @ s
        return out

    return F


def active_set_solve(inputs: PointInputs, agents: Sequence[AgentSpec], params: EconomyParams,
                     guess: Optional[Tuple[np.ndarray, float]] = None, tol: float = DEFAULT_TOL,
                     max_iter: int = 100, benchmark: bool = False,
                     first: Optional[Tuple[int, ...]] = None) -> PointSolution:
    """
    Enumerate active sets (warm-start set first), solve each smooth system
    with find_root and return the first verified solution.
    """
    N = len(agents)
    m = margins(agents, benchmark)
    batch = inputs.as_batch()
    q = batch.dS[0] / batch.S[0]
    if guess is None:
        z0 = np.append(np.zeros(N), params.sigma_D)
    else:
        z0 = np.append(np.asarray(guess[0], dtype=float), float(guess[1]))

    order = candidate_sets(agents, benchmark)
    if first is not None and tuple(first) in order:
        order.remove(tuple(first))
        order.insert(0, tuple(first))

    best = None
    for active in order:
        problem = RootProblem(_residual(inputs, active, agents, params, m, q), z0, tol, max_iter)
        try:
            z = find_root(problem)
        except LeverageCycleError as e:
            best = best or e.context
            continue
        nu, sigma = z[:N], float(z[N])
        if not sigma > SIGMA_FLOOR * params.sigma_D:
            continue
        _, _, _, pi, _ = point_quantities(inputs, nu, sigma, agents, params)
        mask = np.isin(np.arange(N), active)
        if _verified(nu[None], np.array([sigma]), pi[None], mask[None], m,
                     params.sigma_D, max(tol, 1e-9))[0]:
            nu = np.where(mask, np.minimum(nu, 0.0), 0.0)
            return PointSolution(nu=nu, sigma=sigma, active=tuple(active))

    raise NonConvergenceError(
        "no active set yields a consistent adjustment/volatility solution",
        {"weights": np.asarray(inputs.weights).tolist(), "best": best},
    )


def solve_point(inputs: PointInputs, agents: Sequence[AgentSpec], params: EconomyParams,
                guess: Optional[Tuple[np.ndarray, float]] = None, tol: float = DEFAULT_TOL,
                max_iter: int = 100, benchmark: bool = False) -> Tuple[np.ndarray, float]:
    sol = active_set_solve(inputs, agents, params, guess, tol, max_iter, benchmark)
    return sol.nu, sol.sigma
