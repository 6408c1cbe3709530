"""
LeverageCycle - Path Simulator
==============================
Monte Carlo paths of the consumption weights and the dividend, driven by
one Brownian motion, using the drift and diffusion of a converged
solution; plus the leverage-cycle regressions on the simulated panel.

Dividend growth stands in for output growth in the regressions.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm

from errors import (
    CollinearityError,
    GridMismatchError,
    InvalidParameterError,
    OutOfDomainError,
    ResolutionError,
)
from events import PATHS_DONE, events, warn
from fields import SolutionFields
from numerics import interp_simplex
from postproc import derive
from simplex_grid import MIN_RESOLUTION, SimplexGrid, build_grid


CONDITIONING = ("SD", "r")
SERIES = ("S", "r", "theta", "sigma", "leverage")


# ============================================================================
# Configuration and results
# ============================================================================

@dataclass
class SimConfig:
    dt: float = 0.01
    T: float = 100.0
    n_paths: int = 100
    seed: int = 0
    omega0: Tuple[float, ...] = (0.5,)
    boundary: str = "project"
    sample_every: int = 25

    def __post_init__(self):
        self.omega0 = tuple(float(w) for w in self.omega0)
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive", {"dt": self.dt})
        if not self.T > self.dt:
            raise InvalidParameterError("horizon must exceed one step", {"T": self.T, "dt": self.dt})
        if self.n_paths < 1:
            raise InvalidParameterError("at least one path is required", {"n_paths": self.n_paths})
        if any(w <= 0 for w in self.omega0) or sum(self.omega0) >= 1:
            raise InvalidParameterError("initial weights must lie strictly inside the simplex",
                                        {"omega0": self.omega0})
        if self.boundary != "project":
            raise InvalidParameterError("unsupported boundary policy", {"boundary": self.boundary})
        if self.sample_every < 1:
            raise InvalidParameterError("sample_every must be positive",
                                        {"sample_every": self.sample_every})

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class PathSample:
    """Panel of simulated paths; series have shape (n_paths, n_steps + 1)"""
    times: np.ndarray
    omega: np.ndarray           # (n_paths, n_steps + 1, d)
    D: np.ndarray
    SD: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    leverage: np.ndarray
    projections: int = 0

    @property
    def n_paths(self) -> int:
        return self.D.shape[0]

    def observations(self, sample_every: int = 1) -> pd.DataFrame:
        """Period growth rates between sampled steps, levels at period end"""
        idx = np.arange(0, self.D.shape[1], sample_every)
        lev = self.leverage[:, idx]
        logD = np.log(self.D[:, idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            dlog_lev = np.log(lev[:, 1:]) - np.log(lev[:, :-1])
        valid = (lev[:, 1:] > 0) & (lev[:, :-1] > 0)
        n_paths, n_obs = valid.shape
        return pd.DataFrame({
            "path": np.repeat(np.arange(n_paths), n_obs),
            "t": np.tile(self.times[idx][1:], n_paths),
            "dlog_lev": np.where(valid, dlog_lev, np.nan).ravel(),
            "dlog_D": (logD[:, 1:] - logD[:, :-1]).ravel(),
            "SD": self.SD[:, idx][:, 1:].ravel(),
            "r": self.r[:, idx][:, 1:].ravel(),
            "valid": valid.ravel(),
        })

    def to_frame(self, sample_every: int = 1) -> pd.DataFrame:
        idx = np.arange(0, self.D.shape[1], sample_every)
        n_paths = self.n_paths
        cols = {
            "path": np.repeat(np.arange(n_paths), len(idx)),
            "t": np.tile(self.times[idx], n_paths),
        }
        for j in range(self.omega.shape[2]):
            cols[f"omega{j + 1}"] = self.omega[:, idx, j].ravel()
        for name in ("D", "SD", "r", "theta", "sigma", "leverage"):
            cols[name] = getattr(self, name)[:, idx].ravel()
        return pd.DataFrame(cols)


@dataclass
class CyclicalityResult:
    conditioning: str
    coefficients: Dict[str, float]
    std_errors: Dict[str, float]
    x_low: float
    x_high: float
    slope_low: float
    slope_high: float
    n_obs: int
    n_dropped: int
    standardized: bool
    r_squared: float

    def to_dict(self) -> Dict:
        return asdict(self)


# ============================================================================
# Simulation
# ============================================================================

@dataclass
class StateCoefficients:
    """
    Nodal coefficients of the state SDE d omega = drift dt + diffusion dW
    and the exported series (S, r, theta, sigma, leverage) on one grid.
    """
    grid: SimplexGrid
    drift: np.ndarray           # (L, d)
    diffusion: np.ndarray       # (L, d)
    series: np.ndarray          # (L, 5)
    mu_D: float
    sigma_D: float

    def __post_init__(self):
        shape = (self.grid.size, self.grid.dim)
        if self.drift.shape != shape or self.diffusion.shape != shape:
            raise GridMismatchError("state coefficients do not match the grid",
                                    {"expected": shape, "drift": self.drift.shape,
                                     "diffusion": self.diffusion.shape})
        if self.series.shape != (self.grid.size, len(SERIES)):
            raise GridMismatchError("series table does not match the grid",
                                    {"expected": (self.grid.size, len(SERIES)),
                                     "series": self.series.shape})


def grid_for(fields: SolutionFields) -> SimplexGrid:
    """Grid of a solution; two-agent solutions are rebuilt from their coordinates"""
    if fields.grid is not None:
        return fields.grid
    n = fields.size - 1
    if n < MIN_RESOLUTION:
        raise ResolutionError(f"simulation needs at least {MIN_RESOLUTION} edge intervals",
                              {"P": n, "minimum": MIN_RESOLUTION})
    grid = build_grid(n, 2)
    if not np.allclose(fields.coords, grid.coords, atol=1e-12):
        raise GridMismatchError("coordinates are not a uniform grid on [0, 1]",
                                {"points": fields.size})
    return grid


def state_coefficients(fields: SolutionFields,
                       grid: Optional[SimplexGrid] = None) -> StateCoefficients:
    """State drift/diffusion and exported series at every grid node"""
    grid = grid or grid_for(fields)
    derived = derive(fields)
    d = fields.coords.shape[1]
    W = fields.weights[:, :d]
    return StateCoefficients(
        grid=grid,
        drift=W * derived.mu_w[:, :d],
        diffusion=W * derived.sigma_w[:, :d],
        series=np.column_stack([derived.S, fields.r, fields.theta, fields.sigma,
                                derived.leverage]),
        mu_D=fields.params.mu_D,
        sigma_D=fields.params.sigma_D,
    )


def brownian_increments(n_paths: int, n_steps: int, dt: float, seed: int) -> np.ndarray:
    """dW of shape (n_paths, n_steps); path p uses its own child seed"""
    children = np.random.SeedSequence(seed).spawn(n_paths)
    Z = np.stack([np.random.default_rng(c).standard_normal(n_steps) for c in children])
    return np.sqrt(dt) * Z


def project_to_simplex(x: np.ndarray, eps: float) -> np.ndarray:
    """Nearest point of {x_j >= eps, sum_j x_j <= 1 - eps}, row by row"""
    y = np.maximum(x, eps)
    cap = 1.0 - eps
    over = y.sum(axis=1) > cap
    if not over.any():
        return y
    # project the offending rows onto {z >= 0, sum z = cap - d eps} with z = y - eps
    z = x[over] - eps
    d = z.shape[1]
    total = cap - d * eps
    u = -np.sort(-z, axis=1)
    css = np.cumsum(u, axis=1) - total
    k = np.arange(1, d + 1)
    rho = np.max(np.where(u - css / k > 0, k, 0), axis=1)
    tau = css[np.arange(len(rho)), rho - 1] / rho
    y[over] = np.maximum(z - tau[:, None], 0.0) + eps
    return y


def simulate(config: SimConfig, fields: SolutionFields, grid: Optional[SimplexGrid] = None,
             increments: Optional[np.ndarray] = None) -> PathSample:
    return simulate_state(config, state_coefficients(fields, grid), increments)


def simulate_state(config: SimConfig, coeffs: StateCoefficients,
                   increments: Optional[np.ndarray] = None) -> PathSample:
    """Euler-Maruyama on the state, interpolating nodal coefficients; log D is exact"""
    grid = coeffs.grid
    d = grid.dim
    if len(config.omega0) != d:
        raise InvalidParameterError("initial state has the wrong dimension",
                                    {"omega0": config.omega0, "expected": d})

    n_steps = config.n_steps
    dW = increments if increments is not None else brownian_increments(
        config.n_paths, n_steps, config.dt, config.seed)
    n_paths = dW.shape[0]
    if dW.shape[1] != n_steps:
        raise InvalidParameterError("increment panel does not match the step count",
                                    {"steps": n_steps, "given": dW.shape[1]})

    table = np.column_stack([coeffs.drift, coeffs.diffusion, coeffs.series])
    eps = 0.5 * grid.h
    dt = config.dt
    log_growth = (coeffs.mu_D - 0.5 * coeffs.sigma_D ** 2) * dt

    omega = np.empty((n_paths, n_steps + 1, d))
    logD = np.zeros((n_paths, n_steps + 1))
    series = np.empty((n_paths, n_steps + 1, 5))
    x = np.tile(np.asarray(config.omega0), (n_paths, 1))
    omega[:, 0] = x
    projections = 0

    for t in range(n_steps + 1):
        try:
            values = interp_simplex(grid, table, x)
        except OutOfDomainError as e:
            e.context["step"] = t
            raise
        series[:, t] = values[:, 2 * d:]
        if t == n_steps:
            break
        drift, diffusion = values[:, :d], values[:, d:2 * d]
        x_new = x + drift * dt + diffusion * dW[:, t:t + 1]
        outside = (x_new < 0).any(axis=1) | (x_new.sum(axis=1) > 1.0)
        if outside.any():
            x_new[outside] = project_to_simplex(x_new[outside], eps)
            projections += int(outside.sum())
        x = x_new
        omega[:, t + 1] = x
        logD[:, t + 1] = logD[:, t] + log_growth + coeffs.sigma_D * dW[:, t]

    events.emit(PATHS_DONE, {"n_paths": n_paths, "n_steps": n_steps, "projections": projections})
    return PathSample(
        times=np.arange(n_steps + 1) * dt,
        omega=omega,
        D=np.exp(logD),
        SD=series[:, :, 0],
        r=series[:, :, 1],
        theta=series[:, :, 2],
        sigma=series[:, :, 3],
        leverage=series[:, :, 4],
        projections=projections,
    )


# ============================================================================
# Cyclicality regressions
# ============================================================================

def _zscore(v: np.ndarray, name: str) -> np.ndarray:
    sd = v.std()
    if not sd > 0:
        raise CollinearityError("regressor has no variation", {"variable": name})
    return (v - v.mean()) / sd


def fit_cycle_regression(dlog_lev: np.ndarray, dlog_D: np.ndarray, x: np.ndarray,
                         standardize: bool = True, conditioning: str = "SD",
                         n_dropped: int = 0) -> CyclicalityResult:
    """
    OLS of leverage growth on dividend growth, its interaction with a
    conditioning level x, and x itself; slope = b_dlogD + b_interaction * x
    evaluated at the lower and upper quartile of x.
    """
    y = np.asarray(dlog_lev, dtype=float)
    g = np.asarray(dlog_D, dtype=float)
    x = np.asarray(x, dtype=float)
    if standardize:
        y, g, x = _zscore(y, "dlog_lev"), _zscore(g, "dlog_D"), _zscore(x, conditioning)

    names = ["const", "dlog_D", f"dlog_D_x_{conditioning}", conditioning]
    X = np.column_stack([np.ones_like(g), g, g * x, x])
    if len(y) <= X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise CollinearityError("regression design matrix is rank deficient",
                                {"observations": len(y), "conditioning": conditioning})
    try:
        fit = sm.OLS(y, X).fit()
    except (ValueError, np.linalg.LinAlgError) as e:
        raise CollinearityError("regression fit failed",
                                {"conditioning": conditioning, "cause": str(e)}) from e

    coef = dict(zip(names, map(float, fit.params)))
    se = dict(zip(names, map(float, fit.bse)))
    x_low, x_high = (float(q) for q in np.percentile(x, [25, 75]))
    b1, b2 = coef["dlog_D"], coef[names[2]]
    return CyclicalityResult(
        conditioning=conditioning,
        coefficients=coef,
        std_errors=se,
        x_low=x_low,
        x_high=x_high,
        slope_low=b1 + b2 * x_low,
        slope_high=b1 + b2 * x_high,
        n_obs=len(y),
        n_dropped=n_dropped,
        standardized=standardize,
        r_squared=float(fit.rsquared),
    )


def cyclicality_stats(paths: PathSample, conditioning: str = "SD", standardize: bool = True,
                      sample_every: int = 1) -> CyclicalityResult:
    if conditioning not in CONDITIONING:
        raise InvalidParameterError("unknown conditioning variable",
                                    {"conditioning": conditioning, "allowed": CONDITIONING})
    obs = paths.observations(sample_every)
    n_dropped = int((~obs["valid"]).sum())
    obs = obs[obs["valid"]]
    if n_dropped:
        warn(f"{n_dropped} observations with zero leverage dropped from the regression",
             dropped=n_dropped)
    if obs.empty:
        raise CollinearityError("no observations with positive leverage",
                                {"conditioning": conditioning, "dropped": n_dropped})
    return fit_cycle_regression(
        obs["dlog_lev"].to_numpy(), obs["dlog_D"].to_numpy(), obs[conditioning].to_numpy(),
        standardize=standardize, conditioning=conditioning, n_dropped=n_dropped,
    )
