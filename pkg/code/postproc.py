"""
LeverageCycle - Post-processing
===============================
Derived fields of a converged solution: portfolios, price/dividend ratio,
leverage, equity risk premium and consumption-weight dynamics, the
equilibrium checks, the CSV table layout and deviations from a benchmark
(complete-market) solve.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import GridMismatchError, InvalidSolutionError
from fields import SolutionFields
from model_core import dynamics_field, gamma_star_field, margins


# Written to meta.json so readers know which leverage is exported
LEVERAGE_DEFINITION = (
    "aggregate leverage = sum_i max(pi_i - 1, 0) * omega_i * V_i / sum_i omega_i * V_i "
    "(risk-free debt of levered agents over aggregate wealth); "
    "per-agent borrowing = max(pi_i - 1, 0)"
)


@dataclass
class DerivedFields:
    pi: np.ndarray          # (L, N)
    S: np.ndarray           # (L,)
    erp: np.ndarray         # (L,)
    borrow: np.ndarray      # (L, N)
    leverage: np.ndarray    # (L,)
    mu_w: np.ndarray        # (L, N)
    sigma_w: np.ndarray     # (L, N)
    kappa: np.ndarray       # (L, N)
    gamma_star: np.ndarray  # (L,)


# ============================================================================
# Field maps
# ============================================================================

def portfolios(fields: SolutionFields) -> np.ndarray:
    """Risky share of wealth of each agent"""
    if np.any(fields.sigma <= 0):
        raise InvalidSolutionError("stock diffusion must be positive",
                                   {"min_sigma": float(fields.sigma.min())})
    g = fields.gammas()
    return (fields.kappa + g * fields.hedge) / (g * fields.sigma[:, None])


def leverage(fields: SolutionFields, pi: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(per-agent borrowing ratio, aggregate debt over aggregate wealth)"""
    if pi is None:
        pi = portfolios(fields)
    borrow = np.maximum(pi - 1.0, 0.0)
    wealth = fields.weights * fields.V
    return borrow, (borrow * wealth).sum(axis=1) / wealth.sum(axis=1)


def equity_risk_premium(fields: SolutionFields) -> np.ndarray:
    return fields.theta * fields.sigma


def weight_fields(fields: SolutionFields) -> Tuple[np.ndarray, np.ndarray]:
    m = margins(fields.agents, fields.benchmark)
    return dynamics_field(fields.nu, fields.kappa, fields.r, fields.gammas(), m, fields.params)


def derive(fields: SolutionFields) -> DerivedFields:
    pi = portfolios(fields)
    borrow, lev = leverage(fields, pi)
    mu_w, sigma_w = weight_fields(fields)
    gstar, _ = gamma_star_field(fields.weights, fields.nu, fields.sigma, fields.gammas(),
                                fields.params.sigma_D)
    return DerivedFields(
        pi=pi, S=fields.S, erp=equity_risk_premium(fields), borrow=borrow, leverage=lev,
        mu_w=mu_w, sigma_w=sigma_w, kappa=fields.kappa, gamma_star=gstar,
    )


# ============================================================================
# Equilibrium checks
# ============================================================================

def equilibrium_checks(fields: SolutionFields) -> Dict[str, float]:
    """
    Worst violations over the grid:
    bond_clearing   max |sum_i (1 - pi_i) omega_i V_i| / S
    stock_clearing  max |sum_i pi_i omega_i V_i - S| / S
    slackness       max |nu_i (pi_i - m_i)| over constrained agents
    pi_excess       max (pi_i - m_i)
    nu_max          max nu_i
    """
    pi = portfolios(fields)
    m = margins(fields.agents, fields.benchmark)
    wealth = fields.weights * fields.V
    S = wealth.sum(axis=1)
    finite = np.broadcast_to(np.isfinite(m), pi.shape)
    gap = np.where(finite, pi - np.where(finite, m, 0.0), 0.0)
    return {
        "bond_clearing": float(np.max(np.abs(((1.0 - pi) * wealth).sum(axis=1)) / S)),
        "stock_clearing": float(np.max(np.abs((pi * wealth).sum(axis=1) - S) / S)),
        "slackness": float(np.max(np.abs(fields.nu * gap))),
        "pi_excess": float(np.max(gap[finite])) if finite.any() else float("-inf"),
        "nu_max": float(np.max(fields.nu)),
    }


# ============================================================================
# Tables
# ============================================================================

def _per_agent(name: str, values: np.ndarray) -> Dict[str, np.ndarray]:
    return {f"{name}{i + 1}": values[:, i] for i in range(values.shape[1])}


def to_frame(fields: SolutionFields, derived: Optional[DerivedFields] = None) -> pd.DataFrame:
    """One row per grid point in the export column order"""
    if derived is None:
        derived = derive(fields)
    cols: Dict[str, np.ndarray] = {}
    cols.update({f"omega{j + 1}": fields.coords[:, j] for j in range(fields.coords.shape[1])})
    if fields.n_agents == 3:
        cols["class"] = np.asarray(fields.classes)
    cols.update(_per_agent("V", fields.V))
    cols.update(_per_agent("nu", fields.nu))
    cols["sigma"] = fields.sigma
    cols["theta"] = fields.theta
    cols["r"] = fields.r
    cols.update(_per_agent("pi", derived.pi))
    cols["S"] = derived.S
    cols["ERP"] = derived.erp
    cols["leverage"] = derived.leverage
    cols.update(_per_agent("borrow", derived.borrow))
    cols.update(_per_agent("mu_w", derived.mu_w))
    cols.update(_per_agent("sigma_w", derived.sigma_w))
    cols.update(_per_agent("kappa", derived.kappa))
    cols["gamma_star"] = derived.gamma_star
    return pd.DataFrame(cols)


KEY_COLUMNS = ("omega1", "omega2", "class")


def deviations(constrained: SolutionFields, benchmark: SolutionFields,
               atol: float = 1e-12) -> pd.DataFrame:
    """Constrained minus benchmark, absolute (X) and percent (X_pct)"""
    if constrained.coords.shape != benchmark.coords.shape or not np.allclose(
            constrained.coords, benchmark.coords, rtol=0.0, atol=atol):
        raise GridMismatchError("solutions live on different grids",
                                {"constrained": constrained.coords.shape,
                                 "benchmark": benchmark.coords.shape})
    c = to_frame(constrained)
    b = to_frame(benchmark)
    keys: List[str] = [k for k in KEY_COLUMNS if k in c.columns]
    out = c[keys].copy()
    for col in c.columns:
        if col in keys:
            continue
        diff = c[col].to_numpy() - b[col].to_numpy()
        base = np.abs(b[col].to_numpy())
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(base > 0, 100.0 * diff / base, np.nan)
        out[col] = diff
        out[f"{col}_pct"] = pct
    return out
