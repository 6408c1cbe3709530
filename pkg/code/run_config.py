"""
LeverageCycle - Run Configuration
=================================
JSON run configuration: schema, defaults, validation and named presets.

Example:

    {
      "economy":   {"mu_D": 0.01, "sigma_D": 0.032, "rho": 0.02},
      "agents":    [{"gamma": 1.1, "margin": 1.2},
                    {"gamma": 5.0, "margin": "unconstrained"}],
      "grid":      {"K": 100},
      "solver":    {"dt_pseudo": 0.5, "tol_outer": 1e-8, "tol_point": 1e-10,
                    "max_steps": 20000, "relaxation": 1.0},
      "simulate":  {"dt": 0.01, "T": 200.0, "n_paths": 50, "seed": 0,
                    "omega0": [0.5], "sample_every": 25, "standardize": true},
      "output":    {"dir": "out"},
      "benchmark": false
    }

For two agents K is the number of intervals on [0, 1]; for three agents it
is the number of points per axis of the triangle.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from errors import ConfigError
from model_core import UNCONSTRAINED, AgentSpec, EconomyParams
from simulator import SimConfig


UNCONSTRAINED_LABEL = "unconstrained"
DEFAULT_K = {2: 100, 3: 30}


# ============================================================================
# Sections
# ============================================================================

@dataclass
class EconomySection:
    mu_D: float = 0.01
    sigma_D: float = 0.032
    rho: float = 0.02


@dataclass
class AgentSection:
    gamma: float
    margin: float = UNCONSTRAINED

    def to_dict(self) -> Dict[str, Any]:
        margin = UNCONSTRAINED_LABEL if math.isinf(self.margin) else self.margin
        return {"gamma": self.gamma, "margin": margin}


@dataclass
class GridSection:
    K: Optional[int] = None


@dataclass
class SolverSection:
    dt_pseudo: float = 0.5
    tol_outer: float = 1e-8
    tol_point: float = 1e-10
    max_steps: int = 20000
    relaxation: float = 1.0


@dataclass
class SimulateSection:
    dt: float = 0.01
    T: float = 200.0
    n_paths: int = 50
    seed: int = 0
    omega0: List[float] = field(default_factory=list)
    sample_every: int = 25
    standardize: bool = True


@dataclass
class RunConfig:
    economy: EconomySection
    agents: List[AgentSection]
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    simulate: Optional[SimulateSection] = None
    output_dir: str = "out"
    benchmark: bool = False

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def K(self) -> int:
        return self.grid.K if self.grid.K is not None else DEFAULT_K[self.n_agents]

    def economy_params(self) -> EconomyParams:
        return EconomyParams(self.economy.mu_D, self.economy.sigma_D, self.economy.rho)

    def agent_specs(self) -> List[AgentSpec]:
        return [AgentSpec(a.gamma, a.margin) for a in self.agents]

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        sim = self.simulate or SimulateSection()
        omega0 = sim.omega0 or [1.0 / self.n_agents] * (self.n_agents - 1)
        return SimConfig(dt=sim.dt, T=sim.T, n_paths=sim.n_paths,
                         seed=sim.seed if seed is None else seed,
                         omega0=tuple(omega0), sample_every=sim.sample_every)

    def to_dict(self) -> Dict[str, Any]:
        sim = None
        if self.simulate is not None:
            sim = dict(vars(self.simulate))
            sim["omega0"] = list(sim["omega0"])
        return {
            "economy": dict(vars(self.economy)),
            "agents": [a.to_dict() for a in self.agents],
            "grid": dict(vars(self.grid)),
            "solver": dict(vars(self.solver)),
            "simulate": sim,
            "output": {"dir": self.output_dir},
            "benchmark": self.benchmark,
        }


# ============================================================================
# Parsing and validation
# ============================================================================

def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = raw.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "must be an object")
    return value


def _check_keys(data: Dict[str, Any], allowed, path: str):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown setting")


def _number(data: Dict[str, Any], key: str, path: str, default: float,
            positive: bool = False, integer: bool = False) -> Any:
    value = data.get(key, default)
    where = f"{path}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, "must be a number")
    if integer and int(value) != value:
        raise ConfigError(where, "must be an integer")
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    if positive and not value > 0:
        raise ConfigError(where, "must be positive")
    return int(value) if integer else float(value)


def _parse_agent(raw: Any, i: int) -> AgentSection:
    path = f"agents[{i}]"
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be an object")
    _check_keys(raw, ("gamma", "margin"), path)
    if "gamma" not in raw:
        raise ConfigError(f"{path}.gamma", "is required")
    gamma = _number(raw, "gamma", path, 0.0, positive=True)
    margin = raw.get("margin", UNCONSTRAINED_LABEL)
    if margin == UNCONSTRAINED_LABEL or margin is None:
        margin = UNCONSTRAINED
    else:
        margin = _number(raw, "margin", path, 0.0, positive=True)
    return AgentSection(gamma=gamma, margin=margin)


def parse_config(raw: Dict[str, Any]) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _check_keys(raw, ("economy", "agents", "grid", "solver", "simulate", "output", "benchmark"), "")

    eco = _section(raw, "economy")
    _check_keys(eco, ("mu_D", "sigma_D", "rho"), "economy")
    d = EconomySection()
    economy = EconomySection(
        mu_D=_number(eco, "mu_D", "economy", d.mu_D),
        sigma_D=_number(eco, "sigma_D", "economy", d.sigma_D, positive=True),
        rho=_number(eco, "rho", "economy", d.rho, positive=True),
    )

    agents_raw = raw.get("agents")
    if not isinstance(agents_raw, list):
        raise ConfigError("agents", "must be a list of agents")
    agents = [_parse_agent(a, i) for i, a in enumerate(agents_raw)]
    if not 2 <= len(agents) <= 3:
        raise ConfigError("agents", "the solvers support two or three agents")

    g = _section(raw, "grid")
    _check_keys(g, ("K",), "grid")
    K = g.get("K")
    if K is not None:
        K = _number(g, "K", "grid", 0, positive=True, integer=True)
        if K < 4:
            raise ConfigError("grid.K", "must be at least 4")
    grid = GridSection(K=K)

    s = _section(raw, "solver")
    _check_keys(s, ("dt_pseudo", "tol_outer", "tol_point", "max_steps", "relaxation"), "solver")
    ds = SolverSection()
    solver = SolverSection(
        dt_pseudo=_number(s, "dt_pseudo", "solver", ds.dt_pseudo, positive=True),
        tol_outer=_number(s, "tol_outer", "solver", ds.tol_outer, positive=True),
        tol_point=_number(s, "tol_point", "solver", ds.tol_point, positive=True),
        max_steps=_number(s, "max_steps", "solver", ds.max_steps, positive=True, integer=True),
        relaxation=_number(s, "relaxation", "solver", ds.relaxation, positive=True),
    )
    if solver.relaxation > 1:
        raise ConfigError("solver.relaxation", "must not exceed 1")

    simulate = None
    if raw.get("simulate") is not None:
        sm_raw = _section(raw, "simulate")
        _check_keys(sm_raw, ("dt", "T", "n_paths", "seed", "omega0", "sample_every", "standardize"),
                    "simulate")
        dsim = SimulateSection()
        omega0 = sm_raw.get("omega0", [])
        if not isinstance(omega0, list) or any(
                isinstance(w, bool) or not isinstance(w, (int, float)) for w in omega0):
            raise ConfigError("simulate.omega0", "must be a list of numbers")
        if omega0 and (len(omega0) != len(agents) - 1 or any(w <= 0 for w in omega0)
                       or sum(omega0) >= 1):
            raise ConfigError("simulate.omega0",
                              f"must hold {len(agents) - 1} weights strictly inside the simplex")
        standardize = sm_raw.get("standardize", dsim.standardize)
        if not isinstance(standardize, bool):
            raise ConfigError("simulate.standardize", "must be true or false")
        simulate = SimulateSection(
            dt=_number(sm_raw, "dt", "simulate", dsim.dt, positive=True),
            T=_number(sm_raw, "T", "simulate", dsim.T, positive=True),
            n_paths=_number(sm_raw, "n_paths", "simulate", dsim.n_paths, positive=True, integer=True),
            seed=_number(sm_raw, "seed", "simulate", dsim.seed, integer=True),
            omega0=[float(w) for w in omega0],
            sample_every=_number(sm_raw, "sample_every", "simulate", dsim.sample_every,
                                 positive=True, integer=True),
            standardize=standardize,
        )
        if simulate.T <= simulate.dt:
            raise ConfigError("simulate.T", "must exceed simulate.dt")
        if simulate.seed < 0:
            raise ConfigError("simulate.seed", "must be non-negative")

    out = _section(raw, "output")
    _check_keys(out, ("dir",), "output")
    output_dir = out.get("dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output.dir", "must be a non-empty path")

    benchmark = raw.get("benchmark", False)
    if not isinstance(benchmark, bool):
        raise ConfigError("benchmark", "must be true or false")

    return RunConfig(economy=economy, agents=agents, grid=grid, solver=solver,
                     simulate=simulate, output_dir=output_dir, benchmark=benchmark)


def load_config(path: str) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError("--config", f"file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON: {e}")
    return parse_config(raw)


# ============================================================================
# Presets
# ============================================================================

PRESETS: Dict[str, Dict[str, Any]] = {
    "two_agent_calibrated": {
        "economy": {"mu_D": 0.01, "sigma_D": 0.032, "rho": 0.02},
        "agents": [{"gamma": 1.1, "margin": 1.2}, {"gamma": 5.0, "margin": 1.2}],
        "grid": {"K": 100},
        "simulate": {"dt": 0.01, "T": 200.0, "n_paths": 50, "seed": 0,
                     "omega0": [0.5], "sample_every": 25},
    },
    "three_agent_calibrated": {
        "economy": {"mu_D": 0.01, "sigma_D": 0.032, "rho": 0.02},
        "agents": [{"gamma": 1.1, "margin": 1.2}, {"gamma": 1.5, "margin": 1.2},
                   {"gamma": 3.0, "margin": 1.2}],
        "grid": {"K": 30},
        "simulate": {"dt": 0.01, "T": 200.0, "n_paths": 50, "seed": 0,
                     "omega0": [0.3, 0.3], "sample_every": 25},
    },
}


def preset_config(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError("--preset", f"unknown preset '{name}' (choose from {sorted(PRESETS)})")
    return parse_config(copy.deepcopy(PRESETS[name]))
