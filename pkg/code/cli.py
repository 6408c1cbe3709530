"""
LeverageCycle - Command Line
============================
Subcommands:

    solve-edge     two-agent economy on [0, 1]
    solve-simplex  three-agent economy on the triangle
    simulate       solve, then simulate paths and run the cyclicality regressions
    report         summarize a previously written output directory

Usage:
    python code/cli.py solve-edge --preset two_agent_calibrated --out out/two --benchmark
    python code/cli.py simulate --config run.json --seed 7
    python code/cli.py report --out out/two
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy
import statsmodels

from edge_solver import EdgeProblem, solve_edge
from errors import ConfigError, ErrorKind, LeverageCycleError, OutputWriteError
from events import ConsoleReporter, events, warn
from fields import SolutionFields
from postproc import LEVERAGE_DEFINITION, deviations, equilibrium_checks, to_frame
from run_config import RunConfig, load_config, preset_config
from simplex_grid import build_grid
from simplex_solver import solve_simplex
from simulator import CONDITIONING, cyclicality_stats, simulate


FLOAT_FORMAT = "%.17e"
OUTPUT_PROXY = "dividend growth (dlog D) stands in for output growth in the regressions"

COMMANDS = ("solve-edge", "solve-simplex", "simulate", "report")


@dataclass
class RunResult:
    success: bool
    error: ErrorKind
    message: str
    outputs: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if self.success:
            return 0
        return 2 if self.error is ErrorKind.CONFIG else 1


# ============================================================================
# Solving
# ============================================================================

def solve_fields(config: RunConfig, benchmark: bool = False) -> Tuple[SolutionFields, Dict[str, Any]]:
    """Run the solver matching the agent count; returns fields and report dict"""
    params = config.economy_params()
    agents = config.agent_specs()
    s = config.solver
    if config.n_agents == 2:
        problem = EdgeProblem(agents=agents, pair=(0, 1), P=config.K, dt=s.dt_pseudo,
                              tol_outer=s.tol_outer, tol_point=s.tol_point,
                              max_steps=s.max_steps, relaxation=s.relaxation,
                              benchmark=benchmark, label="benchmark" if benchmark else "edge")
        sol = solve_edge(problem, params)
    else:
        grid = build_grid(config.K, 3)
        sol = solve_simplex(grid, params, agents, dt=s.dt_pseudo, tol_outer=s.tol_outer,
                            max_steps=s.max_steps, tol_point=s.tol_point,
                            relaxation=s.relaxation, benchmark=benchmark)
    report = sol.report.to_dict()
    report["equilibrium"] = equilibrium_checks(sol.fields)
    return sol.fields, report


def _require_agents(config: RunConfig, command: str):
    expected = {"solve-edge": 2, "solve-simplex": 3}.get(command)
    if expected is not None and config.n_agents != expected:
        raise ConfigError("agents", f"{command} needs {expected} agents, got {config.n_agents}")


def _write_csv(frame: pd.DataFrame, path: Path) -> str:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return str(path)


def _write_json(data: Dict[str, Any], path: Path) -> str:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")
    return str(path)


def _json_default(value: Any):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _meta(config: RunConfig, command: str, seed: Optional[int]) -> Dict[str, Any]:
    return {
        "command": command,
        "config": config.to_dict(),
        "seed": seed,
        "leverage_definition": LEVERAGE_DEFINITION,
        "output_proxy": OUTPUT_PROXY,
        "versions": {
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "statsmodels": statsmodels.__version__,
        },
        "created_at": datetime.now(timezone.utc).isoformat(),
    }


def run(config: RunConfig, command: str, seed: Optional[int] = None) -> RunResult:
    """Execute one subcommand and write its artifacts into config.output_dir"""
    try:
        _require_agents(config, command)
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        outputs = []

        fields, solve_report = solve_fields(config)
        outputs.append(_write_csv(to_frame(fields), out / "fields.csv"))
        convergence = {"solve": solve_report}

        if config.benchmark:
            bench, bench_report = solve_fields(config, benchmark=True)
            outputs.append(_write_csv(to_frame(bench), out / "fields_benchmark.csv"))
            outputs.append(_write_csv(deviations(fields, bench), out / "fields_deviation.csv"))
            convergence["benchmark"] = bench_report

        if command == "simulate":
            sim = config.sim_config(seed)
            paths = simulate(sim, fields)
            outputs.append(_write_csv(paths.to_frame(sim.sample_every), out / "paths.csv"))
            standardize = config.simulate.standardize if config.simulate else True
            stats = {}
            for conditioning in CONDITIONING:
                try:
                    stats[conditioning] = cyclicality_stats(
                        paths, conditioning, standardize, sim.sample_every).to_dict()
                except LeverageCycleError as e:
                    warn(f"cyclicality regression on {conditioning} failed: {e}")
                    stats[conditioning] = {"error": e.kind.value, "message": str(e)}
            stats["projections"] = paths.projections
            outputs.append(_write_json(stats, out / "cyclicality.json"))

        outputs.append(_write_json(convergence, out / "convergence.json"))
        outputs.append(_write_json(_meta(config, command, seed), out / "meta.json"))
        return RunResult(True, ErrorKind.NONE, f"wrote {len(outputs)} files to {out}", outputs)

    except LeverageCycleError as e:
        return RunResult(False, e.kind, str(e))
    except OSError as e:
        err = OutputWriteError(f"cannot write to {config.output_dir}", {"cause": str(e)})
        return RunResult(False, err.kind, str(err))


# ============================================================================
# Report
# ============================================================================

def report(out_dir: str, printer=print) -> RunResult:
    out = Path(out_dir)
    conv_path = out / "convergence.json"
    fields_path = out / "fields.csv"
    if not conv_path.exists() or not fields_path.exists():
        return RunResult(False, ErrorKind.CONFIG,
                         f"--out: {out_dir} does not contain a solver run")

    try:
        convergence = json.loads(conv_path.read_text())
        frame = pd.read_csv(fields_path)
    except (OSError, ValueError) as e:
        return RunResult(False, ErrorKind.IO, f"cannot read run in {out_dir}: {e}")
    solve = convergence["solve"]
    printer(f"LeverageCycle run in {out_dir}")
    printer(f"  steps: {solve['steps']}  update: {solve['update_norm']:.3e}  "
            f"residual: {solve['residual']:.3e}")
    printer(f"  grid points: {len(frame)}")
    for col in sorted(c for c in frame.columns if c.startswith("nu")):
        printer(f"  {col} binding at {int((frame[col] < 0).sum())} points")
    for name, value in solve.get("equilibrium", {}).items():
        printer(f"  {name}: {value:.3e}")
    for warning in solve.get("warnings", []):
        printer(f"  warning: {warning}")

    dev_path = out / "fields_deviation.csv"
    if dev_path.exists():
        dev = pd.read_csv(dev_path)
        for col in ("S", "sigma", "theta", "r", "leverage"):
            if col in dev.columns:
                printer(f"  max |deviation| {col}: {dev[col].abs().max():.3e}")

    cyc_path = out / "cyclicality.json"
    if cyc_path.exists():
        cyc = json.loads(cyc_path.read_text())
        for conditioning in CONDITIONING:
            res = cyc.get(conditioning, {})
            if "slope_low" in res:
                printer(f"  slope of leverage growth on dlog D ({conditioning}): "
                        f"low quartile {res['slope_low']:+.4f}, "
                        f"high quartile {res['slope_high']:+.4f} (n={res['n_obs']})")
            elif res:
                printer(f"  regression on {conditioning}: {res.get('message')}")
    return RunResult(True, ErrorKind.NONE, "report complete")


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leveragecycle",
        description="Equilibria and leverage dynamics with margin-constrained agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", type=str, help="Output directory")
        p.add_argument("--quiet", action="store_true", help="Suppress progress output")
        if name == "report":
            continue
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=str, help="JSON run configuration")
        source.add_argument("--preset", type=str, help="Named preset configuration")
        p.add_argument("--seed", type=int, help="Simulation seed")
        p.add_argument("--benchmark", action="store_true",
                       help="Also solve the complete-market benchmark")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    reporter = None if args.quiet else ConsoleReporter().attach(events)
    try:
        if args.command == "report":
            if not args.out:
                result = RunResult(False, ErrorKind.CONFIG, "--out: required for report")
            else:
                result = report(args.out)
        else:
            try:
                config = load_config(args.config) if args.config else preset_config(args.preset)
            except LeverageCycleError as e:
                result = RunResult(False, e.kind, str(e))
            else:
                if args.out:
                    config.output_dir = args.out
                if args.benchmark:
                    config.benchmark = True
                if args.seed is not None and args.seed < 0:
                    result = RunResult(False, ErrorKind.CONFIG, "--seed: must be non-negative")
                else:
                    result = run(config, args.command, args.seed)
    finally:
        if reporter is not None:
            reporter.detach()

    if result.success:
        print(f"[LeverageCycle] {result.message}")
    else:
        print(f"[LeverageCycle] error ({result.error.value}): {result.message}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
