"""
LeverageCycle - Run Configuration Tests
=======================================
Schema validation with field paths, defaults, presets and round trips.
"""

import json
import math

import pytest


def minimal(**overrides):
    raw = {"agents": [{"gamma": 1.1, "margin": 1.2}, {"gamma": 5.0}]}
    raw.update(overrides)
    return raw


# =============================================================================
# TEST 1: Defaults And Presets
# =============================================================================
# WHY: A two-line config must give the standard calibration.

def test_defaults():
    """Missing sections fall back to the standard calibration"""
    from run_config import parse_config

    config = parse_config(minimal())
    assert config.economy.mu_D == 0.01 and config.economy.sigma_D == 0.032
    assert config.K == 100
    assert config.agents[0].margin == 1.2
    assert math.isinf(config.agents[1].margin)
    assert not config.agent_specs()[1].constrained
    assert config.simulate is None
    assert config.output_dir == "out"

    three = parse_config({"agents": [{"gamma": 1.1}, {"gamma": 1.5}, {"gamma": 3.0}]})
    assert three.K == 30


def test_presets():
    """Both presets parse; unknown names are a config error"""
    from errors import ConfigError
    from run_config import PRESETS, preset_config

    two = preset_config("two_agent_calibrated")
    assert two.n_agents == 2 and two.K == 100
    assert [a.gamma for a in two.agents] == [1.1, 5.0]
    three = preset_config("three_agent_calibrated")
    assert three.n_agents == 3 and three.K == 30
    assert three.sim_config().omega0 == (0.3, 0.3)

    with pytest.raises(ConfigError) as info:
        preset_config("nope")
    assert info.value.field == "--preset"

    # presets are copied, not shared
    two.agents[0].gamma = 9.0
    assert PRESETS["two_agent_calibrated"]["agents"][0]["gamma"] == 1.1


def test_sim_config():
    """Default initial state is the barycenter; an explicit seed wins"""
    from run_config import parse_config

    config = parse_config({"agents": [{"gamma": 1.1}, {"gamma": 1.5}, {"gamma": 3.0}]})
    sim = config.sim_config(seed=7)
    assert sim.omega0 == pytest.approx((1 / 3, 1 / 3))
    assert sim.seed == 7

    config = parse_config(minimal(simulate={"T": 5.0, "seed": 3, "omega0": [0.25]}))
    sim = config.sim_config()
    assert sim.seed == 3 and sim.omega0 == (0.25,) and sim.n_steps == 500


def test_round_trip(tmp_path):
    """to_dict output parses back to the same configuration"""
    from run_config import load_config, preset_config

    config = preset_config("two_agent_calibrated")
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config.to_dict()))
    again = load_config(str(path))
    assert again.to_dict() == config.to_dict()
    assert config.to_dict()["agents"][0] == {"gamma": 1.1, "margin": 1.2}


# =============================================================================
# TEST 2: Validation Errors
# =============================================================================
# WHY: The CLI prints the offending field path, so each error must carry it.

@pytest.mark.parametrize("raw, field", [
    ({}, "agents"),
    (minimal(agents=[{"gamma": 2.0}]), "agents"),
    (minimal(agents=[{"gamma": 2.0}] * 4), "agents"),
    (minimal(agents=[{"gamma": -1.0}, {"gamma": 2.0}]), "agents[0].gamma"),
    (minimal(agents=[{"gamma": 1.0}, {"margin": 1.2}]), "agents[1].gamma"),
    (minimal(agents=[{"gamma": 1.0, "margin": 0}, {"gamma": 2.0}]), "agents[0].margin"),
    (minimal(agents=[{"gamma": 1.0, "leverage": 2}, {"gamma": 2.0}]), "agents[0].leverage"),
    (minimal(economy={"sigma_D": 0}), "economy.sigma_D"),
    (minimal(economy={"beta": 1}), "economy.beta"),
    (minimal(grid={"K": 3}), "grid.K"),
    (minimal(grid={"K": 10.5}), "grid.K"),
    (minimal(solver={"relaxation": 2.0}), "solver.relaxation"),
    (minimal(solver={"tol_outer": "small"}), "solver.tol_outer"),
    (minimal(simulate={"omega0": [0.3, 0.3]}), "simulate.omega0"),
    (minimal(simulate={"T": 0.001}), "simulate.T"),
    (minimal(simulate={"seed": -1}), "simulate.seed"),
    (minimal(simulate={"standardize": "yes"}), "simulate.standardize"),
    (minimal(output={"dir": ""}), "output.dir"),
    (minimal(benchmark="true"), "benchmark"),
    (minimal(extra=1), "extra"),
])
def test_config_errors_name_the_field(raw, field):
    """Each schema violation raises a config error naming its path"""
    from errors import ConfigError, ErrorKind
    from run_config import parse_config

    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert info.value.field == field
    assert info.value.kind is ErrorKind.CONFIG


def test_load_config_errors(tmp_path):
    """Missing files and malformed JSON are config errors"""
    from errors import ConfigError
    from run_config import load_config

    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
