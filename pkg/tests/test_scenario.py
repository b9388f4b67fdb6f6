import copy
import json
from pathlib import Path

import pytest

from source.errors import ConfigError
from source.geometry import DomainKind
from source.scenario import Experiment, Scenario, scenario_hash

SCENARIOS = sorted((Path(__file__).parent.parent / "config" / "scenarios").glob("*.json"))

BASE = {
    "name": "base",
    "experiment": "Classify",
    "domain": {"kind": "Disk", "r_inner": 0.0, "r_outer": 1.0},
    "grid": {"n_r": 16, "n_theta": 24},
    "nonlinearity": {"kind": "LaneEmden", "params": {"p": 3}},
    "k_list": [1, 3],
    "seeds": ["cos-mode"],
}


def _with(**changes):
    data = copy.deepcopy(BASE)
    for key, value in changes.items():
        if value is None:
            data.pop(key, None)
        else:
            data[key] = value
    return data


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_packaged_scenarios_are_valid(path):
    scenario = Scenario.load(path)
    assert scenario.name == path.stem
    assert len(scenario.hash) == 64


def test_base_scenario():
    s = Scenario.from_dict(BASE)
    assert s.experiment is Experiment.CLASSIFY
    assert s.domain.kind is DomainKind.DISK
    assert (s.n_r, s.n_theta) == (16, 24)
    assert s.make_grid(1).shape == (32, 48)
    assert s.mode == "positive"
    assert s.solver.tol == pytest.approx(1e-9)


def test_hash_ignores_key_order():
    reordered = dict(reversed(list(BASE.items())))
    assert Scenario.from_dict(reordered).hash == Scenario.from_dict(BASE).hash
    assert scenario_hash(_with(name="other")) != scenario_hash(BASE)


@pytest.mark.parametrize("data, path", [
    (_with(bogus=1), "bogus"),
    (_with(name=None), "name"),
    (_with(experiment="Fit"), "experiment"),
    (_with(domain={"kind": "Disk", "r_outer": 1.0, "extra": 2}), "domain.extra"),
    (_with(domain={"kind": "Square", "r_outer": 1.0}), "domain.kind"),
    (_with(domain={"kind": "Annulus", "r_inner": 2.0, "r_outer": 1.0}), "domain"),
    (_with(grid={"n_r": 16, "n_theta": 20}), "grid.n_theta"),
    (_with(grid={"n_r": 1, "n_theta": 24}), "grid.n_r"),
    (_with(grid={"n_r": 16.5, "n_theta": 24}), "grid.n_r"),
    (_with(k_list=[]), "k_list"),
    (_with(k_list=[1, 0]), "k_list[1]"),
    (_with(k_list=[2, 2]), "k_list"),
    (_with(nonlinearity=None), "nonlinearity"),
    (_with(nonlinearity={"kind": "LaneEmden", "params": {"p": "3"}}), "nonlinearity.params.p"),
    (_with(nonlinearity={"kind": "LaneEmden", "params": {"q": 3}}), "nonlinearity"),
    (_with(seeds=["blob"]), "seeds[0]"),
    (_with(seeds=["cos-mode", "peaks(4)"]), "seeds[1]"),
    (_with(seeds=[]), "seeds"),
    (_with(mode="both"), "mode"),
    (_with(solver={"tol": -1.0}), "solver"),
    (_with(solver={"maxiter": 3}), "solver.maxiter"),
    (_with(continuation=[1.0]), "continuation"),
    (_with(truncation={"radii": [2.0]}), "truncation"),
    (_with(refinement={"levels": 1}), "refinement.levels"),
    (_with(grid={"n_r": 16, "n_theta": 8}, k_list=[4]), "grid.n_theta"),
    (_with(k_list=[1], seeds=["peaks(1)"], mode="nodal"), "seeds[0]"),
    (_with(k_list=[2], seeds=["cos-mode", "peaks(2)"], mode="nodal"), "seeds[1]"),
    (_with(k_list=[3], seeds=["peaks(3)"], mode="nodal"), "seeds[0]"),
    (_with(experiment="XiDiagnostic", k_list=[2]), "mode"),
])
def test_malformed_scenarios(data, path):
    with pytest.raises(ConfigError) as excinfo:
        Scenario.from_dict(data)
    assert excinfo.value.path == path


@pytest.mark.parametrize("changes, path", [
    ({"nonlinearity": {"kind": "Gelfand", "params": {"lambda": 1.0}}}, "continuation"),
    ({"nonlinearity": {"kind": "Gelfand", "params": {"lambda": 1.0}},
      "continuation": [0.5], "mode": "nodal"}, "mode"),
    ({"nonlinearity": {"kind": "SinhPoisson", "params": {"epsilon": 0.1}},
      "continuation": [0.1], "experiment": "Multiplicity"}, "nonlinearity.kind"),
    ({"nonlinearity": {"kind": "Gelfand", "params": {"lambda": 1.0}},
      "continuation": [0.5, -1.0]}, "continuation"),
])
def test_exponential_preconditions(changes, path):
    with pytest.raises(ConfigError) as excinfo:
        Scenario.from_dict(_with(**changes))
    assert excinfo.value.path == path


def test_refinement_needs_no_nonlinearity():
    s = Scenario.from_dict(_with(experiment="Refinement", nonlinearity=None, refinement={"levels": 4}))
    assert s.nonlinearity is None
    assert s.refinement_levels == 4


def test_truncation_for_exterior():
    s = Scenario.from_dict(_with(
        domain={"kind": "TruncatedExterior", "r_inner": 1.0, "r_outer": 4.0},
        truncation={"radii": [2.0, 8.0], "nodes_per_unit": 8},
    ))
    assert s.truncation_radii == [2.0, 8.0]
    with pytest.raises(ConfigError) as excinfo:
        Scenario.from_dict(_with(
            domain={"kind": "TruncatedExterior", "r_inner": 1.0, "r_outer": 4.0},
            truncation={"radii": [0.5]},
        ))
    assert excinfo.value.path == "truncation.radii"


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        Scenario.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        Scenario.load(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(BASE), encoding="utf-8")
    assert Scenario.load(good).name == "base"


@pytest.mark.parametrize("seed, k", [("peaks(2)", 1), ("peaks(3)", 1), ("peaks(4)", 2), ("cos-mode", 3), ("radial", 2)])
def test_sign_changing_nodal_seeds_accepted(seed, k):
    s = Scenario.from_dict(_with(k_list=[k], seeds=[seed], mode="nodal"))
    assert s.mode == "nodal"
