"""Config parsing, report serialization, and the command-line pipeline."""

import json
import os

import numpy as np
import pytest

from relinfo.cli import EXIT_ERROR, EXIT_NO_NULLS, EXIT_OK, main
from relinfo.config import MCMC_DEFAULTS, RI_DEFAULTS, RunConfig, default_out_dir
from relinfo.exceptions import ConfigError
from relinfo.measures import RIResult
from relinfo.report import Report, ScenarioResult, write_ratio_csv


def write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


REG_CFG = {
    "model": {
        "kind": "regression",
        "slope": 0.6,
        "sigma": 0.4,
        "k": 9,
        "prior": {"mean": 4.0, "n_max": 10},
    },
    "mcmc": {"n_iterations": 4000, "burn_in": 1000, "thinning": 5},
    "ri": {"n_null_min": 30, "n_null_max": 60, "bootstrap_replicates": 50},
    "scenario": {"name": "design", "designs": ["replicate_k", "duplicate_2k"]},
    "seed": 11,
}

SIR_CFG = {
    "model": {
        "kind": "sir",
        "beta0": 1.0,
        "beta1": -0.5,
        "gamma0": 1.0,
        "household_size": 4,
        "n_households": 8,
    },
    "mcmc": {"n_iterations": 3000, "burn_in": 800, "thinning": 10},
    "ri": {
        "n_null_min": 40,
        "n_null_max": 80,
        "bootstrap_replicates": 50,
        "is_tol": 0.3,
        "scenario_is_samples": 128,
    },
    "scenario": {"name": "sir_compare", "n_new": 2},
    "seed": 5,
}


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "extra": 1})
    with pytest.raises(ConfigError, match="mcmc"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "mcmc": {"iterations": 5}})
    with pytest.raises(ConfigError, match="ri"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "ri": {"nulls": 5}})
    with pytest.raises(ConfigError, match="model"):
        RunConfig.from_obj({"model": {"kind": "sir", "slope": 0.6}})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError, match="kind"):
        RunConfig.from_obj({"model": {"kind": "linear"}})
    with pytest.raises(ConfigError, match="model"):
        RunConfig.from_obj({})
    with pytest.raises(ConfigError, match="scenario.name"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "scenario": {"name": "bogus"}})
    with pytest.raises(ConfigError, match="seed"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "seed": -1})
    with pytest.raises(ConfigError, match="data"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "data": True})


def test_config_defaults_and_sections():
    cfg = RunConfig.from_obj({"model": {"kind": "regression"}, "mcmc": {"thinning": 2}})
    assert cfg.kind == "regression"
    assert cfg.mcmc["n_iterations"] == MCMC_DEFAULTS["n_iterations"]
    assert cfg.mcmc["thinning"] == 2
    assert cfg.ri == RI_DEFAULTS
    assert cfg.seed == 0
    assert cfg.data is None
    assert cfg.chain_config().seed == 0
    assert cfg.chain_config(seed=7).seed == 7
    assert cfg.ri_kwargs()["seed"] == 0
    assert cfg.ri_kwargs(seed=7)["seed"] == 7


def test_config_data_semantics(tmp_path):
    data = tmp_path / "households.json"
    data.write_text("[]")
    obj = {"model": {"kind": "sir"}, "data": "households.json"}
    cfg = RunConfig.from_json(write_config(tmp_path, obj))
    assert cfg.data == str(data)

    with pytest.raises(ConfigError, match="does not exist"):
        RunConfig.from_obj({"model": {"kind": "sir"}, "data": "nope.json"}, base_dir=str(tmp_path))

    assert RunConfig.from_obj({"model": {"kind": "sir"}, "data": None}).data is False
    assert RunConfig.from_obj({"model": {"kind": "sir"}}).data is None


def test_config_echo_is_verbatim(tmp_path):
    cfg = RunConfig.from_json(write_config(tmp_path, REG_CFG))
    assert cfg.raw == REG_CFG


def test_config_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.from_json(str(bad))
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_json(str(tmp_path / "absent.json"))


def test_default_out_dir_env(monkeypatch):
    monkeypatch.delenv("RELINFO_OUT", raising=False)
    assert default_out_dir() == "."
    monkeypatch.setenv("RELINFO_OUT", "/somewhere")
    assert default_out_dir() == "/somewhere"


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def make_result(bi3val=0.4, n=3):
    rng = np.random.default_rng(0)
    return RIResult(
        bi3=bi3val,
        bi4=bi3val + 0.05,
        v_lod=1.25,
        v_ratio_per_null=rng.uniform(0.5, 2.0, size=n),
        mc_se_bi3=0.01,
        mc_se_bi4=0.012,
        n_theta_draws=100,
        n_null_draws=n,
        n_mis_draws=1,
    )


def test_report_round_trip_lossless(tmp_path):
    report = Report(
        config_echo=REG_CFG,
        seed=11,
        model_kind="regression",
        scenarios=[
            ScenarioResult("a", make_result(0.4), {"null_draw_ids": [0, 2, 5]}),
            ScenarioResult("b", make_result(1 / 3), {"note": float("nan")}),
        ],
        preferred="b",
        diagnostics={"ess": {"chain0": {"n": 41.5}}, "odds": [0.25, 1e-300]},
        wall_clock_seconds=1.5,
    )
    path = tmp_path / "report.json"
    report.save(path)
    loaded = Report.load(path)
    a, b = report.to_obj(), loaded.to_obj()
    # NaN != NaN breaks dict equality; compare via serialized form
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert loaded.scenarios[1].result.bi3 == 1 / 3  # float round trip is exact
    loaded.save(tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_choose_preferred():
    scen = [
        ScenarioResult("x", make_result(0.7)),
        ScenarioResult("y", make_result(0.2)),
    ]
    assert Report.choose_preferred(scen) == "y"
    assert Report.choose_preferred([]) is None


def test_write_ratio_csv(tmp_path):
    path = tmp_path / "ratios.csv"
    write_ratio_csv(path, [3, 1, 4], [0.5, 1.25, 2.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "null_draw_id,v_ratio"
    assert lines[1] == "3,0.5"
    assert len(lines) == 4
    with pytest.raises(ValueError):
        write_ratio_csv(path, [1], [0.5, 0.6])


# ---------------------------------------------------------------------------
# CLI pipeline
# ---------------------------------------------------------------------------


def run_cli(*args):
    return main([str(a) for a in args])


def test_simulate_deterministic(tmp_path):
    cfg = write_config(tmp_path, REG_CFG)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run_cli("simulate", "--config", cfg, "--out", a) == EXIT_OK
    assert run_cli("simulate", "--config", cfg, "--out", b) == EXIT_OK
    assert run_cli("simulate", "--config", cfg, "--out", c, "--seed", 99) == EXIT_OK
    assert (a / "regression.csv").read_bytes() == (b / "regression.csv").read_bytes()
    assert (a / "regression_truth.json").read_bytes() == (b / "regression_truth.json").read_bytes()
    assert (a / "regression.csv").read_bytes() != (c / "regression.csv").read_bytes()
    x_col = [line.split(",")[0] for line in (a / "regression.csv").read_text().splitlines()[1:]]
    assert x_col == [repr(float(v)) for v in np.linspace(0.0, 1.0, 10)]


def test_simulate_sir_files(tmp_path):
    cfg = write_config(tmp_path, SIR_CFG)
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", cfg, "--out", out) == EXIT_OK
    observed = json.loads((out / "households.json").read_text())
    truth = json.loads((out / "households_truth.json").read_text())
    assert len(observed) == 8 and len(truth["households"]) == 8
    assert truth["params"]["beta1"] == -0.5
    for house in observed:
        times = [m["infection_time"] for m in house["members"]]
        assert times.count(0.0) == 1
        assert all(t in (None, 0.0) for t in times)  # latents are dropped
    for house in truth["households"]:
        for m in house["members"]:
            if m["removal_time"] is not None:
                assert m["infection_time"] is not None  # truth keeps them


def test_fit_requires_data(tmp_path, capsys):
    cfg = write_config(tmp_path, REG_CFG)
    assert run_cli("fit", "--config", cfg, "--out", tmp_path) == EXIT_ERROR
    assert "run simulate first" in capsys.readouterr().err


def test_fit_malformed_csv_names_line(tmp_path, capsys):
    cfg = write_config(tmp_path, REG_CFG)
    (tmp_path / "regression.csv").write_text("x,y\n0.0,0.1\n0.5,oops\n")
    assert run_cli("fit", "--config", cfg, "--out", tmp_path) == EXIT_ERROR
    assert "line 3" in capsys.readouterr().err


def test_end_to_end_rerun_identical(tmp_path):
    cfg = write_config(tmp_path, REG_CFG)
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", cfg, "--out", out) == EXIT_OK
    assert run_cli("fit", "--config", cfg, "--out", out, "--ri") == EXIT_OK
    first = {
        name: (out / name).read_bytes()
        for name in (
            "draws_chain0.csv",
            "report.svg",
            "ratios_replicate_k.csv",
            "ratios_duplicate_2k.csv",
        )
    }
    report1 = json.loads((out / "report.json").read_text())

    assert run_cli("fit", "--config", cfg, "--out", out, "--ri") == EXIT_OK
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob, name
    report2 = json.loads((out / "report.json").read_text())
    report1.pop("wall_clock_seconds")
    report2.pop("wall_clock_seconds")
    assert report1 == report2

    assert report1["config_echo"] == REG_CFG
    assert report1["model_kind"] == "regression"
    labels = {s["label"]: s for s in report1["scenarios"]}
    assert set(labels) == {"replicate_k", "duplicate_2k"}
    best = min(labels.values(), key=lambda s: s["result"]["bi3"])
    assert report1["preferred"] == best["label"]
    assert "monotone_odds" in report1["diagnostics"]


def test_standalone_ri_matches_fit_ri(tmp_path):
    cfg = write_config(tmp_path, REG_CFG)
    combined, staged = tmp_path / "combined", tmp_path / "staged"
    run_cli("simulate", "--config", cfg, "--out", combined)
    assert run_cli("fit", "--config", cfg, "--out", combined, "--ri") == EXIT_OK
    run_cli("simulate", "--config", cfg, "--out", staged)
    assert run_cli("fit", "--config", cfg, "--out", staged) == EXIT_OK
    assert not (staged / "report.json").exists()
    assert run_cli("ri", "--config", cfg, "--out", staged) == EXIT_OK
    first = json.loads((combined / "report.json").read_text())
    second = json.loads((staged / "report.json").read_text())
    first.pop("wall_clock_seconds")
    second.pop("wall_clock_seconds")
    assert first == second


def test_report_rerenders_from_json(tmp_path):
    cfg = write_config(tmp_path, REG_CFG)
    out = tmp_path / "out"
    run_cli("simulate", "--config", cfg, "--out", out)
    run_cli("fit", "--config", cfg, "--out", out, "--ri")
    svg = (out / "report.svg").read_bytes()
    (out / "report.svg").unlink()
    (out / "ratios_replicate_k.csv").unlink()
    assert run_cli("report", "--out", out) == EXIT_OK
    assert (out / "report.svg").read_bytes() == svg
    assert (out / "ratios_replicate_k.csv").exists()


def test_report_without_run_fails(tmp_path, capsys):
    assert run_cli("report", "--out", tmp_path) == EXIT_ERROR
    assert "run ri first" in capsys.readouterr().err


def test_empty_design_gives_bi3_one(tmp_path):
    obj = dict(REG_CFG, scenario={"name": "design", "new_points": []})
    cfg = write_config(tmp_path, obj)
    out = tmp_path / "out"
    run_cli("simulate", "--config", cfg, "--out", out)
    assert run_cli("fit", "--config", cfg, "--out", out, "--ri") == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    (scenario,) = report["scenarios"]
    assert scenario["label"] == "custom_0"
    assert scenario["result"]["bi3"] == 1.0
    assert scenario["result"]["bi4"] == 1.0


def test_prior_only_fit_design(tmp_path):
    obj = {
        "model": {"kind": "regression", "prior": {"mean": 4.0, "n_max": 10}},
        "mcmc": {"n_iterations": 3000, "burn_in": 500, "thinning": 5},
        "ri": {"n_null_min": 20, "n_null_max": 40, "bootstrap_replicates": 50},
        "scenario": {"name": "design", "designs": ["replicate_k"]},
        "seed": 3,
        "data": None,
    }
    cfg = write_config(tmp_path, obj)
    out = tmp_path / "out"
    assert run_cli("fit", "--config", cfg, "--out", out, "--ri") == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["scenarios"][0]["result"]["bi3"] == 0.0


def test_fit_ri_insufficient_nulls_exit_code(tmp_path, capsys):
    obj = {
        "model": {"kind": "sir", "household_size": 3, "n_households": 4},
        "mcmc": {"n_iterations": 500, "burn_in": 100, "thinning": 10},
        "ri": {"n_null_min": 200, "is_tol": 0.5},
        "seed": 2,
    }
    cfg = write_config(tmp_path, obj)
    out = tmp_path / "out"
    run_cli("simulate", "--config", cfg, "--out", out)
    assert run_cli("fit", "--config", cfg, "--out", out) == EXIT_OK
    assert run_cli("fit", "--config", cfg, "--out", out, "--ri") == EXIT_NO_NULLS
    assert "null draws" in capsys.readouterr().err


def test_scenario_model_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path, REG_CFG)
    out = tmp_path / "out"
    run_cli("simulate", "--config", cfg, "--out", out)
    run_cli("fit", "--config", cfg, "--out", out)
    code = run_cli("ri", "--config", cfg, "--out", out, "--scenario", "infection_times")
    assert code == EXIT_ERROR
    assert "does not apply" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::relinfo.exceptions.PluginNoiseWarning")
def test_sir_compare_end_to_end(tmp_path):
    cfg = write_config(tmp_path, SIR_CFG)
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", cfg, "--out", out) == EXIT_OK
    assert run_cli("fit", "--config", cfg, "--out", out) == EXIT_OK
    assert run_cli("ri", "--config", cfg, "--out", out) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    labels = {s["label"]: s for s in report["scenarios"]}
    assert set(labels) == {"infection_times", "new_households"}
    best = min(labels.values(), key=lambda s: s["result"]["bi3"])
    assert report["preferred"] == best["label"]
    assert 0.0 < report["diagnostics"]["posterior_null_probability"] < 1.0
    for label, scenario in labels.items():
        csv_lines = (out / f"ratios_{label}.csv").read_text().splitlines()
        ids = [int(line.split(",")[0]) for line in csv_lines[1:]]
        assert ids == scenario["extras"]["null_draw_ids"]
        assert len(ids) == len(scenario["result"]["v_ratio_per_null"])


def test_multichain_fit_and_ri(tmp_path):
    obj = dict(REG_CFG, mcmc={"n_iterations": 2000, "burn_in": 500, "thinning": 5})
    cfg = write_config(tmp_path, obj)
    out = tmp_path / "out"
    run_cli("simulate", "--config", cfg, "--out", out)
    assert run_cli("fit", "--config", cfg, "--out", out, "--chains", 2) == EXIT_OK
    assert (out / "draws_chain0.csv").exists() and (out / "draws_chain1.csv").exists()
    assert run_cli("ri", "--config", cfg, "--out", out) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["diagnostics"]["n_chains"] == 2
    assert report["diagnostics"]["n_draws"] == 2 * (2000 - 500) // 5
