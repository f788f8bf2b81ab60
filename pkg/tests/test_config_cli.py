import json
from datetime import date

import pytest

from cstdispatch.cli import main
from cstdispatch.config import RunConfig
from cstdispatch.data import ClearSkyParams, synthetic_weather, write_weather_csv
from cstdispatch.errors import ConfigError

SMALL = {"horizon": {"start_step": 24, "steps": 12}, "sampling": {"n_s": 2, "seed": 3}}


def write_config(tmp_path, extra=None, name="cfg.json"):
    cfg = {**SMALL, "output_dir": str(tmp_path / "runs"), **(extra or {})}
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(tmp_path, name, *args):
    d = tmp_path / name
    code = main([*args, "--run-dir", str(d), "--jobs", "1"])
    return code, d


def month_csv(tmp_path, dropout=0.3, days=31):
    db = synthetic_weather(11, days, ClearSkyParams(start=date(2020, 1, 1)), dropout)
    p = tmp_path / f"month_{dropout}.csv"
    write_weather_csv(db, p)
    return p


# --- config ---------------------------------------------------------------------------

def test_defaults_are_tagged():
    cfg = RunConfig.from_dict({"sampling": {"n_s": 4, "seed": 1}})
    res = cfg.resolved()
    assert res["prices"]["source"] == "default" and res["epsilon"]["source"] == "default"
    assert res["sampling"] == {"n_s": 4, "seed": 1}
    assert "source" not in res["plant"]
    over = cfg.with_overrides(**{"prices.peak_price": 150.0})
    assert over.resolved()["prices"]["peak_price"] == 150.0
    assert over.raw["prices"]["offpeak_price"] == 40.0


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"plant": {"q_rl": 900.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"plant": {"warp": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"horizon": {"start_step": -1, "steps": 4}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"solver": {"mip_gap_target": 2}})


def test_config_prices_follow_horizon():
    cfg = RunConfig.from_dict({"horizon": {"start_step": 24, "steps": 24}})
    p = cfg.prices(0.5, 96).prices
    assert len(p) == 24 and (p == 120).sum() == 8 and p[10] == 120 and p[9] == 40


def test_invalid_json_and_missing_files(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "a", "sample", "--config", str(bad))[0] == 2
    assert run(tmp_path, "b", "sample", "--config", str(tmp_path / "nope.json"))[0] == 2
    cfg = write_config(tmp_path)
    assert run(tmp_path, "c", "simulate", "--config", str(cfg), "--plan", "missing.json", "--window", "0")[0] == 2
    assert "plan file not found" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["sample", "--config", str(write_config(tmp_path)), "--run-dir", str(blocker / "sub")])
    assert code == 3


def test_usage_errors(tmp_path):
    cfg = str(write_config(tmp_path))
    assert run(tmp_path, "a", "bench", "pk", "--config", cfg, "--category", "holdout")[0] == 2
    assert run(tmp_path, "b", "optimize", "--config", cfg, "--mode", "smilp")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["optimize", "--mode", "nonsense"])
    assert exc.value.code == 2


# --- commands ---------------------------------------------------------------------------

def test_sample_reproducible_and_manifest(tmp_path):
    cfg = str(write_config(tmp_path))
    assert run(tmp_path, "s1", "sample", "--config", cfg)[0] == 0
    assert run(tmp_path, "s2", "sample", "--config", cfg)[0] == 0
    a = (tmp_path / "s1" / "scenarios.json").read_text()
    assert a == (tmp_path / "s2" / "scenarios.json").read_text()
    assert len(json.loads(a)["window_ids"]) == 2
    man = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    assert man["status"] == "ok" and man["command"] == "sample"
    assert man["seeds"] == {"global": 0, "sampling": 3}
    assert set(man["outputs"]) == {"scenarios.json", "ecdf.csv"}
    assert man["config"]["sampling"] == {"n_s": 2, "seed": 3}
    assert man["config"]["prices"]["source"] == "default"
    assert run(tmp_path, "s3", "sample", "--config", cfg, "--n-s", "1")[0] == 0
    assert len(json.loads((tmp_path / "s3" / "scenarios.json").read_text())["window_ids"]) == 1


def test_sample_fourteen_strata_on_thirty_windows(tmp_path):
    data = {"path": str(month_csv(tmp_path)), "month": 1}
    cfg = str(write_config(tmp_path, {"data": data, "partition": {"first_testing_year": 2021}}))
    assert run(tmp_path, "s", "sample", "--config", cfg, "--n-s", "14")[0] == 0
    m = json.loads((tmp_path / "s" / "scenarios.json").read_text())
    sizes = [b - a for a, b in m["strata"]]
    assert sizes == [3, 3] + [2] * 12 and sum(sizes) == 30
    assert len(set(m["window_ids"])) == 14


def test_timestamped_run_directory(tmp_path):
    cfg = str(write_config(tmp_path))
    assert main(["sample", "--config", cfg, "--jobs", "1"]) == 0
    (d,) = list((tmp_path / "runs").iterdir())
    assert d.name.endswith("_sample") and (d / "manifest.json").exists()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = str(write_config(tmp))
    assert run(tmp, "sample", "sample", "--config", cfg)[0] == 0
    man = str(tmp / "sample" / "scenarios.json")
    one = json.loads((tmp / "sample" / "scenarios.json").read_text())
    for k in ("window_ids", "start_timestamps"):
        one[k] = one[k][:1]
    (tmp / "one.json").write_text(json.dumps(one))
    assert run(tmp, "smilp", "optimize", "--config", cfg, "--manifest", man)[0] == 0
    assert run(tmp, "smilp_again", "optimize", "--config", cfg, "--manifest", man)[0] == 0
    assert run(tmp, "det", "optimize", "--config", cfg, "--manifest", str(tmp / "one.json"),
               "--mode", "deterministic")[0] == 0
    assert run(tmp, "smilp_one", "optimize", "--config", cfg, "--manifest", str(tmp / "one.json"))[0] == 0
    return tmp, cfg, man


def test_optimize_outputs_and_determinism(pipeline):
    tmp, *_ = pipeline
    d = tmp / "smilp"
    for f in ("model.mps", "index_map.json", "solve_log.json", "plan.json", "manifest.json"):
        assert (d / f).exists()
    assert (d / "model.mps").read_bytes() == (tmp / "smilp_again" / "model.mps").read_bytes()
    assert (tmp / "det" / "model.mps").read_bytes() == (tmp / "smilp_one" / "model.mps").read_bytes()
    log = json.loads((d / "solve_log.json").read_text())
    assert log["status"] in ("optimal", "feasible_gap") and log["shape"][0] > 0


def test_simulate_matches_solve_log(pipeline, tmp_path):
    tmp, cfg, _ = pipeline
    one = json.loads((tmp / "one.json").read_text())
    code, d = run(tmp_path, "sim", "simulate", "--config", cfg, "--plan", str(tmp / "det" / "plan.json"),
                  "--window", str(one["window_ids"][0]))
    assert code == 0
    prof = json.loads((d / "profit.json").read_text())
    obj = json.loads((tmp / "det" / "solve_log.json").read_text())["objective"]
    assert prof["mean_profit"] == pytest.approx(obj, rel=1e-4)
    assert (d / f"trace_{one['window_ids'][0]}.csv").exists()


def test_simulate_all_off(pipeline, tmp_path):
    _, cfg, man = pipeline
    off = {k: [0] * 12 for k in ("y_r", "y_rsup", "y_rsd", "y_c", "y_csup", "y_csd", "q_r_hat", "q_c_hat")}
    (tmp_path / "off.json").write_text(json.dumps({"plan": off}))
    code, d = run(tmp_path, "sim", "simulate", "--config", cfg, "--plan", str(tmp_path / "off.json"),
                  "--category", "scenario", "--manifest", man)
    assert code == 0
    prof = json.loads((d / "profit.json").read_text())
    assert prof["mean_profit"] == 0 and len(prof["records"]) == 2


def test_bench_scenario_and_pk(pipeline, tmp_path):
    tmp, cfg, man = pipeline
    plan = str(tmp / "smilp" / "plan.json")
    code, d = run(tmp_path, "b1", "bench", f"SMILP={plan}", "--config", cfg, "--category", "scenario",
                  "--manifest", str(tmp / "one.json"))
    assert code == 0
    rep = json.loads((d / "report.json").read_text())
    assert rep["plans"]["SMILP"]["n"] == 1
    code, d = run(tmp_path, "b2", "bench", f"SMILP={plan}", "pk", "--config", cfg, "--category", "scenario",
                  "--manifest", man)
    assert code == 0
    rep = json.loads((d / "report.json").read_text())
    assert rep["plans"]["PK"]["means"]["profit"] >= rep["plans"]["SMILP"]["means"]["profit"]
    assert json.loads((d / "manifest.json").read_text())["identity_residual"] <= 1e-9
    for f in ("report.txt", "records.csv", "profit.svg"):
        assert (d / f).exists()


def test_zero_dni_manifest_gives_all_off(tmp_path):
    data = {"path": str(month_csv(tmp_path, dropout=1.0, days=4)), "month": 1}
    cfg = str(write_config(tmp_path, {"data": data, "partition": {"first_testing_year": 2021},
                                      "sampling": {"n_s": 1, "seed": 0}}))
    assert run(tmp_path, "s", "sample", "--config", cfg)[0] == 0
    code, d = run(tmp_path, "o", "optimize", "--config", cfg, "--manifest", str(tmp_path / "s" / "scenarios.json"))
    assert code == 0
    plan = json.loads((d / "plan.json").read_text())["plan"]
    assert all(v == 0 for vals in plan.values() for v in vals)


def test_solver_limit_exit_code(pipeline, tmp_path):
    _, cfg, man = pipeline
    code, d = run(tmp_path, "o", "optimize", "--config", cfg, "--manifest", man, "--time-limit", "0.000001")
    assert code == 1
    assert "failed" in json.loads((d / "manifest.json").read_text())["status"]


def test_heuristic_modes_and_sensitivity(pipeline, tmp_path):
    _, cfg, man = pipeline
    code, d = run(tmp_path, "h1", "optimize", "--config", cfg, "--manifest", man, "--mode", "h1")
    assert code == 0 and (d / "candidates.csv").exists()
    code, d = run(tmp_path, "h2", "optimize", "--config", cfg, "--mode", "h2", "--subset-size", "2")
    assert code == 0 and len((d / "candidates.csv").read_text().splitlines()) == 3
    code, d = run(tmp_path, "h3", "optimize", "--config", cfg, "--mode", "h3")
    assert code == 0 and (d / "plan.json").exists()
    code, d = run(tmp_path, "sens", "sensitivity", "--config", cfg, "--sizes", "1", "2")
    assert code == 0
    assert len((d / "sensitivity.csv").read_text().splitlines()) == 3
