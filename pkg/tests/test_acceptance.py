"""Acceptance criteria, one test each; a pass/fail line per criterion is printed at the end of the run."""

import json
import time

import numpy as np
import pytest

import casecheck
from cstdispatch.bench import PK, EvaluationReport, dwa_price, evaluate_plan, percentile_summary, welch_t_test
from cstdispatch.cli import main
from cstdispatch.data import ClearSkyParams, build_two_day_windows, synthetic_weather
from cstdispatch.formulation import (MODE_BINARIES, CostModel, build_smilp, extract_control_trajectories,
                                     extract_dispatch_plan)
from cstdispatch.heuristics import PlanningConfig, heuristic_1, heuristic_2, heuristic_3
from cstdispatch.milp import SolverConfig, solve, write_mps
from cstdispatch.plant import LossModel, OpticalEfficiencyTable, PlantDesign
from cstdispatch.sampling import EnergyEcdf, build_ecdf, k_medoids, medoid_cost, stratified_sample
from cstdispatch.simulator import simulate

from conftest import evening_prices, random_plan, random_weather
from test_milp import GOLDEN, SUITE, close, read_mps
from test_sampling import brute_force_cost
from test_simulator import check_trace, hard_violations

GAP = SolverConfig().mip_gap_target


def synthetic_month(seed, probs):
    db = synthetic_weather(seed, 32, ClearSkyParams(), np.resize(probs, 32))
    return build_two_day_windows(db, 1)


def scenario_profits(model, ix, sol):
    """Per-scenario profit read off the objective: scenario s carries weight 1/N_s."""
    owner = {model.var_index(n): s for (_, _, s), n in ix.control.items()}
    out = np.zeros(ix.n_scenarios)
    for i, c in model.objective.items():
        out[owner[i]] += c * sol.x[i]          # plan variables carry no cost
    return out * ix.n_scenarios


# --- 1 ------------------------------------------------------------------------------------

@pytest.mark.criterion(1, "oracle equivalence: SMILP controls and profits reproduced by the simulator")
def test_oracle_equivalence():
    wins = synthetic_month(21, [0.0, 0.35, 0.7, 0.15])
    ecdf = build_ecdf(wins, PlantDesign(), LossModel(), OpticalEfficiencyTable())
    space = stratified_sample(ecdf, 3, seed=4)
    cfg = PlanningConfig(horizon=(18, 24))                    # 09:00 to 21:00
    scen = [(w, cfg.crop(t)) for w, t in space.scenarios]
    prices = evening_prices(24, start_hour=9)
    t0 = time.perf_counter()
    model, ix = build_smilp(PlantDesign(), CostModel(), scen, prices)
    build_s = time.perf_counter() - t0
    sol = solve(model, SolverConfig(time_limit_s=600, mip_gap_target=0.005))
    assert sol.ok and sol.runtime_s < 600 and build_s < 5
    plan = extract_dispatch_plan(sol, ix, PlantDesign())
    assert plan.y_r.sum() > 0 and plan.y_c.sum() > 0
    milp_profit = scenario_profits(model, ix, sol)
    for s, (_, tr) in enumerate(scen):
        ctl = extract_control_trajectories(sol, ix, s)
        res = simulate(PlantDesign(), CostModel(), plan, tr, prices)
        for sym in MODE_BINARIES + ("q_ract", "q_cact", "soc"):
            assert np.allclose(res.trace[sym], ctl[sym], rtol=0, atol=1e-6), (s, sym)
        assert res.breakdown.profit == pytest.approx(milp_profit[s], rel=1e-4)
    assert milp_profit.mean() == pytest.approx(sol.objective_value, rel=1e-9)


# --- 2 ------------------------------------------------------------------------------------

@pytest.mark.criterion(2, "case-function equivalence on 1,000 random single-step inputs")
def test_case_function_equivalence():
    ok, n, bad = casecheck.run(1000, seed=2024)
    assert n == 1000 and ok == n, bad


# --- 3 ------------------------------------------------------------------------------------

@pytest.mark.criterion(3, "hard-constraint safety over 500+ random (plan, weather) pairs")
def test_hard_constraint_safety():
    rng = np.random.default_rng(31)
    d = PlantDesign()
    bad = []
    for i in range(600):
        k = int(rng.integers(1, 97))
        plan, traj = random_plan(rng, k, d), random_weather(rng, k)
        r = simulate(d, CostModel(), plan, traj, rng.uniform(0, 200, k))
        v = hard_violations(r, plan, d)
        if v:
            bad.append((i, v))
        check_trace(r, plan, d, traj.dt_hours)
    assert bad == []


# --- 4 and 5 ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def benchmark():
    wins = synthetic_month(77, [0.0, 0.5, 0.1, 0.8, 0.3, 0.0, 0.6])
    sampling, testing = wins[:12], wins[20:30]
    cfg = PlanningConfig(horizon=(24, 16))                    # 12:00 to 20:00
    prices = evening_prices(16, start_hour=12)
    d, c = PlantDesign(), CostModel()
    ecdf = build_ecdf([(i, w) for i, w in enumerate(sampling)], d, LossModel(), OpticalEfficiencyTable())
    space = stratified_sample(ecdf, 3, seed=5)
    model, ix = build_smilp(d, c, [(w, cfg.crop(t)) for w, t in space.scenarios], prices)
    sol = solve(model)
    assert sol.ok
    plans = {"SMILP": extract_dispatch_plan(sol, ix, d)}
    plans["H1"], h1_table = heuristic_1(d, c, space, prices, cfg)
    plans["H2"], _ = heuristic_2(d, c, [(i, w) for i, w in enumerate(sampling)], prices, cfg)
    plans["H3"] = heuristic_3(d, c, sampling, prices, cfg)
    return dict(d=d, c=c, cfg=cfg, prices=prices, space=space, testing=testing, plans=plans, sol=sol,
                h1_table=h1_table)


@pytest.mark.criterion(4, "PK dominance on a 10-trajectory testing set")
def test_pk_dominance(benchmark):
    b = benchmark
    pairs = list(enumerate(b["testing"]))
    assert len(pairs) == 10
    recs = {"PK": evaluate_plan(b["d"], b["c"], PK, pairs, b["prices"], b["cfg"])}
    for name, plan in b["plans"].items():
        recs[name] = evaluate_plan(b["d"], b["c"], plan, pairs, b["prices"], b["cfg"])
    rep = EvaluationReport.from_records(recs, "testing")
    pk = np.array([r.component("profit") for r in recs["PK"]])
    for name in b["plans"]:
        other = np.array([r.component("profit") for r in recs[name]])
        assert rep.summaries["PK"].means["profit"] >= rep.summaries[name].means["profit"]
        assert np.all(pk >= other - 2 * GAP * np.abs(pk)), name
    assert rep.max_identity_residual() <= 1e-9


@pytest.mark.criterion(5, "in-sample SMILP dominance on its own scenario space")
def test_in_sample_smilp_dominance(benchmark):
    b = benchmark
    scen = b["space"].scenarios
    saa = {}
    for name, plan in b["plans"].items():
        saa[name] = np.mean([simulate(b["d"], b["c"], plan, b["cfg"].crop(t), b["prices"]).breakdown.profit
                             for _, t in scen])
    best_candidate = float(b["h1_table"].means.max())
    assert saa["SMILP"] == pytest.approx(b["sol"].objective_value, rel=1e-4)
    slack = 2 * GAP * abs(saa["SMILP"])
    assert saa["SMILP"] >= best_candidate - slack
    for name in ("H1", "H2", "H3"):
        assert saa["SMILP"] >= saa[name] - slack, name


# --- 6 ------------------------------------------------------------------------------------

@pytest.mark.criterion(6, "stratified sampling: one draw per stratum, equal counts, bit-identical reruns")
def test_sampling_correctness():
    wins = synthetic_month(3, [0.0, 0.2, 0.5, 0.7, 0.9])[:30]
    ecdf = build_ecdf(wins, PlantDesign(), LossModel(), OpticalEfficiencyTable())
    assert len(ecdf) == 30
    a = stratified_sample(ecdf, 5, seed=99)
    b = stratified_sample(ecdf, 5, seed=99)
    assert [hi - lo for lo, hi in a.strata] == [6, 6, 6, 6, 6]
    ranks = [ecdf.window_ids.index(w) for w in a.window_ids]
    for r, (lo, hi) in zip(ranks, a.strata):
        assert lo <= r < hi
    assert a.to_json() == b.to_json()
    assert all(x[1] is y[1] for x, y in zip(a.scenarios, b.scenarios))
    assert isinstance(ecdf, EnergyEcdf)


# --- 7 ------------------------------------------------------------------------------------

@pytest.mark.criterion(7, "k-medoids within 1.25x of brute force; fixture medoids {1, 11}")
def test_k_medoids_oracle():
    pts = [0, 1, 2, 10, 11, 12]
    assert sorted(pts[i] for i in k_medoids(pts, 2)) == [1, 11]
    rng = np.random.default_rng(50)
    for _ in range(50):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, n + 1))
        x = rng.uniform(-5, 5, size=(n, int(rng.integers(1, 4))))
        assert medoid_cost(x, k_medoids(x, k)) <= 1.25 * brute_force_cost(x, k) + 1e-9


# --- 8 ------------------------------------------------------------------------------------

@pytest.mark.criterion(8, "statistics: Welch identity, percentile interpolation, DWA fixture")
def test_statistics():
    t, _, p = welch_t_test([3.0, 1.0, 4.0, 1.0, 5.0], [3.0, 1.0, 4.0, 1.0, 5.0])
    assert t == 0 and p == 1
    s = percentile_summary(range(1, 101))
    assert abs(s[2.5] - 3.475) <= 1e-9 and abs(s[50.0] - 50.5) <= 1e-9 and abs(s[97.5] - 97.525) <= 1e-9
    assert dwa_price([(100 * 60.0, 100.0), (100 * 120.0, 100.0)]) == 90.0


# --- 9 ------------------------------------------------------------------------------------

@pytest.mark.criterion(9, "MPS golden bytes and independent round trip")
def test_mps_determinism_and_round_trip():
    for name, make in SUITE.items():
        text = write_mps(make())
        assert text == write_mps(make()) == (GOLDEN / f"{name}.mps").read_text()
        model = make()
        parsed = read_mps(text)
        assert (len(parsed["cols"]), len(parsed["rows"])) == model.shape
        entries = {k: v for k, v in parsed["coef"].items() if k[0] != parsed["obj_row"]}
        assert len(entries) == model.nnz
        for r in model.rows:
            for i, c in r.coeffs:
                close(entries[(r.name, model.variables[i].name)], c)


# --- 10 -----------------------------------------------------------------------------------

@pytest.mark.criterion(10, "end-to-end CLI pipeline on bundled data within 20 minutes")
def test_end_to_end(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"horizon": {"start_step": 18, "steps": 24}, "sampling": {"n_s": 3, "seed": 11},
                               "output_dir": str(tmp_path / "runs")}))
    common = ["--config", str(cfg), "--jobs", "4"]
    t0 = time.perf_counter()

    def step(name, *args):
        d = tmp_path / name
        assert main([*args, *common, "--run-dir", str(d)]) == 0, name
        return d

    s = step("sample", "sample")
    man = str(s / "scenarios.json")
    o = step("smilp", "optimize", "--manifest", man)
    h3 = step("h3", "optimize", "--mode", "h3")
    sim = step("simulate", "simulate", "--plan", str(o / "plan.json"), "--category", "scenario", "--manifest", man)
    b = step("bench", "bench", f"SMILP={o / 'plan.json'}", f"H3={h3 / 'plan.json'}", "pk", "--category", "testing")
    elapsed = time.perf_counter() - t0
    assert elapsed < 20 * 60

    objective = json.loads((o / "solve_log.json").read_text())["objective"]
    assert json.loads((sim / "profit.json").read_text())["mean_profit"] == pytest.approx(objective, rel=1e-4)
    report = json.loads((b / "report.json").read_text())
    assert set(report["plans"]) == {"SMILP", "H3", "PK"}
    for plan in report["plans"].values():
        m = plan["means"]
        ident = m["revenue"] - m["purchase_cost"] - m["receiver_cost"] - m["pb_cost"]
        assert abs(m["profit"] - ident) <= 1e-9
    assert len({p["n"] for p in report["plans"].values()}) == 1
    text = (b / "report.txt").read_text()
    for label in ("Revenue", "Profit", "DWA price", "2.5%", "97.5%"):
        assert label in text
    assert report["plans"]["PK"]["means"]["profit"] >= report["plans"]["SMILP"]["means"]["profit"]
