"""Stochastic plan against the perfect-knowledge bound on held-out weather.

Three sampling-year scenarios are drawn by stratified sampling, one plan is
optimised over all of them, and both that plan and per-trajectory perfect
foresight are scored on eight testing windows.
"""
from cstdispatch.bench import PK, EvaluationReport, evaluate_plan
from cstdispatch.data import build_two_day_windows, demo_history, two_tier_price_profile
from cstdispatch.formulation import CostModel, build_smilp, extract_dispatch_plan
from cstdispatch.heuristics import PlanningConfig
from cstdispatch.milp import solve
from cstdispatch.plant import LossModel, OpticalEfficiencyTable, PlantDesign
from cstdispatch.sampling import build_ecdf, stratified_sample

plant, costs = PlantDesign(), CostModel()
cfg = PlanningConfig(horizon=(20, 16))        # 10:00 to 18:00
windows = build_two_day_windows(demo_history(), 1)
sampling = [(i, w) for i, w in enumerate(windows) if w.start_timestamp.year < 2014]
testing = [(i, w) for i, w in enumerate(windows) if w.start_timestamp.year == 2014][:8]
prices = two_tier_price_profile(16, 0.5, [(17, 21)], 120, 40, start_hour=10).prices

space = stratified_sample(build_ecdf(sampling, plant, LossModel(), OpticalEfficiencyTable()), 3, seed=1)
print("scenarios:", space.window_ids)

model, index = build_smilp(plant, costs, [(w, cfg.crop(t)) for w, t in space.scenarios], prices)
plan = extract_dispatch_plan(solve(model), index, plant)

report = EvaluationReport.from_records({
    "SMILP": evaluate_plan(plant, costs, plan, testing, prices, cfg),
    "PK": evaluate_plan(plant, costs, PK, testing, prices, cfg),
}, "testing")
print(report.to_text())
