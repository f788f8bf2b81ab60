"""Plan one afternoon with perfect foresight, then replay the plan step by step.

The deterministic model is solved on a single known trajectory.  Its plan
is fed to the simulator, which should land on the same profit.
"""
from cstdispatch.data import build_two_day_windows, demo_history, two_tier_price_profile
from cstdispatch.formulation import CostModel, build_deterministic, extract_dispatch_plan
from cstdispatch.milp import solve
from cstdispatch.plant import PlantDesign
from cstdispatch.simulator import simulate

plant, costs = PlantDesign(), CostModel()
window = build_two_day_windows(demo_history(), 1)[3]
traj = window.window(20, 20)                  # 10:00 to 20:00 on the first day
prices = two_tier_price_profile(len(traj), traj.dt_hours, [(17, 21)], 120, 40, start_hour=10).prices

model, index = build_deterministic(plant, costs, traj, prices)
cols, rows = model.shape
print(f"model: {cols} columns, {rows} rows, {len(model.binary_indices())} binaries")

sol = solve(model)
print(f"solver: {sol.status}, objective {sol.objective_value:,.2f} in {sol.runtime_s:.1f} s")

plan = extract_dispatch_plan(sol, index, plant)
res = simulate(plant, costs, plan, traj, prices)
print(f"simulated profit {res.breakdown.profit:,.2f}")

print("\nhour  price  receiver  power block  storage")
for k, ts in enumerate(traj.timestamps()):
    t = res.trace
    print(f"{ts:%H:%M}  {prices[k]:5.0f}  {t['q_ract'][k]:8.1f}  {t['q_cact'][k]:11.1f}  {t['soc'][k]:7.0f}")
