"""How much heat could the field deliver on each two-day window?

Loads the bundled synthetic January history, builds the two-day windows,
and ranks them by potential receiver energy.  The ranking is what the
scenario sampler stratifies over.
"""
from cstdispatch.data import build_two_day_windows, bundled_history_path, load_weather_csv
from cstdispatch.plant import LossModel, OpticalEfficiencyTable, PlantDesign
from cstdispatch.sampling import build_ecdf

db = load_weather_csv(bundled_history_path())
print(f"{len(db)} days loaded, years {db.years()}, step {db.dt_hours} h")

windows = build_two_day_windows(db, 1)
print(f"{len(windows)} two-day windows start in January")

ecdf = build_ecdf(windows, PlantDesign(), LossModel(), OpticalEfficiencyTable())
e = ecdf.energies
print(f"potential energy per window: min {e.min():,.0f} MWh, median {e[len(e) // 2]:,.0f}, max {e.max():,.0f}")

print("\ndarkest five windows:")
for wid, energy in ecdf.entries[:5]:
    print(f"  window {wid:3d} from {windows[wid].start_timestamp:%Y-%m-%d}: {energy:8,.0f} MWh")
