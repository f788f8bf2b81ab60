from datetime import datetime

import numpy as np
import pytest

from cstdispatch.data import ClearSkyParams, synthetic_weather, two_tier_price_profile
from cstdispatch.formulation import CostModel
from cstdispatch.plant import PlantDesign, WeatherTrajectory


def day_profile(start_hour, n, dt=0.5, peak=0.95, rise=6.0, sunset=18.0):
    """Sinusoidal DNI (kW/m2) for n steps starting at start_hour."""
    h = (start_hour + dt * np.arange(n)) % 24
    return np.where((h > rise) & (h < sunset), peak * np.sin(np.pi * (h - rise) / (sunset - rise)), 0.0)


def make_traj(dni, start=datetime(2020, 1, 1, 9), dt=0.5, t_amb=25.0, wind=0.0):
    dni = np.asarray(dni, dtype=float)
    return WeatherTrajectory(start, dt, dni, np.full(dni.size, t_amb), np.full(dni.size, wind))


def cloudy(dni, rng, p):
    return dni * (rng.random(dni.size) >= p)


def evening_prices(n, start_hour=9.0, factor=1.0, dt=0.5):
    return two_tier_price_profile(n, dt, [(17, 21)], 120 * factor, 40 * factor, start_hour=start_hour).prices


@pytest.fixture
def plant():
    return PlantDesign()


@pytest.fixture
def costs():
    return CostModel()


@pytest.fixture
def month_windows():
    """Thirty-one two-day windows from a synthetic January with mixed cloud."""
    from cstdispatch.data import build_two_day_windows
    probs = np.tile([0.0, 0.3, 0.0, 0.6, 0.1], 7)[:32]
    db = synthetic_weather(5, 32, ClearSkyParams(), probs)
    return build_two_day_windows(db, 1)


def _runs(rng, k, p_on):
    """Random on/off pattern with geometric run lengths."""
    y = np.zeros(k, dtype=int)
    on = rng.random() < p_on
    for i in range(k):
        if rng.random() < 0.2:
            on = not on
        y[i] = on
    return y


def random_plan(rng, k, design):
    """A plan drawn uniformly-ish from the valid plan space."""
    from cstdispatch.formulation import DispatchPlan
    yr = _runs(rng, k, 0.5)
    prev_r = np.concatenate([[0], yr[:-1]])
    nxt_r = np.append(yr[1:], 0)
    yrsup = yr & (1 - prev_r)
    yrsd = yr & (1 - nxt_r)
    if k and yr[-1] and rng.random() < 0.5:
        yrsd[-1] = 0                                  # horizon may end mid-run
    yc = _runs(rng, k, 0.5)
    prev_c = np.concatenate([[0], yc[:-1]])
    ycsup = yc & (1 - prev_c)
    ycsd = prev_c & (1 - yc)
    on_r, on_c = yr - yrsup, yc - ycsup
    qr = on_r * rng.uniform(design.q_rl, design.q_rlim, k)
    qc = on_c * rng.uniform(design.q_l, design.q_u, k) + design.q_c * ycsup
    return DispatchPlan(yr, yrsup, yrsd, yc, ycsup, ycsd, qr, qc).validate(design)


def random_weather(rng, k, dt=0.5):
    start_hour = int(rng.integers(0, 24))
    dni = cloudy(day_profile(start_hour, k, dt, peak=rng.uniform(0.3, 1.05)), rng, rng.uniform(0, 0.7))
    t_amb = rng.uniform(-5, 40, k)
    wind = rng.uniform(0, 15, k)
    return WeatherTrajectory(datetime(2021, 1, 3, start_hour), dt, dni, t_amb, wind)


# --- acceptance summary ---------------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if call.when == "setup" and call.excinfo is not None:
        _CRITERIA[n] = (title, "FAIL")
    elif call.when == "call":
        _CRITERIA[n] = (title, "FAIL" if call.excinfo is not None else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, verdict = _CRITERIA[n]
        terminalreporter.write_line(f"[{verdict}] {n:>2}. {title}")
