"""Weather history, sampling/testing partitions, price profiles and synthetic weather."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SchemaError
from .plant import WeatherTrajectory

log = logging.getLogger(__name__)

CSV_COLUMNS = ("timestamp", "dni_wm2", "tamb_c", "wind_ms")


@dataclass
class HistoryDatabase:
    days: dict                      # date -> one-day WeatherTrajectory
    dt_hours: float
    location: dict = field(default_factory=dict)
    dropped_days: list = field(default_factory=list)

    def __post_init__(self):
        self.days = dict(sorted(self.days.items()))
        for day, tr in self.days.items():
            if abs(tr.dt_hours - self.dt_hours) > 1e-12:
                raise SchemaError(f"day {day} has step {tr.dt_hours} h, database uses {self.dt_hours} h")

    @property
    def trajectories(self):
        return self.days

    @property
    def steps_per_day(self):
        return int(round(24 / self.dt_hours))

    def __len__(self):
        return len(self.days)

    def years(self):
        return sorted({d.year for d in self.days})


@dataclass(frozen=True)
class HistoryPartition:
    sampling_indices: frozenset
    testing_indices: frozenset

    def __post_init__(self):
        overlap = self.sampling_indices & self.testing_indices
        if overlap:
            raise ConfigError(f"sampling and testing sets overlap at windows {sorted(overlap)}")

    def select(self, windows):
        return ([windows[i] for i in sorted(self.sampling_indices)],
                [windows[i] for i in sorted(self.testing_indices)])


@dataclass(frozen=True)
class PriceProfile:
    prices: np.ndarray

    def __post_init__(self):
        p = np.array(self.prices, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ConfigError("price profile must be a non-empty 1-D series")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ConfigError("prices must be finite and non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return self.prices.size


# --- CSV ------------------------------------------------------------------------

def _parse_float(text, path, line, col):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, line, f"column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"column {col!r}: non-finite value {text!r}")
    return v


def load_weather_csv(path, schema_config=None) -> HistoryDatabase:
    """Read a weather CSV into per-day trajectories.

    ``schema_config`` may rename columns (``columns: {timestamp: ..., ...}``),
    fix the step (``dt_hours``) and attach ``location`` metadata.  Without a
    fixed step the smallest spacing between consecutive rows is used.
    """
    cfg = dict(schema_config or {})
    names = dict(zip(CSV_COLUMNS, CSV_COLUMNS))
    names.update(cfg.get("columns", {}))
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        try:
            pos = {k: header.index(v) for k, v in names.items()}
        except ValueError:
            raise SchemaError(f"{path}: header {header} lacks one of {list(names.values())}") from None
        seen = set()
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(rec)}")
            try:
                ts = datetime.fromisoformat(rec[pos["timestamp"]].strip())
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp {rec[pos['timestamp']]!r}") from None
            ts = ts.replace(tzinfo=None)
            if ts in seen:
                raise ParseError(path, line_no, f"duplicate timestamp {ts.isoformat()}")
            seen.add(ts)
            dni = _parse_float(rec[pos["dni_wm2"]], path, line_no, names["dni_wm2"])
            tamb = _parse_float(rec[pos["tamb_c"]], path, line_no, names["tamb_c"])
            wind = _parse_float(rec[pos["wind_ms"]], path, line_no, names["wind_ms"])
            if dni < 0 or wind < 0:
                raise ParseError(path, line_no, "dni and wind must be non-negative")
            rows.append((ts, dni / 1000.0, tamb, wind))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])

    dt = cfg.get("dt_hours")
    if dt is None:
        if len(rows) < 2:
            raise SchemaError(f"{path}: cannot infer the step from a single row; set dt_hours")
        gaps = np.diff([r[0].timestamp() for r in rows])
        dt = float(gaps.min()) / 3600.0
    dt = float(dt)
    step_min = dt * 60
    if dt <= 0 or abs(step_min - round(step_min)) > 1e-9 or (24 * 60) % round(step_min):
        raise SchemaError(f"{path}: step of {dt} h does not divide a day into whole minutes")
    step_min = int(round(step_min))
    per_day = 24 * 60 // step_min

    by_day: dict = {}
    for ts, dni, tamb, wind in rows:
        minute = ts.hour * 60 + ts.minute
        if ts.second or ts.microsecond or minute % step_min:
            raise SchemaError(f"{path}: timestamp {ts.isoformat()} is off the {step_min}-minute grid")
        by_day.setdefault(ts.date(), {})[minute // step_min] = (dni, tamb, wind)

    days, dropped = {}, []
    for day, slots in sorted(by_day.items()):
        if len(slots) != per_day:
            dropped.append(day)
            log.warning("dropping %s: %d of %d steps present", day, len(slots), per_day)
            continue
        arr = np.array([slots[i] for i in range(per_day)])
        days[day] = WeatherTrajectory(datetime.combine(day, datetime.min.time()), dt, arr[:, 0], arr[:, 1], arr[:, 2])
    return HistoryDatabase(days, dt, dict(cfg.get("location", {})), dropped)


def write_weather_csv(db: HistoryDatabase, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for tr in db.days.values():
            for ts, dni, tamb, wind in zip(tr.timestamps(), tr.dni, tr.t_amb, tr.wind):
                w.writerow((ts.isoformat(), repr(float(dni * 1000.0)), repr(float(tamb)), repr(float(wind))))


# --- windows and partitions ----------------------------------------------------------

def build_two_day_windows(db: HistoryDatabase, month: int):
    """Two-day trajectories for every present day-pair starting in ``month``."""
    if not 1 <= month <= 12:
        raise ConfigError(f"month must be 1..12, got {month}")
    if not db.days:
        raise ConfigError("history database is empty")
    out = []
    for day, tr in db.days.items():
        if day.month != month:
            continue
        nxt = db.days.get(day + timedelta(days=1))
        if nxt is not None:
            out.append(tr.concat(nxt))
    if not out:
        log.warning("no two-day windows start in month %d", month)
    return out


def partition_history(windows, split_rule) -> HistoryPartition:
    """Split window indices into sampling and testing sets.

    ``split_rule`` is either ``{"first_testing_year": Y}`` (windows starting
    before year Y go to sampling, the rest to testing) or
    ``{"sampling": [...], "testing": [...]}`` with explicit indices.
    """
    n = len(windows)
    if "first_testing_year" in split_rule:
        y = int(split_rule["first_testing_year"])
        samp = {i for i, w in enumerate(windows) if w.start_timestamp.year < y}
        test = set(range(n)) - samp
        if not samp:
            raise ConfigError(f"split at {y} leaves the sampling set empty")
        return HistoryPartition(frozenset(samp), frozenset(test))
    if "sampling" in split_rule:
        samp = [int(i) for i in split_rule["sampling"]]
        test = [int(i) for i in split_rule.get("testing", [])]
        for i in samp + test:
            if not 0 <= i < n:
                raise ConfigError(f"window index {i} out of range 0..{n - 1}")
        if len(set(samp)) != len(samp) or len(set(test)) != len(test):
            raise ConfigError("explicit partition lists contain repeated indices")
        if not samp:
            raise ConfigError("explicit partition has an empty sampling set")
        return HistoryPartition(frozenset(samp), frozenset(test))
    raise ConfigError("split_rule needs 'first_testing_year' or explicit 'sampling'/'testing' lists")


# --- prices --------------------------------------------------------------------------

def _merge_windows(windows):
    ws = sorted((float(a), float(b)) for a, b in windows)
    for a, b in ws:
        if not (0 <= a < b <= 24):
            raise ConfigError(f"peak window ({a}, {b}) must satisfy 0 <= start < end <= 24")
    merged = []
    for a, b in ws:
        if merged and a <= merged[-1][1]:
            if a < merged[-1][1]:
                log.warning("peak windows overlap near %s h; merging", a)
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def two_tier_price_profile(horizon_k, dt, peak_windows, peak_price, offpeak_price, start_hour=0.0) -> PriceProfile:
    if not peak_price >= offpeak_price >= 0:
        raise ConfigError("need peak_price >= offpeak_price >= 0")
    if horizon_k <= 0 or dt <= 0:
        raise ConfigError("horizon and step must be positive")
    wins = _merge_windows(peak_windows)
    hours = (start_hour + dt * np.arange(horizon_k)) % 24.0
    peak = np.zeros(horizon_k, dtype=bool)
    for a, b in wins:
        peak |= (hours >= a - 1e-9) & (hours < b - 1e-9)
    return PriceProfile(np.where(peak, float(peak_price), float(offpeak_price)))


# --- synthetic weather ----------------------------------------------------------------

@dataclass(frozen=True)
class ClearSkyParams:
    start: date = date(2010, 1, 1)
    dt_hours: float = 0.5
    sunrise: float = 6.0
    sunset: float = 19.5
    peak_dni_wm2: float = 950.0
    t_amb: float = 25.0
    wind: float = 3.0


def synthetic_weather(seed, days, clear_sky_params: ClearSkyParams | None = None, cloud_dropout_prob=0.0):
    """Sinusoidal clear-sky irradiance with Bernoulli per-step cloud dropout.

    ``cloud_dropout_prob`` is one probability or a sequence with one entry
    per day, which lets a fixture mix clear and cloudy days.
    """
    p = clear_sky_params or ClearSkyParams()
    probs = np.broadcast_to(np.asarray(cloud_dropout_prob, dtype=float), (days,))
    if np.any(probs < 0) or np.any(probs > 1):
        raise ConfigError("cloud_dropout_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    per_day = int(round(24 / p.dt_hours))
    hours = p.dt_hours * np.arange(per_day)
    span = p.sunset - p.sunrise
    env = np.where((hours > p.sunrise) & (hours < p.sunset),
                   np.sin(np.pi * np.clip(hours - p.sunrise, 0, span) / span), 0.0)
    env = np.maximum(env, 0.0) * p.peak_dni_wm2 / 1000.0
    out = {}
    for i in range(days):
        day = p.start + timedelta(days=i)
        keep = rng.random(per_day) >= probs[i]
        dni = np.round(env * keep, 6)
        out[day] = WeatherTrajectory(datetime.combine(day, datetime.min.time()), p.dt_hours, dni,
                                     np.full(per_day, p.t_amb), np.full(per_day, p.wind))
    return HistoryDatabase(out, p.dt_hours, {"name": "synthetic", "seed": seed})


def demo_history(seed=2024, years=(2011, 2012, 2013, 2014), month=1):
    """Synthetic multi-year history for one month (plus the following day, so every
    day of the month starts a two-day window).  Days mix clear and cloudy skies."""
    rng = np.random.default_rng(seed)
    levels = np.array([0.0, 0.0, 0.0, 0.05, 0.2, 0.4, 0.7, 0.95])
    days = {}
    for i, y in enumerate(years):
        first = date(y, month, 1)
        n = ((date(y + month // 12, month % 12 + 1, 1) - first).days) + 1
        probs = rng.choice(levels, size=n)
        params = ClearSkyParams(start=first, peak_dni_wm2=float(rng.uniform(880, 1000)))
        days.update(synthetic_weather(int(rng.integers(2**31)), n, params, probs).days)
    return HistoryDatabase(days, 0.5, {"name": "synthetic demo", "seed": seed})


def bundled_history_path():
    return Path(__file__).parent / "resources" / "demo_history.csv"
