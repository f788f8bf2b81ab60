import logging
from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cstdispatch.data import (ClearSkyParams, HistoryDatabase, HistoryPartition, PriceProfile, build_two_day_windows,
                              bundled_history_path, demo_history, load_weather_csv, partition_history,
                              synthetic_weather, two_tier_price_profile, write_weather_csv)
from cstdispatch.errors import ConfigError, ParseError, SchemaError


def write_rows(path, rows, header="timestamp,dni_wm2,tamb_c,wind_ms"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def day_rows(day, dt_min=30, dni=500.0):
    n = 24 * 60 // dt_min
    t0 = datetime.combine(day, datetime.min.time())
    return [f"{(t0 + timedelta(minutes=dt_min * i)).isoformat()},{dni},25,3" for i in range(n)]


def same_traj(a, b):
    # the CSV stores W/m2, so DNI survives a round trip only to rounding
    return (a.start_timestamp == b.start_timestamp and a.dt_hours == b.dt_hours
            and np.allclose(a.dni, b.dni, rtol=1e-12, atol=0) and np.array_equal(a.t_amb, b.t_amb)
            and np.array_equal(a.wind, b.wind))


def test_load_single_day(tmp_path):
    db = load_weather_csv(write_rows(tmp_path / "w.csv", day_rows(date(2020, 1, 5))))
    assert len(db) == 1 and db.dt_hours == 0.5
    tr = db.days[date(2020, 1, 5)]
    assert len(tr) == 48
    assert tr.dni[0] == pytest.approx(0.5)        # W/m2 -> kW/m2


def test_corrupt_cell_names_line(tmp_path):
    rows = day_rows(date(2020, 1, 5))
    rows[6] = rows[6].replace(",500.0,", ",abc,")
    with pytest.raises(ParseError) as exc:
        load_weather_csv(write_rows(tmp_path / "w.csv", rows))
    assert exc.value.line == 8
    assert ":8:" in str(exc.value)


def test_duplicate_timestamp(tmp_path):
    rows = day_rows(date(2020, 1, 5))
    rows.append(rows[3])
    with pytest.raises(ParseError):
        load_weather_csv(write_rows(tmp_path / "w.csv", rows))


def test_irregular_step(tmp_path):
    rows = day_rows(date(2020, 1, 5))
    rows[10] = rows[10].replace("05:00:00", "05:10:00")
    with pytest.raises(SchemaError):
        load_weather_csv(write_rows(tmp_path / "w.csv", rows))


def test_incomplete_day_dropped(tmp_path, caplog):
    rows = day_rows(date(2020, 1, 5)) + day_rows(date(2020, 1, 6))[:-3]
    with caplog.at_level(logging.WARNING):
        db = load_weather_csv(write_rows(tmp_path / "w.csv", rows))
    assert list(db.days) == [date(2020, 1, 5)]
    assert db.dropped_days == [date(2020, 1, 6)]
    assert "dropping" in caplog.text


def test_renamed_columns(tmp_path):
    rows = day_rows(date(2020, 1, 5))
    p = write_rows(tmp_path / "w.csv", rows, header="time,ghi,temp,ws")
    db = load_weather_csv(p, {"columns": {"timestamp": "time", "dni_wm2": "ghi", "tamb_c": "temp",
                                          "wind_ms": "ws"}, "location": {"name": "x"}})
    assert len(db) == 1 and db.location == {"name": "x"}


def test_two_years_day_count():
    db = synthetic_weather(0, 731, ClearSkyParams(start=date(2015, 1, 1)))
    assert len(db) == 731 and db.dt_hours == 0.5
    assert db.years() == [2015, 2016]          # 2016 is a leap year


def test_round_trip(tmp_path):
    db = synthetic_weather(3, 4, cloud_dropout_prob=0.3)
    write_weather_csv(db, tmp_path / "rt.csv")
    back = load_weather_csv(tmp_path / "rt.csv")
    assert list(back.days) == list(db.days)
    for d in db.days:
        assert same_traj(back.days[d], db.days[d])


def test_windows_january():
    full = synthetic_weather(0, 31, ClearSkyParams(start=date(2020, 1, 1)))
    assert len(build_two_day_windows(full, 1)) == 30
    with_feb = synthetic_weather(0, 32, ClearSkyParams(start=date(2020, 1, 1)))
    wins = build_two_day_windows(with_feb, 1)
    assert len(wins) == 31
    assert all(len(w) == 96 for w in wins)
    one = synthetic_weather(0, 1)
    assert build_two_day_windows(one, 1) == []


def test_windows_never_fabricate_samples():
    db = synthetic_weather(8, 10, cloud_dropout_prob=0.4)
    for w in build_two_day_windows(db, 1):
        d0 = w.start_timestamp.date()
        expect = np.concatenate([db.days[d0].dni, db.days[d0 + timedelta(days=1)].dni])
        assert np.array_equal(w.dni, expect)


def test_partition_by_year():
    db = synthetic_weather(0, 3 * 366, ClearSkyParams(start=date(2016, 1, 1)))
    wins = build_two_day_windows(db, 1)
    part = partition_history(wins, {"first_testing_year": 2018})
    samp, test = part.select(wins)
    assert all(w.start_timestamp.year < 2018 for w in samp)
    assert all(w.start_timestamp.year >= 2018 for w in test)
    assert len(samp) + len(test) == len(wins)
    with pytest.raises(ConfigError):
        partition_history(wins, {"first_testing_year": 2016})


def test_partition_explicit_overlap():
    wins = list(range(10))
    with pytest.raises(ConfigError):
        partition_history(wins, {"sampling": [0, 1, 2], "testing": [2, 3]})
    part = partition_history(wins, {"sampling": [0, 1], "testing": [5]})
    assert part.sampling_indices == {0, 1}


@settings(max_examples=100, deadline=None)
@given(st.sets(st.integers(0, 40)), st.sets(st.integers(0, 40)))
def test_partition_disjointness_property(a, b):
    if a & b:
        with pytest.raises(ConfigError):
            HistoryPartition(frozenset(a), frozenset(b))
    else:
        p = HistoryPartition(frozenset(a), frozenset(b))
        assert not (p.sampling_indices & p.testing_indices)


def test_price_profile_two_days():
    p = two_tier_price_profile(96, 0.5, [(17, 21)], 120, 40)
    assert (p.prices == 120).sum() == 16
    assert p.prices[34] == 120 and p.prices[33] == 40 and p.prices[42] == 40
    flat = two_tier_price_profile(10, 0.5, [(17, 21)], 50, 50)
    assert np.all(flat.prices == 50)
    assert np.all(two_tier_price_profile(10, 0.5, [], 90, 40).prices == 40)


def test_price_profile_overlap_merge(caplog):
    with caplog.at_level(logging.WARNING):
        p = two_tier_price_profile(48, 0.5, [(16, 19), (18, 21)], 100, 10)
    assert (p.prices == 100).sum() == 10
    assert "overlap" in caplog.text
    with pytest.raises(ConfigError):
        two_tier_price_profile(48, 0.5, [(17, 21)], 10, 100)
    with pytest.raises(ConfigError):
        PriceProfile([1.0, -1.0])


def test_price_profile_offset_start():
    p = two_tier_price_profile(24, 0.5, [(17, 21)], 120, 40, start_hour=9)
    assert np.flatnonzero(p.prices == 120).tolist() == list(range(16, 24))


def test_synthetic_weather_determinism_and_extremes():
    a = synthetic_weather(42, 3, cloud_dropout_prob=0.3)
    b = synthetic_weather(42, 3, cloud_dropout_prob=0.3)
    assert all(a.days[d] == b.days[d] for d in a.days)
    clear1, clear2 = synthetic_weather(1, 2), synthetic_weather(2, 2)
    assert all(clear1.days[d] == clear2.days[d] for d in clear1.days)
    dark = synthetic_weather(1, 2, cloud_dropout_prob=1.0)
    assert all(np.all(t.dni == 0) for t in dark.days.values())
    with pytest.raises(ConfigError):
        synthetic_weather(1, 2, cloud_dropout_prob=1.5)


def test_bundled_history_matches_generator():
    db = load_weather_csv(bundled_history_path())
    ref = demo_history()
    assert list(db.days) == list(ref.days)
    assert all(same_traj(db.days[d], ref.days[d]) for d in ref.days)
    wins = build_two_day_windows(db, 1)
    assert len(wins) == 4 * 31


def test_database_step_mismatch():
    a = synthetic_weather(0, 1)
    b = synthetic_weather(0, 1, ClearSkyParams(start=date(2010, 1, 2), dt_hours=1.0))
    with pytest.raises(SchemaError):
        HistoryDatabase({**a.days, **b.days}, 0.5)
