import math
from datetime import date, datetime

import numpy as np
import pytest
from hypothesis import given, strategies as st

from saferoute import ingest
from saferoute.errors import DataError
from saferoute.graph import Station
from saferoute.ingest import (IncidentRecord, IncidentSeries, aggregate_series, bucket_starts,
                              haversine_km, parse_incidents, safety_coefficient, safety_coefficients,
                              split_train_test)

HEADER = "occurred_at,latitude,longitude\n"


def test_parse_one_row():
    log = parse_incidents(HEADER + "2018-03-01T12:00,40.80,-73.96\n")
    assert len(log) == 1 and log.malformed == 0
    r = log[0]
    assert (r.timestamp, r.lat, r.lon) == (datetime(2018, 3, 1, 12), 40.80, -73.96)


def test_parse_empty_body():
    assert len(parse_incidents(HEADER)) == 0
    assert len(parse_incidents("")) == 0


def test_parse_bad_latitude_is_counted():
    log = parse_incidents(HEADER + "2018-03-01T12:00,999,-73.96\n2018-03-01,40.8,-73.9\nnot-a-date,1,1\n")
    assert len(log) == 1 and log.malformed == 2 and log.malformed_rows == [2, 4]


def test_parse_missing_column_is_fatal():
    with pytest.raises(DataError, match="longitude"):
        parse_incidents("occurred_at,latitude\n2018-01-01,1\n")


def test_haversine_values():
    assert haversine_km((40.7, -73.9), (40.7, -73.9)) == 0.0
    assert haversine_km((0, 0), (0, 1)) == pytest.approx(111.195, abs=1e-3)
    assert haversine_km((90, 0), (-90, 0)) == pytest.approx(20015.1, abs=0.1)


@given(st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180))
def test_haversine_symmetric_and_bounded(a, b, c, d):
    x = haversine_km((a, b), (c, d))
    assert x == pytest.approx(haversine_km((c, d), (a, b)), abs=1e-9)
    assert 0.0 <= x <= math.pi * ingest.EARTH_RADIUS_KM + 1e-9


def test_bucket_starts_monthly_and_empty_range():
    starts = bucket_starts("2018-01-01", "2020-01-01")
    assert len(starts) == 24 and starts[0] == date(2018, 1, 1) and starts[-1] == date(2019, 12, 1)
    with pytest.raises(DataError):
        bucket_starts("2019-01-01", "2019-01-01")


def test_no_incidents_gives_zero_series():
    s = aggregate_series([], Station("A", "A", lat=40.7, lon=-73.9))
    assert s.counts == (0,) * 24


def test_radius_containment():
    st_ = Station("A", "A", lat=40.0, lon=-73.0)
    t0 = datetime(2018, 1, 15)
    near = [IncidentRecord(t0, 40.0 + d, -73.0) for d in (0.0, 0.01, 0.05)]
    far = [IncidentRecord(t0, 40.2, -73.0)]  # about 22 km north
    s = aggregate_series(near + far, st_, radius_km=8)
    assert s.counts[0] == 3 and sum(s.counts) == 3


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        aggregate_series([], Station("A", "A", lat=0, lon=0), radius_km=0)


def test_fixture_series_match_double_loop(fixture_graph, fixture_incidents, fixture_series):
    starts = bucket_starts(ingest.DEFAULT_START, ingest.DEFAULT_END)
    assert set(fixture_series) == set(fixture_graph.node_ids())
    for sid, series in fixture_series.items():
        stn = fixture_graph.stations[sid]
        counts = [0] * len(starts)
        for r in fixture_incidents:
            d = r.timestamp.date()
            if not ingest.DEFAULT_START <= d < ingest.DEFAULT_END:
                continue
            if haversine_km((stn.lat, stn.lon), (r.lat, r.lon)) <= 8.0:
                counts[(d.year - 2018) * 12 + d.month - 1] += 1
        assert list(series.counts) == counts, sid
    assert fixture_incidents.malformed == 2


def _series(n):
    starts = tuple(bucket_starts("2018-01-01", "2030-01-01"))[:n]
    return IncidentSeries("A", starts, tuple(range(n)))


@pytest.mark.parametrize("n,train", [(24, 19), (8, 3)])
def test_split_sizes(n, train):
    sp = split_train_test(_series(n))
    assert len(sp.train) == train and len(sp.test) == 5
    assert sp.train.counts + sp.test.counts == tuple(range(n))


def test_split_too_short():
    with pytest.raises(DataError, match="date range"):
        split_train_test(_series(7))


def test_safety_coefficients():
    assert safety_coefficients({"a": 3.0, "b": 3.0, "c": 3.0}) == {"a": 1.0, "b": 1.0, "c": 1.0}
    got = safety_coefficients({"a": 2.0, "b": 4.0})
    assert got["a"] == pytest.approx(2 / 3) and got["b"] == pytest.approx(4 / 3)
    clamped = safety_coefficients({"a": -3.0, "b": 0.1})
    assert clamped == {"a": 1.0, "b": 1.0}
    assert safety_coefficient(-3.0, 2.0) == pytest.approx(0.05)


def test_safety_non_finite_names_model_and_station():
    with pytest.raises(DataError, match="lstm.*'x'"):
        safety_coefficients({"x": math.nan}, model="lstm")


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.floats(-50, 50), min_size=1, max_size=8))
def test_safety_mean_is_one(forecasts):
    got = safety_coefficients(forecasts)
    assert np.mean(list(got.values())) == pytest.approx(1.0)
    assert min(got.values()) > 0


def test_series_round_trip(fixture_series):
    text = ingest.dump_series(fixture_series, {"radius_km": 8})
    again, meta = ingest.load_series(text)
    assert again == fixture_series and meta == {"radius_km": 8}
