import io
import math
from datetime import datetime, timedelta
from statistics import fmean

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from storagedp.errors import DataError
from storagedp.forecast import (
    PriceRecord,
    empirical_quantiles,
    find_gaps,
    fit_spread_quantiles,
    generate_scenarios,
    ingest_csv,
    quantile_levels,
    records_to_csv_text,
    scenarios_from_csv,
    scenarios_to_csv,
    synthetic_prices,
)


def csv_text(rows):
    return "timestamp,da,rt\n" + "".join(f"{t},{d},{r}\n" for t, d, r in rows)


def hand_quantile(sorted_values, q):
    """Order statistic interpolation at position q * (n - 1)."""
    pos = q * (len(sorted_values) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    return sorted_values[lo] + (pos - lo) * (sorted_values[hi] - sorted_values[lo])


def test_five_minute_rows_average_into_one_hour():
    rows = [(f"2024-01-01T00:{5 * k:02d}:00", 30, 10) for k in range(12)]
    recs = ingest_csv(io.StringIO(csv_text(rows)))
    assert recs == [PriceRecord(datetime(2024, 1, 1), 30.0, 10.0)]


def test_two_rows_average():
    rows = [("2024-01-01T05:00", 30, 0), ("2024-01-01T05:30", "", 20)]
    assert ingest_csv(io.StringIO(csv_text(rows)))[0].rt == 10.0


def test_hourly_mean_is_exact_arithmetic_mean():
    rng = np.random.default_rng(1)
    values = rng.normal(40, 30, size=(24, 12)).round(5)
    rows = [((datetime(2024, 3, 1) + timedelta(hours=h, minutes=5 * k)).isoformat(), 40,
             repr(float(values[h, k]))) for h in range(24) for k in range(12)]
    recs = ingest_csv(io.StringIO(csv_text(rows)))
    assert [r.rt for r in recs] == [fmean(row.tolist()) for row in values]


def test_gap_reported_and_excluded():
    rows = [("2024-01-01T00:00", 1, 1), ("2024-01-01T02:00", 1, 1)]
    recs = ingest_csv(io.StringIO(csv_text(rows)))
    assert len(recs) == 2
    assert find_gaps(recs) == [datetime(2024, 1, 1, 1)]


@pytest.mark.parametrize("text, fragment", [
    ("", "empty"),
    ("timestamp,da\n2024-01-01T00:00,1\n", "'rt'"),
    ("timestamp,da,rt\n", "no data"),
    ("timestamp,da,rt\n2024-01-01T00:00,1,1\n2024-01-01T01:00,x,1\n", ":3:"),
    ("timestamp,da,rt\nyesterday,1,1\n", ":2:"),
    ("timestamp,da,rt\n2024-01-01T00:00,1\n", ":2:"),
    ("timestamp,da,rt\n2024-01-01T00:00,1,nan\n", "non-finite"),
])
def test_malformed_input(text, fragment):
    with pytest.raises(DataError, match=fragment):
        ingest_csv(io.StringIO(text))


def test_round_trip_records():
    recs = synthetic_prices(48, seed=2)
    again = ingest_csv(io.StringIO(records_to_csv_text(recs)))
    assert [r.timestamp for r in again] == [r.timestamp for r in recs]
    np.testing.assert_allclose([r.rt for r in again], [r.rt for r in recs], rtol=1e-11)


def test_fit_groups():
    t = datetime(2024, 5, 1, 7)
    model = fit_spread_quantiles([PriceRecord(t, 10, 13)])
    assert model.groups[(5, 7)].tolist() == [3.0]
    model = fit_spread_quantiles([PriceRecord(t, 10, 15), PriceRecord(t.replace(day=2), 10, 9)])
    assert model.groups[(5, 7)].tolist() == [-1.0, 5.0]
    # a June 07:00 lookup misses its group and falls back to the 07:00 pool
    assert model.spreads_for(datetime(2024, 6, 3, 7)).tolist() == [-1.0, 5.0]
    # an hour never seen falls back to every spread
    assert model.spreads_for(datetime(2024, 6, 3, 8)).tolist() == [-1.0, 5.0]
    with pytest.raises(DataError):
        fit_spread_quantiles([])


def test_quantile_rule_by_hand():
    assert quantile_levels(2).tolist() == [0.25, 0.75]
    assert empirical_quantiles([0.0, 10.0], quantile_levels(2)).tolist() == [2.5, 7.5]
    group = [-4.0, 0.0, 1.0, 7.0, 20.0]
    for R in (1, 2, 3, 7, 10):
        got = empirical_quantiles(group, quantile_levels(R))
        want = [hand_quantile(group, (r + 0.5) / R) for r in range(R)]
        assert got.tolist() == pytest.approx(want, abs=1e-12)


def test_scenarios_by_hand():
    t0 = datetime(2024, 1, 1, 0)
    train = [PriceRecord(t0, 10, 10), PriceRecord(t0 + timedelta(days=1), 10, 20)]
    sc = generate_scenarios(fit_spread_quantiles(train), [t0], [50.0], 2)
    assert sc.prices.tolist() == [[52.5, 57.5]]
    sc1 = generate_scenarios(fit_spread_quantiles(train), [t0], [50.0], 1)
    assert sc1.prices.tolist() == [[55.0]]


def test_zero_spreads_give_da():
    t0 = datetime(2024, 1, 1)
    train = [PriceRecord(t0 + timedelta(hours=h), 30, 30) for h in range(48)]
    stamps = [t0 + timedelta(hours=h) for h in range(24)]
    da = np.arange(24.0)
    sc = generate_scenarios(fit_spread_quantiles(train), stamps, da, 5)
    np.testing.assert_array_equal(sc.prices, np.repeat(da[:, None], 5, axis=1))


def test_probability_rows_sum_to_one_exactly():
    recs = synthetic_prices(24 * 10, seed=0)
    model = fit_spread_quantiles(recs)
    for R in (1, 3, 7, 200, 1000):
        sc = generate_scenarios(model, [r.timestamp for r in recs[:5]],
                                [r.da for r in recs[:5]], R)
        assert all(math.fsum(row) == 1.0 for row in sc.probs)
        assert (sc.probs == sc.probs[0, 0]).sum() >= R - 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.integers(1, 60))
def test_scenarios_sorted_in_sample(spreads, R):
    t0 = datetime(2024, 2, 1, 3)
    train = [PriceRecord(t0 + timedelta(days=k), 0.0, s) for k, s in enumerate(spreads)]
    sc = generate_scenarios(fit_spread_quantiles(train), [t0], [12.0], R)
    assert np.all(np.diff(sc.prices[0]) >= 0)


def test_scenario_mean_converges():
    rng = np.random.default_rng(4)
    spreads = rng.normal(3, 10, 200)
    t0 = datetime(2024, 2, 1, 3)
    # every record in one (month, hour) group
    train = [PriceRecord(t0 + timedelta(days=k % 28), 0.0, float(s))
             for k, s in enumerate(spreads)]
    sc = generate_scenarios(fit_spread_quantiles(train), [t0], [40.0], 1000)
    want = 40.0 + spreads.mean()
    assert abs(sc.prices[0].mean() - want) <= 0.01 * abs(want)


def test_scenario_csv_round_trip():
    recs = synthetic_prices(24 * 5, seed=1)
    sc = generate_scenarios(fit_spread_quantiles(recs), [r.timestamp for r in recs[:6]],
                            [r.da for r in recs[:6]], 4)
    buf = io.StringIO()
    scenarios_to_csv(sc, buf)
    assert buf.getvalue().splitlines()[0] == "stage,sample,price,prob"
    back = scenarios_from_csv(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.prices, sc.prices)
    np.testing.assert_array_equal(back.probs, sc.probs)


def test_scenario_csv_errors():
    with pytest.raises(DataError):
        scenarios_from_csv(io.StringIO("stage,sample,price\n0,0,1\n"))
    with pytest.raises(DataError):
        scenarios_from_csv(io.StringIO("stage,sample,price,prob\n0,0,1,1\n0,1,2,0\n1,0,1,1\n"))


def test_generate_errors():
    model = fit_spread_quantiles(synthetic_prices(24, seed=0))
    with pytest.raises(DataError):
        generate_scenarios(model, [datetime(2024, 1, 1)], [1.0], 0)
    with pytest.raises(DataError):
        generate_scenarios(model, [datetime(2024, 1, 1)], [1.0, 2.0], 2)


def test_synthetic_prices_seeded():
    a, b = synthetic_prices(100, seed=9), synthetic_prices(100, seed=9)
    assert a == b
    assert a != synthetic_prices(100, seed=10)
