import random
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annforecast.data import (
    DataError,
    OhlcBar,
    PriceSeries,
    Scaler,
    TradingCalendar,
    chronological_split,
    fit_scaler,
    make_windows,
    parse_csv,
    serialize_csv,
)

HEADER = "Date,Open,High,Low,Close,Adj Close,Volume\n"


def flat_series(closes, start=date(2016, 1, 4), code="TEST"):
    bars = [OhlcBar(start + timedelta(days=i), c, c, c, c) for i, c in enumerate(closes)]
    return PriceSeries(code, tuple(bars))


def csv_rows(n, start=date(2016, 1, 4)):
    rows = []
    for i in range(n):
        c = 10 + i * 0.1
        rows.append(f"{start + timedelta(days=i)},{c:.2f},{c + 0.2:.2f},{c - 0.2:.2f},{c:.2f},{c:.2f},1000")
    return rows


class TestParse:
    def test_published_row(self):
        s = parse_csv(HEADER + "2016-09-21,2.78,2.87,2.78,2.81,2.81,123456\n", "600010")
        bar = s.bars[0]
        assert (bar.open, bar.high, bar.low, bar.close) == (2.78, 2.87, 2.78, 2.81)
        assert bar.date == date(2016, 9, 21)
        assert bar.volume == 123456
        assert s.stock_code == "600010"

    def test_header_only(self):
        with pytest.raises(DataError, match="empty series"):
            parse_csv(HEADER)

    def test_empty_file(self):
        with pytest.raises(DataError, match="empty series"):
            parse_csv("")

    def test_one_null_close_in_ten(self):
        rows = csv_rows(10)
        f = rows[4].split(",")
        f[4] = "null"
        rows[4] = ",".join(f)
        s = parse_csv(HEADER + "\n".join(rows) + "\n")
        assert len(s) == 9
        assert s.skipped == 1

    def test_yahoo_all_null_row(self):
        rows = csv_rows(10)
        rows[2] = "2016-01-06,null,null,null,null,null,null"
        s = parse_csv(HEADER + "\n".join(rows))
        assert len(s) == 9 and s.skipped == 1

    def test_too_many_skips(self):
        rows = csv_rows(10)
        rows[1] = rows[1].replace("10.10", "null", 1)
        rows[2] = "2016-01-06,abc,1,1,1,1,1"
        with pytest.raises(DataError, match="corrupt"):
            parse_csv(HEADER + "\n".join(rows))

    def test_ohlc_violation_rejected(self):
        rows = csv_rows(10)
        rows[3] = "2016-01-07,10.30,10.00,10.10,10.20,10.20,1"  # high below open
        s = parse_csv(HEADER + "\n".join(rows))
        assert len(s) == 9 and s.skipped == 1
        assert "rejected" in s.diagnostics[0]

    def test_duplicate_date(self):
        rows = csv_rows(3)
        with pytest.raises(DataError, match="duplicate"):
            parse_csv(HEADER + "\n".join(rows + [rows[1]]))

    def test_wrong_header(self):
        with pytest.raises(DataError, match="header"):
            parse_csv("Date,Close\n2016-01-04,1\n")

    def test_shuffled_rows_sorted(self):
        rows = csv_rows(12)
        shuffled = rows[:]
        random.Random(3).shuffle(shuffled)
        a = parse_csv(HEADER + "\n".join(rows))
        b = parse_csv(HEADER + "\n".join(shuffled))
        assert a == b
        scaler = fit_scaler(a)
        assert make_windows(a, scaler) == make_windows(b, scaler)

    def test_idempotent(self):
        rows = csv_rows(20)
        rows[5] = "2016-01-09,null,null,null,null,null,null"
        first = parse_csv(HEADER + "\n".join(rows), "X")
        again = parse_csv(serialize_csv(first), "X")
        assert again == first
        assert serialize_csv(again) == serialize_csv(first)

    def test_missing_volume(self):
        s = parse_csv(HEADER + "2016-09-21,2.78,2.87,2.78,2.81,2.81,null\n")
        assert s.bars[0].volume is None


class TestBar:
    def test_non_positive(self):
        with pytest.raises(DataError):
            OhlcBar(date(2016, 1, 4), 0.0, 1.0, 0.0, 0.5)

    def test_unordered(self):
        with pytest.raises(DataError):
            OhlcBar(date(2016, 1, 4), 1.0, 1.0, 1.1, 1.0)

    def test_series_must_increase(self):
        b = OhlcBar(date(2016, 1, 4), 1, 1, 1, 1)
        with pytest.raises(DataError):
            PriceSeries("X", (b, b))


class TestSplit:
    def test_four_years_then_2016(self):
        d, days = date(2012, 1, 1), []
        while d <= date(2016, 12, 31):
            if d.weekday() < 5:
                days.append(d)
            d += timedelta(days=1)
        s = PriceSeries("X", tuple(OhlcBar(d, 5, 5, 5, 5) for d in days))
        train, test = chronological_split(s, date(2015, 12, 31))
        assert train.bars[0].date.year == 2012 and train.bars[-1].date.year == 2015
        assert {b.date.year for b in test.bars} == {2016}

    def test_last_date_gives_empty_test(self, caplog):
        s = flat_series(range(1, 11))
        train, test = chronological_split(s, s.bars[-1].date)
        assert len(train) == 10 and len(test) == 0
        assert "empty" in caplog.text

    def test_partition_counts(self):
        s = flat_series(range(1, 11))
        train, test = chronological_split(s, s.bars[7].date)
        assert (len(train), len(test)) == (8, 2)

    def test_cutoff_outside(self):
        s = flat_series(range(1, 11))
        with pytest.raises(DataError, match="outside"):
            chronological_split(s, date(2000, 1, 1))

    @given(st.integers(0, 29))
    def test_partition_complete(self, k):
        s = flat_series([1 + i for i in range(30)])
        train, test = chronological_split(s, s.bars[k].date)
        assert train.bars + test.bars == s.bars
        assert not set(train.dates) & set(test.dates)


class TestScaler:
    def test_endpoints_and_midpoint(self):
        sc = fit_scaler(flat_series([2.0, 4.0]), 0.1, 0.9)
        assert sc.scale(2.0) == pytest.approx(0.1)
        assert sc.scale(4.0) == pytest.approx(0.9)
        assert sc.scale(3.0) == pytest.approx(0.5)

    def test_degenerate(self):
        with pytest.raises(DataError, match="degenerate"):
            fit_scaler(flat_series([5.0] * 6))

    def test_extrapolates(self):
        sc = Scaler(2.0, 4.0, 0.1, 0.9)
        assert sc.scale(6.0) == pytest.approx(1.7)
        assert sc.scale(1.0) == pytest.approx(-0.3)

    def test_round_trip_seeded(self):
        rng = np.random.default_rng(2016)
        sc = Scaler(2.55, 17.51)
        x = rng.uniform(sc.observed_min / 2, 2 * sc.observed_max, 1000)
        np.testing.assert_allclose(sc.unscale(sc.scale(x)), x, rtol=1e-9, atol=0)

    @given(
        st.floats(0.01, 1e4),
        st.floats(0.01, 1e4),
        st.floats(0.0, 1.0),
    )
    def test_round_trip_property(self, a, b, u):
        lo, hi = sorted((a, b))
        if hi - lo < 1e-6 * hi:
            return
        sc = Scaler(lo, hi)
        x = lo / 2 + u * (2 * hi - lo / 2)
        assert float(sc.unscale(sc.scale(x))) == pytest.approx(x, rel=1e-9)

    def test_no_test_leakage(self):
        s = flat_series([3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.6, 5.3])
        cutoff = s.bars[4].date
        base = fit_scaler(chronological_split(s, cutoff)[0])
        bumped = PriceSeries("TEST", s.bars[:5] + tuple(
            OhlcBar(b.date, 100.0, 100.0, 100.0, 100.0) for b in s.bars[5:]
        ))
        assert fit_scaler(chronological_split(bumped, cutoff)[0]) == base


class TestWindows:
    def test_count(self):
        s = flat_series(range(1, 11))
        assert len(make_windows(s, fit_scaler(s), 5)) == 5

    def test_single_window_identity(self):
        s = flat_series([1, 2, 3, 4, 5, 6])
        identity = Scaler(0.0, 1.0, 0.0, 1.0)
        (sample,) = make_windows(s, identity, 5)
        assert sample.inputs == (1.0, 2.0, 3.0, 4.0, 5.0)
        assert sample.target == 6.0

    def test_too_short(self):
        s = flat_series([1, 2, 3, 4, 5])
        with pytest.raises(DataError, match="too short"):
            make_windows(s, fit_scaler(s), 5)

    @settings(max_examples=30)
    @given(st.integers(1, 8), st.integers(0, 40))
    def test_count_law(self, width, extra):
        s = flat_series([1 + 0.5 * i for i in range(width + 1 + extra)])
        samples = make_windows(s, fit_scaler(s), width)
        assert len(samples) == len(s) - width
        assert all(len(x.inputs) == width for x in samples)

    def test_training_windows_in_target_range(self):
        s = flat_series([2.7, 2.9, 2.8, 3.1, 2.6, 2.75, 3.0, 2.95])
        sc = fit_scaler(s, 0.1, 0.9)
        for sample in make_windows(s, sc):
            vals = sample.inputs + (sample.target,)
            assert all(0.1 - 1e-12 <= v <= 0.9 + 1e-12 for v in vals)


class TestCalendar:
    def test_successor_skips_closure(self):
        cal = TradingCalendar((date(2016, 9, 29), date(2016, 9, 30), date(2016, 10, 10)))
        assert cal.successor(date(2016, 9, 30)) == date(2016, 10, 10)
        with pytest.raises(DataError):
            cal.successor(date(2016, 10, 10))

    def test_sessions_shortfall(self):
        cal = TradingCalendar((date(2016, 9, 29), date(2016, 9, 30)))
        with pytest.raises(DataError, match="only 2"):
            cal.sessions_from(date(2016, 9, 1), 3)

    def test_extended_skips_weekends_and_holidays(self):
        cal = TradingCalendar((date(2016, 9, 30),))
        holidays = [date(2016, 10, d) for d in range(3, 8)]
        ext = cal.extended(2, holidays)
        assert ext.trading_dates[1:] == (date(2016, 10, 10), date(2016, 10, 11))

    def test_must_increase(self):
        with pytest.raises(DataError):
            TradingCalendar((date(2016, 1, 5), date(2016, 1, 4)))
