"""Historical OHLC ingestion, trading calendars, price scaling and windowing."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

YAHOO_COLUMNS = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
MAX_SKIP_FRACTION = 0.10


class DataError(ValueError):
    """Raised when a price file or series cannot be used."""


@dataclass(frozen=True)
class OhlcBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: int | None = None

    def __post_init__(self):
        for name in ("open", "high", "low", "close"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.volume is not None:
            object.__setattr__(self, "volume", int(self.volume))
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise DataError(f"{self.date}: prices must be positive and finite")
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise DataError(
                f"{self.date}: OHLC out of order "
                f"(o={self.open}, h={self.high}, l={self.low}, c={self.close})"
            )
        if self.volume is not None and self.volume < 0:
            raise DataError(f"{self.date}: negative volume")


@dataclass(frozen=True)
class PriceSeries:
    """Chronologically ordered bars for one stock.

    ``skipped`` and ``diagnostics`` describe what the parser dropped; they do
    not take part in equality.
    """

    stock_code: str
    bars: tuple[OhlcBar, ...]
    skipped: int = field(default=0, compare=False)
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise DataError(f"bars not strictly increasing at {cur.date}")

    def __len__(self):
        return len(self.bars)

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    @property
    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars], dtype=float)

    def between(self, start: date | None = None, end: date | None = None) -> PriceSeries:
        """Bars with ``start <= date <= end`` (either bound optional)."""
        bars = [
            b for b in self.bars
            if (start is None or b.date >= start) and (end is None or b.date <= end)
        ]
        return PriceSeries(self.stock_code, tuple(bars))

    def bar_on(self, day: date) -> OhlcBar | None:
        for b in self.bars:
            if b.date == day:
                return b
        return None


def _parse_price(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def _parse_volume(text: str) -> int | None:
    text = text.strip()
    if text in ("", "null"):
        return None
    return int(float(text))


def parse_csv(text: str | io.TextIOBase, stock_code: str = "") -> PriceSeries:
    """Parse a Yahoo Finance historical export into a validated series.

    Rows with ``null`` or unparseable prices, and rows breaking the OHLC
    ordering, are dropped and counted. More than 10% dropped rows, a
    duplicated date, or an empty result is a hard error.
    """
    if not isinstance(text, str):
        text = text.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise DataError("empty series: file has no header")
    header = [h.strip() for h in header]
    if sorted(header) != sorted(YAHOO_COLUMNS):
        raise DataError(f"unexpected header {header}; expected {list(YAHOO_COLUMNS)}")
    col = {name: header.index(name) for name in YAHOO_COLUMNS}

    bars: dict[date, OhlcBar] = {}
    diagnostics: list[str] = []
    total = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        total += 1
        try:
            day = date.fromisoformat(row[col["Date"]].strip())
            o, h, lo, c = (_parse_price(row[col[k]]) for k in ("Open", "High", "Low", "Close"))
            vol = _parse_volume(row[col["Volume"]])
        except (ValueError, IndexError):
            diagnostics.append(f"line {lineno}: unparseable row {row!r}")
            continue
        try:
            bar = OhlcBar(day, o, h, lo, c, vol)
        except DataError as exc:
            diagnostics.append(f"line {lineno}: rejected, {exc}")
            continue
        if day in bars:
            raise DataError(f"line {lineno}: duplicate date {day}")
        bars[day] = bar

    if not bars:
        raise DataError("empty series")
    skipped = len(diagnostics)
    if skipped > MAX_SKIP_FRACTION * total:
        raise DataError(
            f"{skipped} of {total} rows unusable (limit {MAX_SKIP_FRACTION:.0%}); source looks corrupt"
        )
    for msg in diagnostics:
        log.warning(msg)
    ordered = tuple(bars[d] for d in sorted(bars))
    return PriceSeries(stock_code, ordered, skipped=skipped, diagnostics=tuple(diagnostics))


def serialize_csv(series: PriceSeries) -> str:
    """Write ``series`` back out in the Yahoo Finance column layout.

    Adj Close is not tracked, so the close is repeated in that column.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(YAHOO_COLUMNS)
    for b in series.bars:
        writer.writerow([
            b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low), repr(b.close),
            repr(b.close), "null" if b.volume is None else b.volume,
        ])
    return buf.getvalue()


def read_series(path, stock_code: str | None = None) -> PriceSeries:
    from pathlib import Path

    path = Path(path)
    return parse_csv(path.read_text(encoding="utf-8"), stock_code or path.stem)


def chronological_split(series: PriceSeries, cutoff: date) -> tuple[PriceSeries, PriceSeries]:
    """Split into bars on or before ``cutoff`` and bars after it."""
    if not series.bars:
        raise DataError("cannot split an empty series")
    first, last = series.bars[0].date, series.bars[-1].date
    if not first <= cutoff <= last:
        raise DataError(f"cutoff {cutoff} outside series range {first}..{last}")
    train = tuple(b for b in series.bars if b.date <= cutoff)
    test = tuple(b for b in series.bars if b.date > cutoff)
    if not test:
        log.warning("cutoff %s is the last date; test partition is empty", cutoff)
    return PriceSeries(series.stock_code, train), PriceSeries(series.stock_code, test)


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered dates on which the exchange trades."""

    trading_dates: tuple[date, ...]

    def __post_init__(self):
        object.__setattr__(self, "trading_dates", tuple(self.trading_dates))
        for prev, cur in zip(self.trading_dates, self.trading_dates[1:]):
            if cur <= prev:
                raise DataError(f"calendar not strictly increasing at {cur}")

    @classmethod
    def from_series(cls, series: PriceSeries, start: date | None = None) -> TradingCalendar:
        return cls(tuple(d for d in series.dates if start is None or d >= start))

    def __len__(self):
        return len(self.trading_dates)

    def __contains__(self, day):
        return day in self.trading_dates

    def successor(self, day: date) -> date:
        for d in self.trading_dates:
            if d > day:
                return d
        raise DataError(f"no trading date after {day} in calendar")

    def sessions_from(self, start: date, count: int) -> list[date]:
        """The first ``count`` trading dates on or after ``start``."""
        days = [d for d in self.trading_dates if d >= start][:count]
        if len(days) < count:
            raise DataError(
                f"calendar has only {len(days)} trading dates from {start}, need {count}"
            )
        return days

    def extended(self, count: int, holidays: Iterable[date] = (), after: date | None = None) -> TradingCalendar:
        """Append ``count`` weekdays past the last date, skipping ``holidays``."""
        closed = set(holidays)
        days = list(self.trading_dates)
        cursor = days[-1] if days else after
        if cursor is None:
            raise DataError("cannot extend an empty calendar without a start date")
        while count > 0:
            cursor += timedelta(days=1)
            if cursor.weekday() < 5 and cursor not in closed:
                days.append(cursor)
                count -= 1
        return TradingCalendar(tuple(days))


@dataclass(frozen=True)
class Scaler:
    """Affine map from [observed_min, observed_max] onto [target_lo, target_hi].

    Values outside the observed range extrapolate linearly.
    """

    observed_min: float
    observed_max: float
    target_lo: float = 0.1
    target_hi: float = 0.9

    def __post_init__(self):
        if not self.observed_min < self.observed_max:
            raise DataError("degenerate scale: observed_min must be below observed_max")
        if not self.target_lo < self.target_hi:
            raise DataError("target_lo must be below target_hi")

    @property
    def _slope(self) -> float:
        return (self.target_hi - self.target_lo) / (self.observed_max - self.observed_min)

    def scale(self, x):
        return self.target_lo + (np.asarray(x, dtype=float) - self.observed_min) * self._slope

    def unscale(self, y):
        return self.observed_min + (np.asarray(y, dtype=float) - self.target_lo) / self._slope


def fit_scaler(train: PriceSeries, target_lo: float = 0.1, target_hi: float = 0.9) -> Scaler:
    """Fit a min/max scaler on the training closes only."""
    closes = train.closes
    if closes.size == 0 or np.unique(closes).size < 2:
        raise DataError("degenerate scale: need at least two distinct closes")
    return Scaler(float(closes.min()), float(closes.max()), target_lo, target_hi)


@dataclass(frozen=True)
class Sample:
    inputs: tuple[float, ...]
    target: float


def make_windows(series: PriceSeries, scaler: Scaler, width: int = 5) -> list[Sample]:
    """Sliding windows of ``width`` scaled closes, each predicting the next close."""
    if width < 1:
        raise DataError("window width must be positive")
    if len(series) < width + 1:
        raise DataError(f"series of {len(series)} bars is too short for width {width}")
    scaled = scaler.scale(series.closes)
    return [
        Sample(tuple(float(v) for v in scaled[i:i + width]), float(scaled[i + width]))
        for i in range(len(scaled) - width)
    ]


def samples_to_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([s.inputs for s in samples], dtype=float)
    y = np.array([s.target for s in samples], dtype=float)
    return x, y
