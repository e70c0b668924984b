"""Bundled data for the seven Shanghai Stock Exchange stocks.

``<code>_actual.csv``
    Actual bars for the 21-Sep-2016 to 11-Oct-2016 evaluation window.
``<code>_predicted.csv``
    The published forecasts for the same dates, in ledger format.
``<code>.csv``
    A full 2012-01-04 to 2016-10-11 file: a seeded *synthetic* random-walk
    history up to 2016-09-20 followed by the actual window bars. The real
    2012-2016 histories are not bundled; this stand-in exists so the train
    and predict commands have something realistic in shape to run on.

Regenerate the synthetic files with ``python -m annforecast.fixtures``.
"""

from __future__ import annotations

from datetime import date, timedelta
from importlib import resources
from pathlib import Path

import numpy as np

from ..data import OhlcBar, PriceSeries, parse_csv, serialize_csv
from ..predictor import PredictionLedger, ledger_from_csv

STOCKS = {
    "600010": "Inner Mongolia BaoTou Steel Union Co.,Ltd.",
    "600015": "HUA XIA BANK CO., Limited",
    "600016": "CHINA MINSHENG BANK",
    "600028": "China Petroleum and Chemical Corporation",
    "600031": "SANY HEAVY INDUSTRY CO.,LTD",
    "600064": "NANJING GAOKE COMPANY LIMITED",
    "600089": "TBEA CO.,LTD.",
}

# SSE closures around the evaluation window (Mid-Autumn, National Day)
SSE_CLOSURES_2016 = (
    date(2016, 9, 15), date(2016, 9, 16),
    *(date(2016, 10, d) for d in range(3, 8)),
)

HISTORY_START = date(2012, 1, 4)
HISTORY_END = date(2016, 9, 20)


def fixture_path(name: str) -> Path:
    return Path(str(resources.files(__name__).joinpath(name)))


def _read(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


def actual_window(code: str) -> PriceSeries:
    return parse_csv(_read(f"{code}_actual.csv"), code)


def published_ledger(code: str) -> PredictionLedger:
    return ledger_from_csv(_read(f"{code}_predicted.csv"))


def history(code: str) -> PriceSeries:
    return parse_csv(_read(f"{code}.csv"), code)


def _weekdays(start: date, end: date, closed=()) -> list[date]:
    closed = set(closed)
    days, d = [], start
    while d <= end:
        if d.weekday() < 5 and d not in closed:
            days.append(d)
        d += timedelta(days=1)
    return days


def synthetic_history(code: str) -> PriceSeries:
    """Seeded log-normal walk bridged to the first actual open of the window.

    The walk starts at a random level near the window prices and is pinned
    so its final close equals the 21-Sep-2016 open.
    """
    window = actual_window(code)
    target = window.bars[0].open
    rng = np.random.default_rng(int(code))
    days = _weekdays(HISTORY_START, HISTORY_END, SSE_CLOSURES_2016)
    n = len(days)

    steps = rng.normal(0.0, 0.018, n)
    walk = np.concatenate([[0.0], np.cumsum(steps[1:])])
    start_log = np.log(target) + rng.normal(0.0, 0.25)
    # Brownian bridge onto log(target)
    walk -= np.linspace(0.0, 1.0, n) * (walk[-1] - (np.log(target) - start_log))
    closes = np.round(np.exp(start_log + walk), 2)
    closes[-1] = target

    bars = []
    prev = closes[0]
    for day, close in zip(days, closes):
        close = max(float(close), 0.01)
        opn = max(round(prev * float(np.exp(rng.normal(0.0, 0.004))), 2), 0.01)
        spread_hi = abs(rng.normal(0.0, 0.008))
        spread_lo = abs(rng.normal(0.0, 0.008))
        high = max(round(max(opn, close) * (1 + spread_hi), 2), opn, close)
        low = max(min(round(min(opn, close) * (1 - spread_lo), 2), opn, close), 0.01)
        volume = int(rng.integers(5_000_000, 80_000_000))
        bars.append(OhlcBar(day, opn, high, low, close, volume))
        prev = close
    return PriceSeries(code, tuple(bars) + window.bars)


def write_histories(directory: Path | None = None) -> list[Path]:
    directory = Path(directory) if directory else fixture_path("")
    written = []
    for code in STOCKS:
        path = directory / f"{code}.csv"
        path.write_text(serialize_csv(synthetic_history(code)), encoding="utf-8")
        written.append(path)
    return written
