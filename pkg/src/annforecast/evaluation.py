"""Forecast evaluation against actual trades.

Signed daily error against the close, MAPE over a prediction range, the
daily price-limit (swing) check, observed swing range, trend agreement, and
renderers for the comparison table.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Sequence

from .data import PriceSeries
from .predictor import PredictionLedger, detect_fixed_point

SWING_LIMIT_PCT = 10.0
REPORT_COLUMNS = ("date", "predicted", "open", "high", "low", "close", "error_pct")


class EvalError(ValueError):
    pass


def signed_error(predicted: float, close: float) -> float:
    """Percentage error of ``predicted`` relative to ``close``."""
    if not close > 0:
        raise EvalError(f"close must be positive, got {close}")
    return 100.0 * (predicted - close) / close


def mape(errors: Sequence[float]) -> float:
    if len(errors) == 0:
        raise EvalError("MAPE of an empty error list")
    return sum(abs(e) for e in errors) / len(errors)


@dataclass(frozen=True)
class SwingCheck:
    compliant: bool
    magnitude_pct: float
    prev_close: float


def swing_check(predicted: float, prev_close: float, limit: float = SWING_LIMIT_PCT) -> SwingCheck:
    """Is ``predicted`` within ``limit`` percent of the previous close? (inclusive)"""
    if not prev_close > 0:
        raise EvalError(f"previous close must be positive, got {prev_close}")
    magnitude = 100.0 * abs(predicted - prev_close) / prev_close
    return SwingCheck(magnitude <= limit, magnitude, prev_close)


def observed_swing_range(series: PriceSeries) -> tuple[float, float]:
    """Smallest and largest day-over-day close move, in percent."""
    closes = [b.close for b in series.bars]
    if len(closes) < 2:
        raise EvalError("need at least two bars for a swing range")
    swings = [100.0 * abs(c1 - c0) / c0 for c0, c1 in zip(closes, closes[1:])]
    return min(swings), max(swings)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def trend_agreement(ledger: PredictionLedger, actual: PriceSeries) -> float:
    """Share of consecutive moves where prediction and close go the same way.

    Moves are compared over the dates both sides share. A flat move only
    agrees with another flat move.
    """
    closes = {b.date: b.close for b in actual.bars}
    pairs = [(p, closes[d]) for d, p in ledger.entries if d in closes]
    if len(pairs) < 2:
        raise EvalError("trend agreement needs at least two common dates")
    matches = sum(
        _sign(p1 - p0) == _sign(c1 - c0)
        for (p0, c0), (p1, c1) in zip(pairs, pairs[1:])
    )
    return matches / (len(pairs) - 1)


@dataclass(frozen=True)
class DailyComparison:
    date: date
    predicted: float
    open: float
    high: float
    low: float
    close: float

    @property
    def signed_error_pct(self) -> float:
        return signed_error(self.predicted, self.close)


@dataclass(frozen=True)
class EvalReport:
    stock_code: str
    rows: tuple[DailyComparison, ...]
    swing_flags: tuple[SwingCheck | None, ...]
    swing_limit_pct: float = SWING_LIMIT_PCT

    @property
    def errors(self) -> list[float]:
        return [r.signed_error_pct for r in self.rows]

    @property
    def mape_pct(self) -> float:
        return mape(self.errors)

    @property
    def observed_swing_range(self) -> tuple[float, float] | None:
        if len(self.rows) < 2:
            return None
        closes = [r.close for r in self.rows]
        swings = [100.0 * abs(c1 - c0) / c0 for c0, c1 in zip(closes, closes[1:])]
        return min(swings), max(swings)

    @property
    def trend_agreement(self) -> float | None:
        if len(self.rows) < 2:
            return None
        return trend_agreement(self.ledger, self.actual)

    @property
    def ledger(self) -> PredictionLedger:
        return PredictionLedger(self.stock_code, tuple((r.date, r.predicted) for r in self.rows))

    @property
    def actual(self) -> PriceSeries:
        from .data import OhlcBar

        return PriceSeries(self.stock_code, tuple(
            OhlcBar(r.date, r.open, r.high, r.low, r.close) for r in self.rows
        ))

    @property
    def fixed_point(self) -> date | None:
        return detect_fixed_point(self.ledger)

    def summary(self) -> dict:
        checked = [f for f in self.swing_flags if f is not None]
        swing = self.observed_swing_range
        return {
            "stock_code": self.stock_code,
            "rows": len(self.rows),
            "mape_pct": self.mape_pct,
            "swing_limit_pct": self.swing_limit_pct,
            "swing_checked": len(checked),
            "swing_unchecked": len(self.swing_flags) - len(checked),
            "swing_compliant": sum(f.compliant for f in checked),
            "swing_max_pct": max((f.magnitude_pct for f in checked), default=None),
            "observed_swing_range_pct": list(swing) if swing else None,
            "trend_agreement": self.trend_agreement,
            "fixed_point": None if self.fixed_point is None else self.fixed_point.isoformat(),
        }


def build_report(
    ledger: PredictionLedger,
    actual: PriceSeries,
    limit: float = SWING_LIMIT_PCT,
) -> EvalReport:
    """Compare every ledger entry with the actual bar of the same date.

    Each prediction is swing-checked against the close of the trading day
    before it in ``actual``; when ``actual`` holds no earlier bar (the first
    row of a window-only file) that flag is ``None``.
    """
    if not ledger.entries:
        raise EvalError("ledger is empty; nothing to evaluate")
    bars = {b.date: b for b in actual.bars}
    missing = [d for d in ledger.dates if d not in bars]
    if missing:
        raise EvalError("no actual bar for predicted dates: " + ", ".join(d.isoformat() for d in missing))

    rows, flags = [], []
    for d, p in ledger.entries:
        bar = bars[d]
        rows.append(DailyComparison(d, p, bar.open, bar.high, bar.low, bar.close))
        prior = [b for b in actual.bars if b.date < d]
        flags.append(swing_check(p, prior[-1].close, limit) if prior else None)
    return EvalReport(ledger.stock_code, tuple(rows), tuple(flags), limit)


# ---------------------------------------------------------------- rendering

def _fmt_day(d: date) -> str:
    return d.strftime("%d-%b-%y")


def render_text(report: EvalReport) -> str:
    """Plain-text comparison table; weekdays with no trade show as ``*`` dash rows."""
    head = f"{report.stock_code:<11}" + "".join(
        f"{h:>11}" for h in ("Predicted", "Open", "High", "Low", "Close", "Error")
    )
    lines = [head]
    by_date = {r.date: r for r in report.rows}
    day, last = report.rows[0].date, report.rows[-1].date
    closed_seen = False
    while day <= last:
        r = by_date.get(day)
        if r is not None:
            lines.append(
                f"{_fmt_day(day):<11}"
                + "".join(f"{v:>11.2f}" for v in (r.predicted, r.open, r.high, r.low, r.close))
                + f"{r.signed_error_pct:>10.2f}%"
            )
        elif day.weekday() < 5:
            closed_seen = True
            lines.append(f"{_fmt_day(day) + '*':<11}" + "".join(f"{'-':>11}" for _ in range(6)))
        day += timedelta(days=1)
    if closed_seen:
        lines.append("*market closed")
    lines.append("")

    s = report.summary()
    lines.append(f"MAPE: {s['mape_pct']:.2f}% over {s['rows']} predictions")
    if s["swing_checked"]:
        lines.append(
            f"swing rule ({report.swing_limit_pct:g}% vs previous close): "
            f"{s['swing_compliant']}/{s['swing_checked']} compliant, max {s['swing_max_pct']:.2f}%"
        )
    if s["swing_unchecked"]:
        lines.append(f"swing rule: {s['swing_unchecked']} row(s) unchecked, no earlier close on file")
    if s["observed_swing_range_pct"]:
        lo, hi = s["observed_swing_range_pct"]
        lines.append(f"observed close swings: {lo:.2f}% to {hi:.2f}%")
    if s["trend_agreement"] is not None:
        lines.append(f"trend agreement: {s['trend_agreement']:.3f}")
    if s["fixed_point"]:
        fp = report.fixed_point
        price = dict(report.ledger.entries)[fp]
        lines.append(f"fixed point: predictions hold at {price:.2f} from {_fmt_day(fp)}")
    return "\n".join(lines) + "\n"


def report_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.rows:
        writer.writerow([r.date.isoformat(), repr(r.predicted), repr(r.open), repr(r.high),
                         repr(r.low), repr(r.close), f"{r.signed_error_pct:.2f}"])
    return buf.getvalue()


def report_from_csv(text: str, stock_code: str = "") -> EvalReport:
    """Rebuild a report's rows from :func:`report_to_csv` output.

    No earlier close is stored in the CSV, so the first swing flag is ``None``.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != REPORT_COLUMNS:
        raise EvalError(f"report header must be {','.join(REPORT_COLUMNS)}")
    rows = tuple(
        DailyComparison(date.fromisoformat(r["date"]), float(r["predicted"]), float(r["open"]),
                        float(r["high"]), float(r["low"]), float(r["close"]))
        for r in reader
    )
    flags = [None] + [swing_check(r1.predicted, r0.close) for r0, r1 in zip(rows, rows[1:])]
    return EvalReport(stock_code, rows, tuple(flags[: len(rows)]))


def plot_data_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("date", "predicted", "close"))
    for r in report.rows:
        writer.writerow([r.date.isoformat(), f"{r.predicted:.2f}", f"{r.close:.2f}"])
    return buf.getvalue()


def summary_json(report: EvalReport) -> str:
    return json.dumps(report.summary(), indent=2) + "\n"
