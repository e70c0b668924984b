"""Dated forecasts from a trained network: one-step and recursive rollout."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .ann import Network, forward
from .data import Scaler, TradingCalendar

FIXED_POINT_EPS = 0.005
LEDGER_COLUMNS = ("stock_code", "date", "predicted")


class RolloutError(RuntimeError):
    pass


@dataclass(frozen=True)
class PredictionLedger:
    stock_code: str
    entries: tuple[tuple[date, float], ...]
    generated_on: date | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((d, float(p)) for d, p in self.entries))
        for (d0, _), (d1, _) in zip(self.entries, self.entries[1:]):
            if d1 <= d0:
                raise ValueError(f"ledger dates must be strictly increasing ({d0} -> {d1})")
        for d, p in self.entries:
            if not (math.isfinite(p) and p > 0):
                raise ValueError(f"{d}: predicted price must be positive and finite, got {p}")

    def __len__(self):
        return len(self.entries)

    @property
    def dates(self) -> list[date]:
        return [d for d, _ in self.entries]

    @property
    def prices(self) -> list[float]:
        return [p for _, p in self.entries]


@dataclass(frozen=True)
class RolloutConfig:
    seed_window: tuple[float, ...]
    start_date: date
    horizon: int
    preroll: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed_window", tuple(float(p) for p in self.seed_window))
        if self.horizon < 0 or self.preroll < 0:
            raise ValueError("horizon and preroll must be non-negative")


def predict_next(net: Network, scaler: Scaler, window: Sequence[float]) -> float:
    """Next close after ``window`` (oldest first), in price units."""
    prices = np.asarray(window, dtype=float)
    if prices.shape != (net.topology.n_inputs,):
        raise ValueError(f"window must hold {net.topology.n_inputs} prices, got {prices.shape}")
    if not np.all(prices > 0):
        raise ValueError("window prices must be positive")
    return float(scaler.unscale(forward(net, scaler.scale(prices))))


def rollout(
    net: Network,
    scaler: Scaler,
    cfg: RolloutConfig,
    cal: TradingCalendar,
    stock_code: str = "",
    generated_on: date | None = None,
) -> PredictionLedger:
    """Recursive forecast feeding every prediction back into the window.

    The first ``cfg.preroll`` predictions only advance the window. The next
    ``cfg.horizon`` are bound, in order, to the trading dates of ``cal`` on
    or after ``cfg.start_date``; closed days are simply absent from the
    calendar, so they are skipped without special handling.
    """
    if len(cfg.seed_window) != net.topology.n_inputs:
        raise ValueError(
            f"seed window has {len(cfg.seed_window)} prices, network expects {net.topology.n_inputs}"
        )
    try:
        days = cal.sessions_from(cfg.start_date, cfg.horizon)
    except ValueError as exc:
        raise RolloutError(str(exc)) from None

    window = list(cfg.seed_window)
    emitted = []
    for step in range(cfg.preroll + cfg.horizon):
        price = predict_next(net, scaler, window)
        if not math.isfinite(price) or price <= 0:
            raise RolloutError(f"rollout step {step + 1} produced unusable price {price}")
        window = window[1:] + [price]
        if step >= cfg.preroll:
            emitted.append(price)
    return PredictionLedger(stock_code, tuple(zip(days, emitted)), generated_on)


def detect_fixed_point(ledger: PredictionLedger, eps: float = FIXED_POINT_EPS) -> date | None:
    """First date from which every later prediction lies within ``eps`` of every other.

    A plateau needs at least two entries, so a single trailing value never
    counts.
    """
    prices = ledger.prices
    hi = lo = None
    found = None
    for i in range(len(prices) - 1, -1, -1):
        p = prices[i]
        hi = p if hi is None else max(hi, p)
        lo = p if lo is None else min(lo, p)
        if hi - lo >= eps:
            break
        if i < len(prices) - 1:
            found = i
    return None if found is None else ledger.entries[found][0]


def ledger_to_csv(ledger: PredictionLedger) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LEDGER_COLUMNS)
    for d, p in ledger.entries:
        writer.writerow([ledger.stock_code, d.isoformat(), f"{p:.2f}"])
    return buf.getvalue()


def ledger_from_csv(text: str) -> PredictionLedger:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != LEDGER_COLUMNS:
        raise ValueError(f"ledger header must be {','.join(LEDGER_COLUMNS)}")
    codes, entries = set(), []
    for row in reader:
        codes.add(row["stock_code"])
        entries.append((date.fromisoformat(row["date"]), float(row["predicted"])))
    if len(codes) > 1:
        raise ValueError(f"ledger mixes stock codes {sorted(codes)}")
    return PredictionLedger(codes.pop() if codes else "", tuple(entries))
