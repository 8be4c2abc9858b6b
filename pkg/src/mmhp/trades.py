"""Trade-tape ingestion and the burst-detection preprocessing pipeline.

Raw fills are aggregated per order id into marketable orders.  Detection
works on the zero-return sub-sample of one book side: trades whose price
equals the previous same-side trade price, clipped to a UTC wall-clock
window and rebased to seconds.  State-characterization analytics (best-queue
imbalance around regime changes and the regime-conditioned mid-price
response) consume book snapshots.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

_SIDES = {"bid": "bid", "bid-hit": "bid", "sell": "bid",
          "ask": "ask", "ask-hit": "ask", "buy": "ask"}


@dataclass(frozen=True)
class TradeRecord:
    timestamp_us: int
    price: float
    size: float
    side: str          # "bid" (sell aggressor) or "ask" (buy aggressor)
    order_id: str


@dataclass(frozen=True)
class LobSnapshot:
    timestamp_us: int
    bid: float
    ask: float
    bid_size: float
    ask_size: float


@dataclass(frozen=True)
class DetectionSeries:
    """Zero-return same-side event times in seconds from the window start."""

    times: np.ndarray            # strictly increasing, seconds
    timestamps_us: np.ndarray    # original (possibly perturbed) microsecond stamps
    side: str
    window_start_us: int
    window_end_us: int
    n_perturbed: int             # duplicates shifted by +1 us to restore strict order

    @property
    def K(self) -> int:
        return self.times.shape[0]


def ingest_trades(path) -> list:
    """Parse a fills CSV and aggregate rows into one record per order id.

    Expects the header ``timestamp_us,price,size,side,order_id``.  The
    aggregate keeps the first fill's timestamp and price and sums the sizes.
    """
    rows = []
    bad_lines = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["timestamp_us", "price", "size", "side", "order_id"]
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != expected:
            raise DataError(f"expected header {','.join(expected)!r} in {path}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = int(row["timestamp_us"])
                price = float(row["price"])
                size = float(row["size"])
                side = _SIDES[row["side"].strip().lower()]
                order_id = row["order_id"].strip()
                if price <= 0 or size <= 0 or not order_id:
                    raise ValueError
            except (KeyError, TypeError, ValueError):
                bad_lines.append(lineno)
                continue
            rows.append((ts, price, size, side, order_id))
    if bad_lines:
        shown = ", ".join(map(str, bad_lines[:20]))
        more = "" if len(bad_lines) <= 20 else f" (+{len(bad_lines) - 20} more)"
        raise DataError(f"malformed rows at lines {shown}{more} in {path}")
    if not rows:
        raise DataError(f"no trades found in {path}")
    if any(rows[i][0] > rows[i + 1][0] for i in range(len(rows) - 1)):
        raise DataError(f"timestamps are not non-decreasing in {path}")
    aggregated = {}
    order = []
    for ts, price, size, side, order_id in rows:
        if order_id in aggregated:
            first = aggregated[order_id]
            aggregated[order_id] = TradeRecord(first.timestamp_us, first.price,
                                               first.size + size, first.side,
                                               order_id)
        else:
            aggregated[order_id] = TradeRecord(ts, price, size, side, order_id)
            order.append(order_id)
    return [aggregated[oid] for oid in order]


def read_lob_snapshots(path) -> list:
    """Parse a best-bid/ask CSV with header timestamp_us,bid,ask,bid_size,ask_size."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                snap = LobSnapshot(int(row["timestamp_us"]), float(row["bid"]),
                                   float(row["ask"]), float(row["bid_size"]),
                                   float(row["ask_size"]))
                if snap.bid >= snap.ask or snap.bid_size < 0 or snap.ask_size < 0:
                    raise ValueError
            except (KeyError, TypeError, ValueError):
                raise DataError(f"malformed snapshot at line {lineno} in {path}") from None
            out.append(snap)
    return out


def day_window_us(trades, window: str, date: dt.date = None):
    """Resolve an HH:MM-HH:MM UTC wall-clock window to microsecond bounds.

    The window applies to ``date``, defaulting to the UTC date of the first
    trade; multi-day batches are expected to be orchestrated one day at a time.
    """
    try:
        start_s, end_s = window.split("-")
        sh, sm = (int(v) for v in start_s.split(":"))
        eh, em = (int(v) for v in end_s.split(":"))
    except ValueError as exc:
        raise DataError(f"window must look like '05:00-12:00', got {window!r}") from exc
    if date is None:
        first = dt.datetime.fromtimestamp(trades[0].timestamp_us / 1e6, tz=dt.timezone.utc)
        date = first.date()
    base = dt.datetime.combine(date, dt.time(0), tzinfo=dt.timezone.utc)
    start = base + dt.timedelta(hours=sh, minutes=sm)
    end = base + dt.timedelta(hours=eh, minutes=em)
    if end <= start:
        raise DataError("window end must be after the start")
    return int(start.timestamp() * 1e6), int(end.timestamp() * 1e6)


def build_detection_series(trades, side: str, window_us) -> DetectionSeries:
    """Side-filter, window-clip and keep zero-return trades, rebased to seconds.

    A trade survives if its price equals the previous same-side trade price
    inside the window.  Simultaneous survivors are shifted by +1 microsecond
    (deterministically) to restore strict ordering; the count is reported.
    """
    side = _SIDES.get(side.strip().lower())
    if side is None:
        raise DataError(f"side must be bid or ask, got {side!r}")
    start_us, end_us = window_us
    same_side = [t for t in trades if t.side == side
                 and start_us <= t.timestamp_us < end_us]
    kept = [t for prev, t in zip(same_side, same_side[1:]) if t.price == prev.price]
    stamps = []
    n_perturbed = 0
    for t in kept:
        ts = t.timestamp_us
        if stamps and ts <= stamps[-1]:
            ts = stamps[-1] + 1
            n_perturbed += 1
        stamps.append(ts)
    stamps = np.asarray(stamps, dtype=np.int64)
    times = (stamps - start_us) / 1e6
    return DetectionSeries(times=times, timestamps_us=stamps, side=side,
                           window_start_us=start_us, window_end_us=end_us,
                           n_perturbed=n_perturbed)


def seasonality_profile(trades, bin_seconds: float = 300.0):
    """Across-day mean trading intensity per intraday bin and per weekday.

    Returns (intraday, weekday): the first maps bin start (seconds from
    midnight UTC) to (mean events/s, ci95 half-width, n_days); the second maps
    weekday index (0 = Monday) to the same statistics of whole-day intensity.
    """
    if not trades:
        raise DataError("no trades to profile")
    by_day = {}
    for t in trades:
        stamp = dt.datetime.fromtimestamp(t.timestamp_us / 1e6, tz=dt.timezone.utc)
        by_day.setdefault(stamp.date(), []).append(
            stamp.hour * 3600 + stamp.minute * 60 + stamp.second + stamp.microsecond / 1e6
        )
    n_bins = int(math.ceil(86400.0 / bin_seconds))
    day_rates = {}
    per_bin = np.zeros((len(by_day), n_bins))
    for d, (day, seconds) in enumerate(sorted(by_day.items())):
        counts = np.bincount((np.asarray(seconds) / bin_seconds).astype(int),
                             minlength=n_bins)
        per_bin[d] = counts / bin_seconds
        day_rates[day] = len(seconds) / 86400.0
    n_days = len(by_day)
    mean = per_bin.mean(axis=0)
    if n_days > 1:
        half = 1.96 * per_bin.std(axis=0, ddof=1) / math.sqrt(n_days)
    else:
        half = np.full(n_bins, np.nan)   # single day: no across-day dispersion
    intraday = {int(b * bin_seconds): (float(mean[b]), float(half[b]), n_days)
                for b in range(n_bins)}
    weekday = {}
    for wd in range(7):
        rates = [r for day, r in day_rates.items() if day.weekday() == wd]
        if not rates:
            continue
        m = float(np.mean(rates))
        h = float(1.96 * np.std(rates, ddof=1) / math.sqrt(len(rates))) if len(rates) > 1 else float("nan")
        weekday[wd] = (m, h, len(rates))
    return intraday, weekday


def imbalance_at_transitions(snapshots, series: DetectionSeries, states,
                             staleness_s: float = 5.0):
    """Best-queue imbalance right before each event where the decoded state changes.

    Returns (groups, n_dropped): groups maps the destination state to the list
    of (q_bid - q_ask) / (q_bid + q_ask) values taken from the last snapshot
    strictly before the event; events whose snapshot is older than
    ``staleness_s`` are dropped and counted.
    """
    states = np.asarray(states)
    if states.shape[0] != series.K:
        raise ValueError("one decoded state per series event is required")
    snap_ts = np.asarray([s.timestamp_us for s in snapshots], dtype=np.int64)
    groups = {}
    n_dropped = 0
    for k in range(1, series.K):
        if states[k] == states[k - 1]:
            continue
        ts = int(series.timestamps_us[k])
        idx = int(np.searchsorted(snap_ts, ts, side="left")) - 1
        if idx < 0 or (ts - snap_ts[idx]) / 1e6 > staleness_s:
            n_dropped += 1
            continue
        snap = snapshots[idx]
        denom = snap.bid_size + snap.ask_size
        if denom <= 0:
            n_dropped += 1
            continue
        imb = (snap.bid_size - snap.ask_size) / denom
        groups.setdefault(int(states[k]), []).append(float(imb))
    return groups, n_dropped


def price_response(mid_times, mid_prices, series: DetectionSeries, states,
                   horizons: int = 5, min_support: int = 5):
    """Regime-conditioned mid-price response in basis points.

    For each mid-price change n, epsilon_n is the sign of the last series
    trade before it (+1 for ask-hit, -1 for bid-hit) and S_n that trade's
    decoded state.  Cells average epsilon_n * (p_{n+h} / p_n - 1) over changes
    where S_n = s and S_{n-1} != s.  Returns a dict keyed by (h, state) with
    (mean_bp, ci95_half_bp, n_samples, low_support_flag).
    """
    states = np.asarray(states)
    if states.shape[0] != series.K:
        raise ValueError("one decoded state per series event is required")
    mid_times = np.asarray(mid_times, dtype=float)
    mid_prices = np.asarray(mid_prices, dtype=float)
    sign = 1.0 if series.side == "ask" else -1.0
    n_mid = mid_times.shape[0]
    trade_idx = np.searchsorted(series.times, mid_times, side="left") - 1
    samples = {}
    for n in range(1, n_mid):
        i_n, i_prev = trade_idx[n], trade_idx[n - 1]
        if i_n < 0 or i_prev < 0:
            continue
        s_n, s_prev = int(states[i_n]), int(states[i_prev])
        if s_n == s_prev:
            continue
        for h in range(1, horizons + 1):
            if n + h >= n_mid:
                break
            ret = sign * (mid_prices[n + h] / mid_prices[n] - 1.0) * 1e4
            samples.setdefault((h, s_n), []).append(ret)
    table = {}
    for key, vals in samples.items():
        arr = np.asarray(vals)
        mean = float(arr.mean())
        half = float(1.96 * arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("nan")
        table[key] = (mean, half, int(arr.size), arr.size < min_support)
    return table
