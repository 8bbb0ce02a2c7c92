"""
Exchange session ingestion, quarterly profitability panels and pool statistics.

Profitability is expressed in percent of the share's nominal (par) value.
Means come from the raw quarterly series; covariances come from the series
with their least-squares linear trend removed.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    MalformedRow,
    MissingQuarter,
    NonPositivePrice,
    SeriesTooShort,
    WindowTooSmall,
)

QUOTES_HEADER = ("security_id", "session_date", "price", "nominal")


@dataclass(frozen=True)
class SessionRecord:
    security_id: str
    session_date: dt.date
    price: float
    nominal: float


@dataclass(frozen=True)
class ReturnPanel:
    """Quarterly profitability, one row per stage and one column per security."""

    securities: tuple[str, ...]
    stages: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=float)
        object.__setattr__(self, "securities", tuple(self.securities))
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "returns", returns)
        if returns.ndim != 2 or returns.shape != (len(self.stages), len(self.securities)):
            raise ValueError(
                f"returns shape {returns.shape} does not match "
                f"{len(self.stages)} stages x {len(self.securities)} securities"
            )
        if len(self.securities) < 2 or len(self.stages) < 2:
            raise ValueError("a return panel needs at least 2 securities and 2 stages")
        if any(a >= b for a, b in zip(self.stages, self.stages[1:])):
            raise ValueError("stage labels must be strictly increasing")

    @property
    def n_stages(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class AssetStats:
    securities: tuple[str, ...]
    means: np.ndarray
    covariance: np.ndarray
    window: tuple[int, int] = (0, 0)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "securities", tuple(self.securities))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance", cov)
        n = len(self.securities)
        if means.shape != (n,) or cov.shape != (n, n):
            raise ValueError("means/covariance shapes do not match the security list")
        scale = np.max(np.abs(cov)) if cov.size else 0.0
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        if np.any(np.diag(cov) < 0):
            raise ValueError("covariance matrix has a negative variance")

    @property
    def risks(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def subset(self, keep: Sequence[int]) -> "AssetStats":
        keep = list(keep)
        return AssetStats(
            securities=tuple(self.securities[i] for i in keep),
            means=self.means[keep],
            covariance=self.covariance[np.ix_(keep, keep)],
            window=self.window,
        )


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    # binary file-like
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def parse_quotes(source) -> list[SessionRecord]:
    """
    Parse a quotes CSV (``security_id,session_date,price,nominal``).

    ``source`` may be bytes, a binary or text stream, or the CSV text itself.
    Line numbers in errors are 1-based and count the header.
    """
    reader = csv.reader(_text_stream(source))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != QUOTES_HEADER:
        raise MalformedRow(1, f"expected header {','.join(QUOTES_HEADER)}")
    records = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise MalformedRow(line, f"expected 4 fields, got {len(row)}")
        sid, date_s, price_s, nominal_s = (c.strip() for c in row)
        if not sid:
            raise MalformedRow(line, "empty security_id")
        try:
            date = dt.date.fromisoformat(date_s)
            price = float(price_s)
            nominal = float(nominal_s)
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        if not (np.isfinite(price) and np.isfinite(nominal)):
            raise MalformedRow(line, "non-finite number")
        if price <= 0:
            raise NonPositivePrice(line, f"price {price_s}")
        if nominal <= 0:
            raise NonPositivePrice(line, f"nominal {nominal_s}")
        records.append(SessionRecord(sid, date, price, nominal))
    return records


def quarter_of(date: dt.date, fiscal_offset: int = 0) -> tuple[int, int]:
    """(year, quarter) of ``date`` after shifting it forward by ``fiscal_offset`` months."""
    month_index = date.year * 12 + (date.month - 1) + fiscal_offset
    year, month0 = divmod(month_index, 12)
    return year, month0 // 3 + 1


def quarter_label(year: int, quarter: int) -> str:
    return f"{year:04d}Q{quarter}"


def _quarter_range(first: tuple[int, int], last: tuple[int, int]) -> list[tuple[int, int]]:
    out = []
    y, q = first
    while (y, q) <= last:
        out.append((y, q))
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)
    return out


def quarterly_returns(sessions: Iterable[SessionRecord], fiscal_offset: int = 0) -> ReturnPanel:
    """
    Average per-session profitability ``100 * (price - nominal) / nominal`` by quarter.

    Securities keep their order of first appearance. Every quarter between the
    earliest and latest session must be covered by every security.
    """
    buckets: dict[str, dict[tuple[int, int], list[float]]] = {}
    for rec in sessions:
        q = quarter_of(rec.session_date, fiscal_offset)
        value = 100.0 * (rec.price - rec.nominal) / rec.nominal
        buckets.setdefault(rec.security_id, {}).setdefault(q, []).append(value)
    if not buckets:
        raise SeriesTooShort("no sessions to aggregate")
    all_quarters = [q for per in buckets.values() for q in per]
    quarters = _quarter_range(min(all_quarters), max(all_quarters))
    securities = list(buckets)
    returns = np.empty((len(quarters), len(securities)))
    for j, sid in enumerate(securities):
        for t, q in enumerate(quarters):
            values = buckets[sid].get(q)
            if not values:
                raise MissingQuarter(sid, quarter_label(*q))
            returns[t, j] = sum(values) / len(values)
    return ReturnPanel(securities, [quarter_label(*q) for q in quarters], returns)


def select_window(panel: ReturnPanel, drop_prefix: int) -> ReturnPanel:
    if drop_prefix < 0:
        raise ValueError("drop_prefix must be non-negative")
    if panel.n_stages - drop_prefix < 2:
        raise WindowTooSmall(
            f"dropping {drop_prefix} of {panel.n_stages} stages leaves fewer than 2"
        )
    return ReturnPanel(
        panel.securities, panel.stages[drop_prefix:], panel.returns[drop_prefix:]
    )


def detrend(series) -> np.ndarray:
    """Residuals of ``series`` about its least-squares line over t = 1..S."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("detrend expects a 1-D series")
    if y.size < 3:
        raise SeriesTooShort(f"need at least 3 points to detrend, got {y.size}")
    t = np.arange(1, y.size + 1, dtype=float)
    tc = t - t.mean()
    yc = y - y.mean()
    slope = np.dot(tc, yc) / np.dot(tc, tc)
    resid = yc - slope * tc
    # second pass removes the rounding left by the first
    resid -= resid.mean()
    resid -= (np.dot(tc, resid) / np.dot(tc, tc)) * tc
    return resid


def compute_stats(panel: ReturnPanel, window: tuple[int, int] | None = None) -> AssetStats:
    """Raw means and the (S - 1)-divisor covariance of the detrended returns."""
    if panel.n_stages < 3:
        raise SeriesTooShort(f"need at least 3 stages, got {panel.n_stages}")
    raw = panel.returns
    resid = np.column_stack([detrend(raw[:, j]) for j in range(raw.shape[1])])
    cov = resid.T @ resid / (panel.n_stages - 1)
    cov = 0.5 * (cov + cov.T)
    return AssetStats(
        securities=panel.securities,
        means=raw.mean(axis=0),
        covariance=cov,
        window=window if window is not None else (0, panel.n_stages),
    )


def expanding_stats(panel: ReturnPanel, min_stages: int = 4) -> list[tuple[str, AssetStats]]:
    """Stats over rows ``[0, t]`` for every stage t with at least ``min_stages`` rows available."""
    if min_stages < 3:
        raise ValueError("min_stages must be at least 3")
    if panel.n_stages < min_stages:
        raise WindowTooSmall(
            f"panel has {panel.n_stages} stages, expanding window needs {min_stages}"
        )
    out = []
    for stop in range(min_stages, panel.n_stages + 1):
        sub = ReturnPanel(panel.securities, panel.stages[:stop], panel.returns[:stop])
        out.append((panel.stages[stop - 1], compute_stats(sub, window=(0, stop))))
    return out


def read_stats_csv(source) -> AssetStats:
    """
    Read a stats CSV: header ``security_id,mean,<id_1>,...,<id_n>``, then one row
    per security carrying its mean and its covariance row.
    """
    reader = csv.reader(_text_stream(source))
    header = [h.strip() for h in next(reader, [])]
    if header[:2] != ["security_id", "mean"]:
        raise MalformedRow(1, "expected header starting with security_id,mean")
    ids = header[2:]
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if len(rows) != len(ids):
        raise MalformedRow(1, f"{len(ids)} covariance columns but {len(rows)} rows")
    means, cov = [], []
    for line, row in enumerate(rows, start=2):
        if len(row) != len(ids) + 2:
            raise MalformedRow(line, "bad field count")
        if row[0].strip() != ids[line - 2]:
            raise MalformedRow(line, "row order must match covariance column order")
        try:
            means.append(float(row[1]))
            cov.append([float(c) for c in row[2:]])
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
    return AssetStats(tuple(ids), np.array(means), np.array(cov))


def write_stats_csv(stats: AssetStats, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["security_id", "mean", *stats.securities])
    for i, sid in enumerate(stats.securities):
        writer.writerow([sid, repr(float(stats.means[i])), *(repr(float(v)) for v in stats.covariance[i])])
