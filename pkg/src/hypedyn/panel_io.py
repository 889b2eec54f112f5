"""CSV ingestion, validation and weekly aggregation of forum and market data."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .timeutil import TradingCalendar, align_to_trading_day, iso_week, local_market_time

SUBMISSION_COLUMNS = ("submission_id", "author_id", "ticker", "timestamp_utc", "p_bull", "p_bear", "p_neutral")
COMMENT_COLUMNS = ("comment_id", "author_id", "submission_id", "timestamp_utc")
MARKET_COLUMNS = ("ticker", "date", "log_return", "volume", "market_cap")
CALENDAR_COLUMNS = ("date",)
SIMPLEX_TOL = 1e-6
BOT_POSTS_PER_MONTH = 100
WEEKLY_COLUMNS = (
    "ticker", "week", "A", "a", "s", "V_bench", "n_subs", "phi", "p_bull", "p_bear",
    "p_neutral", "rbar", "sigma2", "volume", "mcap",
)


@dataclass(frozen=True)
class SubmissionRecord:
    submission_id: str
    author_id: str
    ticker: str
    timestamp_utc: float
    p_bull: float
    p_bear: float
    p_neutral: float


@dataclass(frozen=True)
class CommentRecord:
    comment_id: str
    author_id: str
    submission_id: str
    timestamp_utc: float


@dataclass(frozen=True)
class MarketRecord:
    ticker: str
    date: dt.date
    log_return: float
    volume: float
    market_cap: float | None


def _float(value: str, name: str, line: int) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"line {line}: {name}={value!r} is not a number") from None
    if not math.isfinite(x):
        raise ValidationError(f"line {line}: {name} must be finite")
    return x


def _date(value: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ValidationError(f"line {line}: unparsable date {value!r}") from None


def _read(path, columns: Sequence[str]) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        rows = [(reader.line_num, row) for row in reader]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return rows


def _check_simplex(b: float, e: float, n: float, line: int) -> None:
    if min(b, e, n) < 0 or abs(b + e + n - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"line {line}: sentiment probabilities ({b}, {e}, {n}) are not on the simplex")


def load_submissions(path) -> list[SubmissionRecord]:
    out = []
    for line, row in _read(path, SUBMISSION_COLUMNS):
        b, e, n = (_float(row[c], c, line) for c in ("p_bull", "p_bear", "p_neutral"))
        _check_simplex(b, e, n, line)
        for c in ("submission_id", "author_id", "ticker"):
            if not row[c]:
                raise ValidationError(f"line {line}: empty {c}")
        out.append(
            SubmissionRecord(row["submission_id"], row["author_id"], row["ticker"],
                             _float(row["timestamp_utc"], "timestamp_utc", line), b, e, n)
        )
    return out


def load_comments(path) -> list[CommentRecord]:
    out = []
    for line, row in _read(path, COMMENT_COLUMNS):
        for c in ("comment_id", "author_id", "submission_id"):
            if not row[c]:
                raise ValidationError(f"line {line}: empty {c}")
        out.append(CommentRecord(row["comment_id"], row["author_id"], row["submission_id"],
                                 _float(row["timestamp_utc"], "timestamp_utc", line)))
    return out


def load_market(path) -> list[MarketRecord]:
    out = []
    for line, row in _read(path, MARKET_COLUMNS):
        cap = row["market_cap"]
        cap_value = None if cap in ("", None) else _float(cap, "market_cap", line)
        if cap_value is not None and cap_value <= 0:
            raise ValidationError(f"line {line}: market_cap must be positive")
        if not row["ticker"]:
            raise ValidationError(f"line {line}: empty ticker")
        out.append(
            MarketRecord(row["ticker"], _date(row["date"], line),
                         _float(row["log_return"], "log_return", line),
                         _float(row["volume"], "volume", line), cap_value)
        )
    return out


def load_calendar(path) -> TradingCalendar:
    return TradingCalendar([_date(row["date"], line) for line, row in _read(path, CALENDAR_COLUMNS)])


def _write(path, columns: Sequence[str], records: Iterable) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            values = []
            for c in columns:
                v = getattr(rec, c)
                if v is None:
                    values.append("")
                elif isinstance(v, float):
                    values.append(repr(v))
                elif isinstance(v, dt.date):
                    values.append(v.isoformat())
                else:
                    values.append(str(v))
            writer.writerow(values)


def write_submissions(path, records: Iterable[SubmissionRecord]) -> None:
    _write(path, SUBMISSION_COLUMNS, records)


def write_comments(path, records: Iterable[CommentRecord]) -> None:
    _write(path, COMMENT_COLUMNS, records)


def write_market(path, records: Iterable[MarketRecord]) -> None:
    _write(path, MARKET_COLUMNS, records)


def records_frame(records: Sequence) -> pd.DataFrame:
    if not records:
        return pd.DataFrame()
    names = [f.name for f in fields(records[0])]
    return pd.DataFrame([[getattr(r, n) for n in names] for r in records], columns=names)


def bot_authors(subs: pd.DataFrame, limit: int = BOT_POSTS_PER_MONTH) -> set:
    """Authors with more than ``limit`` submissions in some calendar month (New York time)."""
    if subs.empty:
        return set()
    months = [local_market_time(t).strftime("%Y-%m") for t in subs["timestamp_utc"]]
    counts = subs.assign(_month=months).groupby(["author_id", "_month"]).size()
    return set(counts[counts > limit].index.get_level_values(0))


def weekly_aggregate(
    submissions: Sequence[SubmissionRecord] | pd.DataFrame,
    market: Sequence[MarketRecord] | pd.DataFrame | None = None,
    calendar: TradingCalendar | None = None,
    benchmark_threshold: int = 31,
    comments: Sequence[CommentRecord] | pd.DataFrame | None = None,
    denominator: str = "authors",
    drop_bots: bool = True,
) -> pd.DataFrame:
    """Ticker-week panel of forum activity and market variables.

    Posts are placed on a trading day (when a calendar is given, otherwise
    on their New York calendar date) and bucketed by ISO week. Tickers with
    fewer than ``benchmark_threshold`` submissions over the whole sample
    form the benchmark group. ``A`` counts unique authors on a ticker,
    ``V_bench`` unique authors in the benchmark group, and the shares
    ``a = A / D`` and ``s = V_bench / D`` use ``D`` = the sum of those
    counts over all groups that week, so shares and benchmark sum to one.
    With ``denominator="authors+commenters"`` commenters who did not post
    that week are added to ``D``. ``phi`` is the mean of ``p_bull - p_bear``.
    Market columns are the mean (``rbar``) and sample variance (``sigma2``)
    of daily log returns, mean volume and mean market cap over the week.
    """
    if denominator not in ("authors", "authors+commenters"):
        raise ValidationError(f"unknown denominator {denominator!r}")
    subs = submissions if isinstance(submissions, pd.DataFrame) else records_frame(list(submissions))
    if subs.empty:
        return pd.DataFrame(columns=WEEKLY_COLUMNS)
    subs = subs.copy()
    if drop_bots:
        bots = bot_authors(subs)
        subs = subs[~subs["author_id"].isin(bots)]
    if subs.empty:
        return pd.DataFrame(columns=WEEKLY_COLUMNS)

    def day_of(t):
        return align_to_trading_day(t, calendar) if calendar else local_market_time(t).date()

    subs["week"] = [iso_week(day_of(t)) for t in subs["timestamp_utc"]]
    mentions = subs.groupby("ticker").size()
    small = set(mentions[mentions < benchmark_threshold].index)
    subs["group"] = np.where(subs["ticker"].isin(small), "__bench__", subs["ticker"])

    counts = subs.groupby(["week", "group"])["author_id"].nunique()
    denom = counts.groupby(level="week").sum().astype(float)
    if denominator == "authors+commenters" and comments is not None:
        com = comments if isinstance(comments, pd.DataFrame) else records_frame(list(comments))
        if not com.empty:
            com = com.assign(week=[iso_week(day_of(t)) for t in com["timestamp_utc"]])
            posters = subs.groupby("week")["author_id"].agg(set)
            for week, g in com.groupby("week"):
                if week in denom.index:
                    denom[week] += len(set(g["author_id"]) - posters.get(week, set()))
    bench = counts.xs("__bench__", level="group") if "__bench__" in counts.index.get_level_values("group") else pd.Series(dtype=float)

    named = subs[subs["group"] != "__bench__"]
    agg = named.assign(_net=named["p_bull"] - named["p_bear"]).groupby(["ticker", "week"]).agg(
        A=("author_id", "nunique"),
        n_subs=("submission_id", "size"),
        phi=("_net", "mean"),
        p_bull=("p_bull", "mean"),
        p_bear=("p_bear", "mean"),
        p_neutral=("p_neutral", "mean"),
    ).reset_index()
    agg["V_bench"] = agg["week"].map(bench).fillna(0).astype(int)
    agg["a"] = agg["A"] / agg["week"].map(denom)
    agg["s"] = agg["V_bench"] / agg["week"].map(denom)

    for col in ("rbar", "sigma2", "volume", "mcap"):
        agg[col] = np.nan
    if market is not None:
        mk = market if isinstance(market, pd.DataFrame) else records_frame(list(market))
        if not mk.empty:
            mk = mk.assign(week=[iso_week(d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d))) for d in mk["date"]])
            stats = mk.groupby(["ticker", "week"]).agg(
                rbar=("log_return", "mean"),
                sigma2=("log_return", lambda x: float(np.var(x, ddof=1)) if len(x) >= 2 else np.nan),
                volume=("volume", "mean"),
                mcap=("market_cap", "mean"),
            )
            agg = agg.drop(columns=["rbar", "sigma2", "volume", "mcap"]).join(stats, on=["ticker", "week"])
    agg = agg.sort_values(["ticker", "week"], kind="mergesort").reset_index(drop=True)
    return agg[list(WEEKLY_COLUMNS)]


def benchmark_shares(weekly: pd.DataFrame) -> pd.Series:
    """Benchmark share ``s`` per week."""
    return weekly.groupby("week")["s"].first()
