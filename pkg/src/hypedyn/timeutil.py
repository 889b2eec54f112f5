"""Week identifiers and mapping of post times onto trading days."""

from __future__ import annotations

import bisect
import datetime as dt
from typing import Sequence
from zoneinfo import ZoneInfo

from .errors import ValidationError

MARKET_TZ = ZoneInfo("America/New_York")
MARKET_CLOSE = dt.time(16, 0, 0)


def iso_week(day: dt.date) -> str:
    """ISO-8601 week label such as ``2021-W03``."""
    year, week, _ = day.isocalendar()
    return f"{year}-W{week:02d}"


def week_ordinal(label: str) -> int:
    """Consecutive integer for an ISO week label (one per week)."""
    try:
        year, week = label.split("-W")
        monday = dt.date.fromisocalendar(int(year), int(week), 1)
    except (ValueError, AttributeError) as exc:
        raise ValidationError(f"not an ISO week label: {label!r}") from exc
    return monday.toordinal() // 7


def local_market_time(timestamp_utc: float) -> dt.datetime:
    return dt.datetime.fromtimestamp(float(timestamp_utc), tz=dt.timezone.utc).astimezone(MARKET_TZ)


class TradingCalendar:
    """Sorted set of trading dates supplied as data."""

    def __init__(self, dates: Sequence[dt.date]):
        days = sorted(set(dates))
        if not days:
            raise ValidationError("trading calendar is empty")
        self.days = days

    def next_on_or_after(self, day: dt.date) -> dt.date:
        if day < self.days[0]:
            raise ValidationError(f"{day} is before the start of the trading calendar")
        i = bisect.bisect_left(self.days, day)
        if i == len(self.days):
            raise ValidationError(f"{day} is beyond the end of the trading calendar")
        return self.days[i]


def align_to_trading_day(timestamp_utc: float, calendar: TradingCalendar) -> dt.date:
    """Trading date whose return a post at ``timestamp_utc`` can first affect.

    Times are read in New York local time. A post at or after 16:00:00 maps
    to the next trading day; a post on a non-trading day maps to the next
    trading day.
    """
    local = local_market_time(timestamp_utc)
    day = local.date()
    if local.time() >= MARKET_CLOSE:
        day += dt.timedelta(days=1)
    return calendar.next_on_or_after(day)
