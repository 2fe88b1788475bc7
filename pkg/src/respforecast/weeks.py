"""ISO-8601 week helpers. A week is a ``(iso_year, iso_week)`` tuple."""

from __future__ import annotations

import datetime as dt
import re

Week = tuple[int, int]

_WEEK_RE = re.compile(r"^(\d{4})-W(\d{2})$")


def week_of(day: dt.date) -> Week:
    iso = day.isocalendar()
    return (iso[0], iso[1])


def monday(week: Week) -> dt.date:
    return dt.date.fromisocalendar(week[0], week[1], 1)


def next_week(week: Week) -> Week:
    return week_of(monday(week) + dt.timedelta(days=7))


def weeks_in_year(year: int) -> int:
    # Dec 28 always falls in the last ISO week of its year.
    return dt.date(year, 12, 28).isocalendar()[1]


def week_range(first: Week, last: Week) -> list[Week]:
    """All weeks from ``first`` to ``last`` inclusive."""
    out = []
    week = first
    while week <= last:
        out.append(week)
        week = next_week(week)
    return out


def year_span(first_year: int, last_year: int) -> tuple[Week, Week]:
    return (first_year, 1), (last_year, weeks_in_year(last_year))


def format_week(week: Week) -> str:
    return f"{week[0]:04d}-W{week[1]:02d}"


def parse_week(text: str) -> Week:
    m = _WEEK_RE.match(text.strip())
    if not m:
        raise ValueError(f"not an ISO week label: {text!r}")
    week = (int(m.group(1)), int(m.group(2)))
    if not 1 <= week[1] <= weeks_in_year(week[0]):
        raise ValueError(f"week number out of range: {text!r}")
    return week
