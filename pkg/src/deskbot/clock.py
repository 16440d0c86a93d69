"""Logical runtime clock.

All timestamps in the runtime are logical ticks, never wall time, so that
any run can be replayed bit-for-bit. The clock also carries a simulated
time-of-day used by temporal conditions ("HH:MM" windows); by default one
tick advances the simulated day by 60 seconds.
"""

from __future__ import annotations

from deskbot.errors import ParseError


def parse_hhmm(text: str) -> int:
    """Parse "HH:MM" into seconds since midnight."""
    parts = text.split(":")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ParseError(f"bad time-of-day literal: {text!r}")
    hours, minutes = int(parts[0]), int(parts[1])
    if hours > 23 or minutes > 59:
        raise ParseError(f"time-of-day out of range: {text!r}")
    return hours * 3600 + minutes * 60


def format_hhmm(seconds: int) -> str:
    seconds = seconds % 86400
    return f"{seconds // 3600:02d}:{(seconds % 3600) // 60:02d}"


class LogicalClock:
    """Monotone tick counter plus simulated time-of-day."""

    def __init__(self, seconds_per_tick: int = 60, time_of_day: str = "08:00"):
        self.tick = 0
        self.seconds_per_tick = seconds_per_tick
        self.tod_seconds = parse_hhmm(time_of_day)

    @property
    def time_of_day(self) -> str:
        return format_hhmm(self.tod_seconds)

    def set_time(self, hhmm: str) -> None:
        self.tod_seconds = parse_hhmm(hhmm)

    def advance(self) -> int:
        self.tick += 1
        self.tod_seconds = (self.tod_seconds + self.seconds_per_tick) % 86400
        return self.tick

    def in_window(self, start: str, end: str) -> bool:
        """True when time-of-day falls in [start, end).

        Windows may wrap midnight (22:00-06:00). Equal endpoints denote the
        single minute at `start`.
        """
        now = self.tod_seconds
        lo, hi = parse_hhmm(start), parse_hhmm(end)
        if lo == hi:
            return now // 60 == lo // 60
        if lo < hi:
            return lo <= now < hi
        return now >= lo or now < hi
