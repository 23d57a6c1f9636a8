"""Metrics records, CSV schemas, and summary statistics.

Floats are written with repr() so parsing the CSV back recovers the exact
same doubles: summary statistics recomputed from the files match the
runner's reported summary exactly.
"""

import math

TICK_HEADER = "tick_ms,entity,owner,viewer,truth_x,truth_y,shown_x,shown_y,divergence_m,mode,route"
EVENT_HEADER = "event_seq,owner,viewer,local_playout_ms,remote_playout_ms,diff_ms"
DELIVERY_HEADER = "time_ms,sender,dest,entity,seq,delay_ms,critical"


def percentile(sorted_values, p: float):
    """Nearest-rank percentile of an ascending list."""
    if not sorted_values:
        return math.nan
    rank = math.ceil(p / 100.0 * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


class RunningStats:
    """Streaming mean/max over the exact values written to the CSV."""

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.maximum = None

    def add(self, value: float) -> None:
        self.count += 1
        self.total += value
        if self.maximum is None or value > self.maximum:
            self.maximum = value

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def max(self) -> float:
        return self.maximum if self.maximum is not None else math.nan


class CsvWriter:
    """Line-per-row CSV writer; no-op when no file is attached."""

    def __init__(self, fh, header: str):
        self._fh = fh
        if fh is not None:
            fh.write(header + "\n")

    def row(self, *fields) -> None:
        if self._fh is None:
            return
        self._fh.write(",".join(
            repr(f) if isinstance(f, float) else str(f) for f in fields) + "\n")


def format_summary(summary: dict) -> str:
    lines = []
    for key in sorted(summary):
        value = summary[key]
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
