"""Hourly network delay states and sliding windows over them.

Three families of hourly aggregates are computed from realized flights:

* per OD pair, the average enroute-time excess ``(A_arr - A_dep) - (S_arr -
  S_dep)`` of flights arriving in the hour;
* per airport, the average arrival delay ``A_arr - S_arr`` of flights
  arriving in the hour;
* per airport, the average departure delay ``A_dep - S_dep`` of flights
  departing in the hour.

Hours are half-open UTC intervals ``[t, t + 1h)``; an event exactly on the
boundary belongs to the later interval. Delays are signed minutes (early
flights count negative). A cell with no qualifying flight holds 0 minutes,
with the qualifying-flight count kept in a parallel matrix for diagnostics.

OD cells aggregate only flights whose pair is in the index; airport cells
aggregate every flight touching an indexed airport, including flights whose
pair is outside the index.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from flighttime.features.network import NetworkIndex
from flighttime.ingest.records import FlightRecord

SECONDS_PER_HOUR = 3600


class InsufficientHistory(ValueError):
    """The flight log does not span the requested window."""


def _epoch_s(dt: datetime) -> int:
    return int(dt.timestamp())


def _require_hour_boundary(dt: datetime, label: str) -> int:
    s = _epoch_s(dt)
    if s % SECONDS_PER_HOUR != 0:
        raise ValueError(f"{label} must be an exact UTC hour boundary, got {dt}")
    return s // SECONDS_PER_HOUR


def hour_floor(dt: datetime) -> datetime:
    return dt.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)


@dataclass
class FlightArrays:
    """Column-major view of realized flights, aligned with input order."""

    od_idx: np.ndarray  # int64, -1 when the pair is not indexed
    origin_idx: np.ndarray  # int64, -1 when the airport is not indexed
    dest_idx: np.ndarray
    sched_dep_s: np.ndarray  # int64 epoch seconds
    sched_arr_s: np.ndarray
    actual_dep_s: np.ndarray
    actual_arr_s: np.ndarray

    @property
    def n(self) -> int:
        return len(self.od_idx)

    @property
    def enroute_excess_min(self) -> np.ndarray:
        diff = (self.actual_arr_s - self.actual_dep_s) - (self.sched_arr_s - self.sched_dep_s)
        return diff.astype(np.float64) / 60.0

    @property
    def arrival_delay_min(self) -> np.ndarray:
        return (self.actual_arr_s - self.sched_arr_s).astype(np.float64) / 60.0

    @property
    def departure_delay_min(self) -> np.ndarray:
        return (self.actual_dep_s - self.sched_dep_s).astype(np.float64) / 60.0


def flights_to_arrays(flights: Sequence[FlightRecord], index: NetworkIndex) -> FlightArrays:
    n = len(flights)
    od_idx = np.full(n, -1, dtype=np.int64)
    origin_idx = np.full(n, -1, dtype=np.int64)
    dest_idx = np.full(n, -1, dtype=np.int64)
    cols = {name: np.zeros(n, dtype=np.int64) for name in
            ("sched_dep_s", "sched_arr_s", "actual_dep_s", "actual_arr_s")}
    for i, f in enumerate(flights):
        if f.actual_dep is None or f.actual_arr is None:
            raise ValueError(f"flight {f.flight_id} lacks actual times")
        if index.has_od(f.origin, f.destination):
            od_idx[i] = index.od_pos(f.origin, f.destination)
        o = index.airport_pos(f.origin)
        d = index.airport_pos(f.destination)
        origin_idx[i] = -1 if o is None else o
        dest_idx[i] = -1 if d is None else d
        cols["sched_dep_s"][i] = _epoch_s(f.sched_dep)
        cols["sched_arr_s"][i] = _epoch_s(f.sched_arr)
        cols["actual_dep_s"][i] = _epoch_s(f.actual_dep)
        cols["actual_arr_s"][i] = _epoch_s(f.actual_arr)
    return FlightArrays(od_idx=od_idx, origin_idx=origin_idx, dest_idx=dest_idx, **cols)


def od_delay(
    flights: Sequence[FlightRecord],
    od: tuple[str, str],
    interval: tuple[datetime, datetime],
) -> float:
    """Average enroute-time excess of flights on `od` arriving in `interval`.

    `interval` is half-open. Returns 0 when no flight qualifies.
    """
    start, end = interval
    total, count = 0.0, 0
    for f in flights:
        if f.od == od and f.actual_arr is not None and start <= f.actual_arr < end:
            sched = (f.sched_arr - f.sched_dep).total_seconds()
            actual = (f.actual_arr - f.actual_dep).total_seconds()
            total += (actual - sched) / 60.0
            count += 1
    return total / count if count else 0.0


def airport_delays(
    flights: Sequence[FlightRecord],
    airport: str,
    interval: tuple[datetime, datetime],
) -> tuple[float, float]:
    """(average arrival delay, average departure delay) in minutes for one hour.

    Arrival delay averages flights arriving at `airport` in `interval`;
    departure delay averages flights departing it in `interval`. Empty sets
    yield 0.
    """
    start, end = interval
    arr_total, arr_count = 0.0, 0
    dep_total, dep_count = 0.0, 0
    for f in flights:
        if f.destination == airport and f.actual_arr is not None and start <= f.actual_arr < end:
            arr_total += (f.actual_arr - f.sched_arr).total_seconds() / 60.0
            arr_count += 1
        if f.origin == airport and f.actual_dep is not None and start <= f.actual_dep < end:
            dep_total += (f.actual_dep - f.sched_dep).total_seconds() / 60.0
            dep_count += 1
    return (
        arr_total / arr_count if arr_count else 0.0,
        dep_total / dep_count if dep_count else 0.0,
    )


@dataclass
class DelayStateWindow:
    """Delay states for the ``n_t`` hours before an hour boundary ``as_of``.

    Row ``r`` (0-based) covers the hour ``[as_of - (r+1)h, as_of - r*1h)``,
    so row 0 is the most recent hour. Count matrices mirror the value
    matrices with the number of qualifying flights per cell.
    """

    od: np.ndarray  # (n_t, n_od) minutes
    arr: np.ndarray  # (n_t, n_airports)
    dep: np.ndarray  # (n_t, n_airports)
    od_count: np.ndarray
    arr_count: np.ndarray
    dep_count: np.ndarray
    as_of: datetime
    timestep_hours: float = 1.0

    @property
    def n_t(self) -> int:
        return self.od.shape[0]

    def row_interval(self, row: int) -> tuple[datetime, datetime]:
        end = self.as_of - timedelta(hours=row)
        return end - timedelta(hours=1), end


class HourlyDelayTable:
    """Hourly delay aggregates over a declared coverage period.

    Rows are clock hours ``[period_start, period_end)``; windows are slices
    of this table, so every window built from one table shares column
    identity and summation order. Per-cell sums run over qualifying flights
    in input (file) order.
    """

    def __init__(
        self,
        index: NetworkIndex,
        period_start: datetime,
        period_end: datetime,
        od: np.ndarray,
        arr: np.ndarray,
        dep: np.ndarray,
        od_count: np.ndarray,
        arr_count: np.ndarray,
        dep_count: np.ndarray,
    ):
        self.index = index
        self.period_start = period_start
        self.period_end = period_end
        self.hour0 = _require_hour_boundary(period_start, "period_start")
        self.n_hours = od.shape[0]
        self.od = od
        self.arr = arr
        self.dep = dep
        self.od_count = od_count
        self.arr_count = arr_count
        self.dep_count = dep_count

    @classmethod
    def from_flights(
        cls,
        flights: Sequence[FlightRecord],
        index: NetworkIndex,
        period_start: datetime,
        period_end: datetime,
    ) -> "HourlyDelayTable":
        hour0 = _require_hour_boundary(period_start, "period_start")
        hour1 = _require_hour_boundary(period_end, "period_end")
        n_hours = hour1 - hour0
        if n_hours <= 0:
            raise ValueError("period_end must be after period_start")
        fa = flights_to_arrays(flights, index)
        shape_od = (n_hours, index.n_od)
        shape_ap = (n_hours, index.n_airports)
        od = np.zeros(shape_od)
        od_count = np.zeros(shape_od, dtype=np.int64)
        arr = np.zeros(shape_ap)
        arr_count = np.zeros(shape_ap, dtype=np.int64)
        dep = np.zeros(shape_ap)
        dep_count = np.zeros(shape_ap, dtype=np.int64)

        _accumulate(fa.actual_arr_s, fa.od_idx, fa.enroute_excess_min, hour0, od, od_count)
        _accumulate(fa.actual_arr_s, fa.dest_idx, fa.arrival_delay_min, hour0, arr, arr_count)
        _accumulate(fa.actual_dep_s, fa.origin_idx, fa.departure_delay_min, hour0, dep, dep_count)
        return cls(index, period_start, period_end, od, arr, dep, od_count, arr_count, dep_count)

    def window(self, as_of: datetime, n_t: int) -> DelayStateWindow:
        """Window of the `n_t` hours ending at the hour boundary `as_of`."""
        as_of_hour = _require_hour_boundary(as_of, "as_of")
        newest = as_of_hour - 1 - self.hour0  # table row of the hour ending at as_of
        oldest = as_of_hour - n_t - self.hour0
        if oldest < 0 or newest >= self.n_hours:
            raise InsufficientHistory(
                f"window [{as_of - timedelta(hours=n_t)}, {as_of}) outside table coverage "
                f"[{self.period_start}, {self.period_end})"
            )
        rows = np.arange(newest, oldest - 1, -1)  # row 0 = most recent hour
        return DelayStateWindow(
            od=self.od[rows].copy(),
            arr=self.arr[rows].copy(),
            dep=self.dep[rows].copy(),
            od_count=self.od_count[rows].copy(),
            arr_count=self.arr_count[rows].copy(),
            dep_count=self.dep_count[rows].copy(),
            as_of=as_of,
        )


def _accumulate(
    event_s: np.ndarray,
    col_idx: np.ndarray,
    delays: np.ndarray,
    hour0: int,
    out: np.ndarray,
    out_count: np.ndarray,
) -> None:
    """Fill per-(hour, column) means; per-cell sums run in input order."""
    n_hours = out.shape[0]
    hours = event_s // SECONDS_PER_HOUR - hour0
    ok = (hours >= 0) & (hours < n_hours) & (col_idx >= 0)
    order = np.argsort(hours[ok], kind="stable")
    sel = np.nonzero(ok)[0][order]
    bounds = np.searchsorted(hours[sel], np.arange(n_hours + 1))
    for h in range(n_hours):
        bucket = sel[bounds[h] : bounds[h + 1]]
        if bucket.size == 0:
            continue
        for k in np.unique(col_idx[bucket]):
            members = bucket[col_idx[bucket] == k]
            out[h, k] = np.sum(delays[members]) / members.size
            out_count[h, k] = members.size


class DemandCounter:
    """Scheduled departure/arrival counts per airport over one-hour lookbacks."""

    def __init__(self, flights: Sequence[FlightRecord]):
        deps: dict[str, list[int]] = {}
        arrs: dict[str, list[int]] = {}
        for f in flights:
            deps.setdefault(f.origin, []).append(_epoch_s(f.sched_dep))
            arrs.setdefault(f.destination, []).append(_epoch_s(f.sched_arr))
        self._deps = {a: sorted(v) for a, v in deps.items()}
        self._arrs = {a: sorted(v) for a, v in arrs.items()}

    def counts(self, airport: str, as_of: datetime) -> tuple[int, int]:
        """(departure demand, arrival demand) in ``[as_of - 1h, as_of)``."""
        t1 = _epoch_s(as_of)
        t0 = t1 - SECONDS_PER_HOUR
        dep_times = self._deps.get(airport, [])
        arr_times = self._arrs.get(airport, [])
        dep = bisect_left(dep_times, t1) - bisect_left(dep_times, t0)
        arr = bisect_left(arr_times, t1) - bisect_left(arr_times, t0)
        return dep, arr


def demand_counts(
    flights: Sequence[FlightRecord], airport: str, as_of: datetime
) -> tuple[int, int]:
    """Direct-filter demand counts; see `DemandCounter` for the indexed form."""
    t1 = as_of
    t0 = as_of - timedelta(hours=1)
    dep = sum(1 for f in flights if f.origin == airport and t0 <= f.sched_dep < t1)
    arr = sum(1 for f in flights if f.destination == airport and t0 <= f.sched_arr < t1)
    return dep, arr
