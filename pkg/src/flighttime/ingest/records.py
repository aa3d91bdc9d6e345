"""Flight-record table I/O.

Carrier format: comma-delimited text with a header row, timestamps in
ISO-8601 UTC (``2017-01-05T06:30:00Z``), fuel and weight quantities in kg,
distance in meters, planned flight time in minutes. Rows with a missing or
invalid required field are dropped and counted, never silently ignored.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

_ICAO_RE = re.compile(r"^[A-Z]{4}$")

COLUMNS = (
    "flight_id",
    "origin",
    "destination",
    "aircraft_type",
    "sched_dep",
    "sched_arr",
    "actual_dep",
    "actual_arr",
    "planned_flight_time",
    "fuel_loading_fps",
    "mission_fuel_fps",
    "consumed_fuel",
    "reserve_fuel",
    "taxi_fuel",
    "fixed_fuel",
    "zfw",
    "distance",
)

_FUEL_FIELDS = (
    "fuel_loading_fps",
    "mission_fuel_fps",
    "consumed_fuel",
    "reserve_fuel",
    "taxi_fuel",
    "fixed_fuel",
    "zfw",
)


class SchemaMismatch(ValueError):
    """The file header does not contain the documented columns."""


@dataclass(frozen=True)
class FlightRecord:
    """One flight's schedule, actuals, fuel quantities, weights, and route."""

    flight_id: str
    origin: str
    destination: str
    aircraft_type: str
    sched_dep: datetime
    sched_arr: datetime
    actual_dep: Optional[datetime]
    actual_arr: Optional[datetime]
    planned_flight_time: float  # minutes
    fuel_loading_fps: float  # kg
    mission_fuel_fps: float  # kg
    consumed_fuel: float  # kg
    reserve_fuel: float  # kg
    taxi_fuel: float  # kg
    fixed_fuel: float  # kg
    zfw: float  # kg
    distance: float  # meters

    def __post_init__(self):
        if not self.flight_id:
            raise ValueError("empty flight_id")
        for code in (self.origin, self.destination):
            if not _ICAO_RE.match(code):
                raise ValueError(f"bad airport code {code!r}")
        if self.sched_arr <= self.sched_dep:
            raise ValueError("sched_arr must be after sched_dep")
        if self.actual_dep is not None and self.actual_arr is not None:
            if self.actual_arr <= self.actual_dep:
                raise ValueError("actual_arr must be after actual_dep")
        if self.planned_flight_time <= 0:
            raise ValueError("non-positive planned flight time")
        for name in _FUEL_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"negative {name}")
        if self.distance <= 0:
            raise ValueError("non-positive distance")

    @property
    def od(self) -> tuple[str, str]:
        return (self.origin, self.destination)

    @property
    def actual_flight_time(self) -> float:
        """Actual enroute time in minutes (requires actual times)."""
        return (self.actual_arr - self.actual_dep).total_seconds() / 60.0

    @property
    def arrival_delay(self) -> float:
        """Arrival delay in minutes, signed (early flights negative)."""
        return (self.actual_arr - self.sched_arr).total_seconds() / 60.0


@dataclass
class DropReport:
    """Row accounting for one load: rows_in == rows_out + rows_dropped."""

    rows_in: int = 0
    rows_out: int = 0
    reasons: Counter = None

    def __post_init__(self):
        if self.reasons is None:
            self.reasons = Counter()

    @property
    def rows_dropped(self) -> int:
        return self.rows_in - self.rows_out


def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 timestamp, requiring an explicit UTC designator."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} lacks a UTC offset")
    return dt.astimezone(timezone.utc)


def format_utc(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _record_from_row(row: dict) -> FlightRecord:
    for col in COLUMNS:
        if row.get(col) in (None, ""):
            raise ValueError(f"missing {col}")
    return FlightRecord(
        flight_id=row["flight_id"],
        origin=row["origin"],
        destination=row["destination"],
        aircraft_type=row["aircraft_type"],
        sched_dep=parse_utc(row["sched_dep"]),
        sched_arr=parse_utc(row["sched_arr"]),
        actual_dep=parse_utc(row["actual_dep"]),
        actual_arr=parse_utc(row["actual_arr"]),
        planned_flight_time=float(row["planned_flight_time"]),
        fuel_loading_fps=float(row["fuel_loading_fps"]),
        mission_fuel_fps=float(row["mission_fuel_fps"]),
        consumed_fuel=float(row["consumed_fuel"]),
        reserve_fuel=float(row["reserve_fuel"]),
        taxi_fuel=float(row["taxi_fuel"]),
        fixed_fuel=float(row["fixed_fuel"]),
        zfw=float(row["zfw"]),
        distance=float(row["distance"]),
    )


def load_flight_records(path) -> tuple[list[FlightRecord], DropReport]:
    """Load records in file order, dropping and counting invalid rows."""
    report = DropReport()
    records: list[FlightRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise SchemaMismatch(f"missing columns: {', '.join(missing)}")
        for row in reader:
            report.rows_in += 1
            try:
                records.append(_record_from_row(row))
                report.rows_out += 1
            except (ValueError, TypeError) as exc:
                report.reasons[str(exc).split(":")[0]] += 1
    return records, report


def write_flight_records(path, records: Sequence[FlightRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.flight_id,
                    r.origin,
                    r.destination,
                    r.aircraft_type,
                    format_utc(r.sched_dep),
                    format_utc(r.sched_arr),
                    format_utc(r.actual_dep),
                    format_utc(r.actual_arr),
                    repr(r.planned_flight_time),
                    repr(r.fuel_loading_fps),
                    repr(r.mission_fuel_fps),
                    repr(r.consumed_fuel),
                    repr(r.reserve_fuel),
                    repr(r.taxi_fuel),
                    repr(r.fixed_fuel),
                    repr(r.zfw),
                    repr(r.distance),
                ]
            )
