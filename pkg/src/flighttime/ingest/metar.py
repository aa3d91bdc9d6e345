"""METAR decoding into the weather variables consumed by the model.

A report is reduced to seven adopted variables: wind direction, wind speed,
wind gust, cloud coverage, cloud height, visibility, and a VMC flag derived
from visibility and ceiling. Everything else in the report (temperature,
pressure, trend groups, remarks) is skipped.
"""

from __future__ import annotations

import enum
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

logger = logging.getLogger(__name__)

#: Visibility value encoding "10 km or more".
MAX_VISIBILITY_M = 9999.0
#: Cloud-height sentinel when no cloud layer is reported, keeps vectors fixed-width.
NO_CLOUD_HEIGHT_FT = 99999.0
#: Sentinel level for variable ("VRB") wind direction in the categorical encoding.
VARIABLE_WIND_DIRECTION = -1.0

#: VMC minima: visibility and ceiling thresholds, both inclusive. Configurable
#: via `vmc_rule` arguments.
VMC_MIN_VISIBILITY_M = 5000.0
VMC_MIN_CEILING_FT = 1500.0

KNOTS_PER_MPS = 1.9438444924406046

_STATION_RE = re.compile(r"^[A-Z]{4}$")
_TIME_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})Z$")
_WIND_RE = re.compile(r"^(\d{3}|VRB)(\d{2,3})(?:G(\d{2,3}))?(KT|MPS)$")
_VIS_RE = re.compile(r"^(\d{4})(?:[NSEW]{1,2})?$")
_CLOUD_RE = re.compile(r"^(FEW|SCT|BKN|OVC)(\d{3})(?:CB|TCU)?$")
_VV_RE = re.compile(r"^VV(\d{3})$")
_NO_CLOUD_TOKENS = frozenset({"NSC", "SKC", "CLR", "NCD"})


class MalformedMetar(ValueError):
    """A mandatory group (station, time, wind, visibility) is missing or unparseable."""


class MissingWeather(LookupError):
    """No observation at or before the requested time for the station."""


class CloudCover(enum.IntEnum):
    """Coverage of a cloud layer, ordered by oktas."""

    NONE = 0
    FEW = 1
    SCATTERED = 2
    BROKEN = 3
    OVERCAST = 4


_COVER_BY_CODE = {
    "FEW": CloudCover.FEW,
    "SCT": CloudCover.SCATTERED,
    "BKN": CloudCover.BROKEN,
    "OVC": CloudCover.OVERCAST,
}


@dataclass(frozen=True)
class RawMetar:
    """One undecoded report: station, issue day-of-month/time, and the raw body."""

    station: str
    day: int
    hour: int
    minute: int
    body: str

    def __post_init__(self):
        if not _STATION_RE.match(self.station):
            raise MalformedMetar(f"bad station {self.station!r}")
        if not self.body.strip():
            raise MalformedMetar("empty METAR body")
        if not (1 <= self.day <= 31 and 0 <= self.hour <= 23 and 0 <= self.minute <= 59):
            raise MalformedMetar(
                f"bad issue time {self.day:02d}{self.hour:02d}{self.minute:02d}Z"
            )


@dataclass(frozen=True)
class WeatherObservation:
    """Decoded weather variables for one airport at one time.

    The numeric vector form (`to_vector`) has exactly ``N_WEATHER_VARS``
    entries, ordered as in `VECTOR_FIELDS`. Sentinels: variable wind
    direction -> `VARIABLE_WIND_DIRECTION`, no cloud -> `NO_CLOUD_HEIGHT_FT`
    and coverage NONE, absent gust -> 0.
    """

    wind_direction: float  # degrees true [0, 360), or VARIABLE_WIND_DIRECTION
    wind_speed: float  # knots
    wind_gust: float  # knots, 0 when absent
    cloud_cover: CloudCover
    cloud_height_ft: float
    visibility_m: float
    vmc: bool

    def __post_init__(self):
        if self.wind_direction != VARIABLE_WIND_DIRECTION and not (
            0.0 <= self.wind_direction < 360.0
        ):
            raise ValueError(f"wind direction out of range: {self.wind_direction}")
        if self.wind_speed < 0 or self.wind_gust < 0:
            raise ValueError("negative wind speed/gust")
        if self.wind_gust > 0 and self.wind_gust < self.wind_speed:
            raise ValueError("gust below sustained wind speed")
        if not (0.0 <= self.visibility_m <= MAX_VISIBILITY_M):
            raise ValueError(f"visibility out of range: {self.visibility_m}")
        if self.cloud_height_ft < 0:
            raise ValueError("negative cloud height")

    VECTOR_FIELDS = (
        "wind_direction",
        "wind_speed",
        "wind_gust",
        "cloud_cover",
        "cloud_height_ft",
        "visibility_m",
        "vmc",
    )

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                self.wind_direction,
                self.wind_speed,
                self.wind_gust,
                float(self.cloud_cover),
                self.cloud_height_ft,
                self.visibility_m,
                1.0 if self.vmc else 0.0,
            ],
            dtype=np.float64,
        )


#: Number of adopted weather variables per airport.
N_WEATHER_VARS = len(WeatherObservation.VECTOR_FIELDS)


def vmc_rule(
    visibility_m: float,
    ceiling_ft: float,
    min_visibility_m: float = VMC_MIN_VISIBILITY_M,
    min_ceiling_ft: float = VMC_MIN_CEILING_FT,
) -> bool:
    """Visual meteorological conditions: visibility and ceiling at or above minima.

    `ceiling_ft` is the height of the lowest broken/overcast layer;
    pass ``math.inf`` when no such layer exists.
    """
    if visibility_m < 0 or ceiling_ft < 0:
        raise ValueError("visibility and ceiling must be non-negative")
    return visibility_m >= min_visibility_m and ceiling_ft >= min_ceiling_ft


def raw_metar_from_line(line: str) -> RawMetar:
    """Split one report line into a `RawMetar`, validating the mandatory prefix."""
    body = line.strip()
    if body.endswith("="):
        body = body[:-1].rstrip()
    tokens = body.split()
    if tokens and tokens[0] in ("METAR", "SPECI"):
        tokens = tokens[1:]
    if len(tokens) < 2:
        raise MalformedMetar(f"too few groups in {line!r}")
    station = tokens[0]
    m = _TIME_RE.match(tokens[1])
    if not _STATION_RE.match(station):
        raise MalformedMetar(f"bad station {station!r}")
    if not m:
        raise MalformedMetar(f"bad time group {tokens[1]!r}")
    return RawMetar(
        station=station,
        day=int(m.group(1)),
        hour=int(m.group(2)),
        minute=int(m.group(3)),
        body=" ".join(tokens),
    )


def parse_metar(raw: RawMetar) -> WeatherObservation:
    """Decode the adopted variables from a raw report.

    The lowest reported cloud layer supplies coverage and height; the ceiling
    used for the VMC flag is the lowest broken/overcast layer (vertical
    visibility counts as overcast). Unconsumed groups are skipped; everything
    after RMK is ignored.
    """
    # body starts with the station and time groups already validated upstream
    tokens = raw.body.split()[2:]

    wind = None
    visibility = None
    cavok = False
    layers: list[tuple[CloudCover, float]] = []
    vv_ceiling = None
    skipped: list[str] = []

    for tok in tokens:
        if tok == "RMK":
            break
        if wind is None:
            m = _WIND_RE.match(tok)
            if m:
                direction, speed, gust, unit = m.groups()
                spd = float(speed)
                gst = float(gust) if gust else 0.0
                if unit == "MPS":
                    spd *= KNOTS_PER_MPS
                    gst *= KNOTS_PER_MPS
                if direction == "VRB":
                    wdir = VARIABLE_WIND_DIRECTION
                else:
                    wdir = float(int(direction)) % 360.0
                if gst > 0 and gst < spd:
                    raise MalformedMetar(f"gust below speed in {tok!r}")
                wind = (wdir, spd, gst)
                continue
        if visibility is None and not cavok:
            if tok == "CAVOK":
                cavok = True
                visibility = MAX_VISIBILITY_M
                continue
            m = _VIS_RE.match(tok)
            if m and wind is not None:
                visibility = min(float(int(m.group(1))), MAX_VISIBILITY_M)
                continue
        if tok in _NO_CLOUD_TOKENS:
            continue
        m = _CLOUD_RE.match(tok)
        if m:
            layers.append((_COVER_BY_CODE[m.group(1)], float(int(m.group(2)) * 100)))
            continue
        m = _VV_RE.match(tok)
        if m:
            vv_ceiling = float(int(m.group(1)) * 100)
            continue
        skipped.append(tok)

    if wind is None:
        raise MalformedMetar(f"no wind group in {raw.body!r}")
    if visibility is None:
        raise MalformedMetar(f"no visibility group in {raw.body!r}")
    if skipped:
        logger.debug("skipped METAR groups %s in %r", skipped, raw.body)

    if layers:
        lowest = min(layers, key=lambda c: c[1])
        cover, height = lowest
    elif vv_ceiling is not None:
        cover, height = CloudCover.OVERCAST, vv_ceiling
    else:
        cover, height = CloudCover.NONE, NO_CLOUD_HEIGHT_FT

    ceiling = math.inf
    for c, h in layers:
        if c in (CloudCover.BROKEN, CloudCover.OVERCAST):
            ceiling = min(ceiling, h)
    if vv_ceiling is not None:
        ceiling = min(ceiling, vv_ceiling)

    return WeatherObservation(
        wind_direction=wind[0],
        wind_speed=wind[1],
        wind_gust=wind[2],
        cloud_cover=cover,
        cloud_height_ft=height,
        visibility_m=visibility,
        vmc=vmc_rule(visibility, ceiling),
    )


@dataclass
class MetarLoadReport:
    """Accounting for one archive load: every input line is parsed or counted."""

    lines_in: int = 0
    reports_out: int = 0
    malformed: int = 0
    malformed_examples: list[str] = field(default_factory=list)


class MetarArchive:
    """Time-indexed decoded observations, one series per station.

    Raw issue times carry only day-of-month and HH:MM, so absolute timestamps
    are resolved against an anchor date: each report gets the earliest UTC
    timestamp at or after the station's previous report (or the anchor) whose
    day-of-month matches. Files spanning month boundaries resolve correctly as
    long as per-station gaps stay under one month.
    """

    def __init__(self):
        self._series: dict[str, list[tuple[datetime, WeatherObservation]]] = {}

    @classmethod
    def from_lines(cls, lines, anchor: datetime) -> tuple["MetarArchive", MetarLoadReport]:
        if anchor.tzinfo is None:
            raise ValueError("anchor must be timezone-aware UTC")
        archive = cls()
        report = MetarLoadReport()
        last_seen: dict[str, datetime] = {}
        for line in lines:
            if not line.strip():
                continue
            report.lines_in += 1
            try:
                raw = raw_metar_from_line(line)
                obs = parse_metar(raw)
            except MalformedMetar as exc:
                report.malformed += 1
                if len(report.malformed_examples) < 5:
                    report.malformed_examples.append(str(exc))
                continue
            ref = last_seen.get(raw.station, anchor)
            when = _resolve_day_time(ref, raw.day, raw.hour, raw.minute)
            last_seen[raw.station] = when
            archive._series.setdefault(raw.station, []).append((when, obs))
            report.reports_out += 1
        for series in archive._series.values():
            series.sort(key=lambda p: p[0])
        return archive, report

    @classmethod
    def from_file(cls, path, anchor: datetime) -> tuple["MetarArchive", MetarLoadReport]:
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(fh, anchor)

    @property
    def stations(self) -> tuple[str, ...]:
        return tuple(sorted(self._series))

    def at_or_before(self, station: str, when: datetime) -> WeatherObservation:
        """Latest observation at or before `when`; raises `MissingWeather` if none."""
        series = self._series.get(station)
        if not series:
            raise MissingWeather(f"no observations for {station}")
        lo, hi = 0, len(series)
        while lo < hi:
            mid = (lo + hi) // 2
            if series[mid][0] <= when:
                lo = mid + 1
            else:
                hi = mid
        if lo == 0:
            raise MissingWeather(f"no observation for {station} at or before {when}")
        return series[lo - 1][1]


def _resolve_day_time(reference: datetime, day: int, hour: int, minute: int) -> datetime:
    """Earliest UTC timestamp >= reference with the given day-of-month and time."""
    probe = reference.date()
    for _ in range(64):
        if probe.day == day:
            candidate = datetime(
                probe.year, probe.month, probe.day, hour, minute, tzinfo=timezone.utc
            )
            if candidate >= reference:
                return candidate
        probe = probe + timedelta(days=1)
    raise MalformedMetar(f"cannot resolve day-of-month {day} near {reference}")
