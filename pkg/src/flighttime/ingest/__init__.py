"""Raw-input parsing: METAR reports, flight-record tables, feature encoding."""

from flighttime.ingest.encoding import (
    FeatureCodec,
    apply_zscore,
    fit_codec,
    fit_zscore,
    OTHER_LEVEL,
)
from flighttime.ingest.metar import (
    CloudCover,
    MalformedMetar,
    MetarArchive,
    MissingWeather,
    N_WEATHER_VARS,
    RawMetar,
    WeatherObservation,
    parse_metar,
    raw_metar_from_line,
    vmc_rule,
)
from flighttime.ingest.records import (
    COLUMNS,
    DropReport,
    FlightRecord,
    SchemaMismatch,
    load_flight_records,
    write_flight_records,
)

__all__ = [
    "CloudCover",
    "COLUMNS",
    "DropReport",
    "FeatureCodec",
    "FlightRecord",
    "MalformedMetar",
    "MetarArchive",
    "MissingWeather",
    "N_WEATHER_VARS",
    "OTHER_LEVEL",
    "RawMetar",
    "SchemaMismatch",
    "WeatherObservation",
    "apply_zscore",
    "fit_codec",
    "fit_zscore",
    "load_flight_records",
    "parse_metar",
    "raw_metar_from_line",
    "vmc_rule",
    "write_flight_records",
]
