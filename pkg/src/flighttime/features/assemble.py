"""Per-flight model-input assembly.

A sample is built one hour before the scheduled departure: the delay-state
window is anchored at the last completed clock hour at or before that
instant, origin weather is the latest report at or before the prediction
instant, destination weather the latest report at or before the scheduled
arrival, and demand counts cover the hour ending at the prediction instant.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np

from flighttime.features.delay_states import (
    DelayStateWindow,
    DemandCounter,
    HourlyDelayTable,
    hour_floor,
)
from flighttime.features.network import NetworkIndex
from flighttime.ingest.metar import MetarArchive
from flighttime.ingest.records import FlightRecord

#: Raw flight-information features, in encoding order.
FLIGHT_INFO_ORDER = (
    "origin",
    "destination",
    "aircraft_type",
    "planned_flight_time",
    "sched_dep_minute_of_day",
    "sched_arr_minute_of_day",
    "hour_of_day",
    "day_of_week",
    "month",
    "departure_demand",
    "arrival_demand",
)

#: Flight-information features encoded as one-hot categoricals.
FLIGHT_INFO_CATEGORICAL = (
    "origin",
    "destination",
    "aircraft_type",
    "hour_of_day",
    "day_of_week",
    "month",
)


@dataclass
class AssembledSample:
    """Everything the model sees for one flight, plus the training target."""

    flight_id: str
    od_index: int
    window: DelayStateWindow
    weather: np.ndarray  # concatenated [origin obs, destination obs]
    flight_info: dict
    target: Optional[float]  # actual enroute minutes; None at inference
    prediction_time: datetime
    origin: str
    destination: str
    aircraft_type: str
    arrival_delay: Optional[float]  # minutes, for outlier grouping


def assemble_sample(
    flight: FlightRecord,
    table: HourlyDelayTable,
    archive: MetarArchive,
    demand: DemandCounter,
    index: NetworkIndex,
    n_t: int,
) -> AssembledSample:
    """Assemble one sample; raises UnknownOdPair, InsufficientHistory, MissingWeather."""
    od_index = index.od_pos(flight.origin, flight.destination)
    prediction_time = flight.sched_dep - timedelta(hours=1)
    window = table.window(hour_floor(prediction_time), n_t)

    wx_origin = archive.at_or_before(flight.origin, prediction_time)
    wx_dest = archive.at_or_before(flight.destination, flight.sched_arr)
    weather = np.concatenate([wx_origin.to_vector(), wx_dest.to_vector()])

    dep_demand, _ = demand.counts(flight.origin, prediction_time)
    _, arr_demand = demand.counts(flight.destination, prediction_time)

    sd = flight.sched_dep
    sa = flight.sched_arr
    info = {
        "origin": flight.origin,
        "destination": flight.destination,
        "aircraft_type": flight.aircraft_type,
        "planned_flight_time": flight.planned_flight_time,
        "sched_dep_minute_of_day": sd.hour * 60 + sd.minute + sd.second / 60.0,
        "sched_arr_minute_of_day": sa.hour * 60 + sa.minute + sa.second / 60.0,
        "hour_of_day": sd.hour,
        "day_of_week": sd.weekday(),
        "month": sd.month,
        "departure_demand": dep_demand,
        "arrival_demand": arr_demand,
    }

    has_actuals = flight.actual_dep is not None and flight.actual_arr is not None
    return AssembledSample(
        flight_id=flight.flight_id,
        od_index=od_index,
        window=window,
        weather=weather,
        flight_info=info,
        target=flight.actual_flight_time if has_actuals else None,
        prediction_time=prediction_time,
        origin=flight.origin,
        destination=flight.destination,
        aircraft_type=flight.aircraft_type,
        arrival_delay=flight.arrival_delay if has_actuals else None,
    )


@dataclass
class AssemblyReport:
    flights_in: int = 0
    samples_out: int = 0
    skipped_unknown_od: int = 0
    skipped_no_history: int = 0
    skipped_no_weather: int = 0


def assemble_samples(
    flights: Sequence[FlightRecord],
    table: HourlyDelayTable,
    archive: MetarArchive,
    index: NetworkIndex,
    n_t: int,
    schedule: Sequence[FlightRecord] | None = None,
) -> tuple[list[AssembledSample], AssemblyReport]:
    """Assemble every eligible flight, skipping and counting the rest.

    `schedule` is the flight set used for demand counts; it defaults to
    `flights` and may include flights outside the indexed network.
    """
    from flighttime.features.delay_states import InsufficientHistory
    from flighttime.features.network import UnknownOdPair
    from flighttime.ingest.metar import MissingWeather

    demand = DemandCounter(schedule if schedule is not None else flights)
    report = AssemblyReport()
    samples: list[AssembledSample] = []
    for flight in flights:
        report.flights_in += 1
        try:
            samples.append(assemble_sample(flight, table, archive, demand, index, n_t))
            report.samples_out += 1
        except UnknownOdPair:
            report.skipped_unknown_od += 1
        except InsufficientHistory:
            report.skipped_no_history += 1
        except MissingWeather:
            report.skipped_no_weather += 1
    return samples, report
