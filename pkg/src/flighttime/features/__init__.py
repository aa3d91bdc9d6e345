"""Network delay-state features and per-flight sample assembly."""

from flighttime.features.assemble import (
    AssembledSample,
    AssemblyReport,
    FLIGHT_INFO_CATEGORICAL,
    FLIGHT_INFO_ORDER,
    assemble_sample,
    assemble_samples,
)
from flighttime.features.dataset import (
    DatasetSchema,
    FeatureDataset,
    encode_samples,
    fit_schema,
    load_split,
    save_split,
)
from flighttime.features.delay_states import (
    DelayStateWindow,
    DemandCounter,
    FlightArrays,
    HourlyDelayTable,
    InsufficientHistory,
    airport_delays,
    demand_counts,
    flights_to_arrays,
    hour_floor,
    od_delay,
)
from flighttime.features.network import IndexMismatch, NetworkIndex, UnknownOdPair

__all__ = [
    "AssembledSample",
    "AssemblyReport",
    "DatasetSchema",
    "DelayStateWindow",
    "DemandCounter",
    "FLIGHT_INFO_CATEGORICAL",
    "FLIGHT_INFO_ORDER",
    "FeatureDataset",
    "FlightArrays",
    "HourlyDelayTable",
    "IndexMismatch",
    "InsufficientHistory",
    "NetworkIndex",
    "UnknownOdPair",
    "airport_delays",
    "assemble_sample",
    "assemble_samples",
    "demand_counts",
    "encode_samples",
    "fit_schema",
    "flights_to_arrays",
    "hour_floor",
    "load_split",
    "od_delay",
    "save_split",
]
