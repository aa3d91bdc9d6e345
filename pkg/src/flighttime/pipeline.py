"""End-to-end wiring: raw world files -> encoded, split datasets -> model config."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from flighttime.features.assemble import AssemblyReport, assemble_samples
from flighttime.features.dataset import (
    DatasetSchema,
    FeatureDataset,
    encode_samples,
    fit_schema,
)
from flighttime.features.delay_states import HourlyDelayTable
from flighttime.features.network import NetworkIndex
from flighttime.ingest.metar import MetarArchive
from flighttime.ingest.records import FlightRecord, load_flight_records, parse_utc
from flighttime.model import ModelConfig
from flighttime.synth import SyntheticWorld, load_metadata
from flighttime.train import TrainConfig, label_outliers, stratified_split


@dataclass
class DatasetBundle:
    """Split, encoded datasets plus everything needed to interpret them."""

    train: FeatureDataset
    val: FeatureDataset
    test: FeatureDataset
    schema: DatasetSchema
    index: NetworkIndex
    assembly: AssemblyReport
    labels: np.ndarray  # outlier flags over all assembled samples
    splits: tuple[np.ndarray, np.ndarray, np.ndarray]


def build_bundle(
    records: list[FlightRecord],
    index: NetworkIndex,
    archive: MetarArchive,
    period_start,
    period_end,
    n_t: int,
    seed: int,
) -> DatasetBundle:
    """Assemble, label, split (3:1:1 stratified), fit stats on train, encode."""
    table = HourlyDelayTable.from_flights(records, index, period_start, period_end)
    samples, report = assemble_samples(records, table, archive, index, n_t)
    if not samples:
        raise ValueError("no assemblable samples in the period")
    fdt = np.array([s.arrival_delay for s in samples])
    groups = [(s.origin, s.destination, s.aircraft_type) for s in samples]
    labels = label_outliers(fdt, groups)
    tr, va, te = stratified_split(labels, seed)
    schema = fit_schema([samples[i] for i in tr], index.fingerprint, n_t)
    encode = lambda idx: encode_samples([samples[i] for i in idx], schema, labels[idx])
    return DatasetBundle(
        train=encode(tr),
        val=encode(va),
        test=encode(te),
        schema=schema,
        index=index,
        assembly=report,
        labels=labels,
        splits=(tr, va, te),
    )


def bundle_from_world(world: SyntheticWorld, n_t: int, seed: int) -> DatasetBundle:
    archive, _ = MetarArchive.from_lines(world.metar_lines, world.period_start)
    return build_bundle(
        world.records, world.index, archive, world.period_start, world.period_end, n_t, seed
    )


def load_world_dir(world_dir):
    """(records, index, archive, metadata) from a written world directory."""
    metadata = load_metadata(world_dir)
    index = NetworkIndex.from_json(metadata["index"])
    records, _ = load_flight_records(os.path.join(world_dir, "flights.csv"))
    start = parse_utc(metadata["period_start"])
    archive, _ = MetarArchive.from_file(os.path.join(world_dir, "metar.txt"), start)
    return records, index, archive, metadata


def bundle_from_dir(world_dir, n_t: int, seed: int) -> DatasetBundle:
    from datetime import timedelta

    records, index, archive, metadata = load_world_dir(world_dir)
    start = parse_utc(metadata["period_start"])
    end = start + timedelta(hours=metadata["latent_hours"])
    return build_bundle(records, index, archive, start, end, n_t, seed)


def model_config_for(bundle: DatasetBundle, cfg: TrainConfig, with_swl: bool = True) -> ModelConfig:
    """Architecture dims implied by the encoded data plus layer hyperparameters."""
    return ModelConfig(
        n_od=bundle.index.n_od,
        n_airports=bundle.index.n_airports,
        n_t=bundle.schema.n_t,
        n_weather=bundle.schema.n_weather,
        n_flight_info=bundle.schema.n_flight_info,
        leaky_slope=cfg.leaky_slope,
        dropout_rate=cfg.dropout_rate,
        with_swl=with_swl,
    )
