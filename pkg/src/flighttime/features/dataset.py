"""Encoded, normalized datasets and their on-disk form.

Normalization statistics are fit on the training split only and frozen into
a `DatasetSchema`; every split is encoded against that schema so column
identity is bit-identical across splits and runs. Window cells and weather
columns are structural model inputs and are therefore never dropped: a
zero-spread column is centered and passed through unchanged. Flight-info
features go through the generic codec (one-hot categoricals, z-scored
numerics, droppable constants).

Split files are comma-delimited text with a metadata first line carrying the
format version, the network-index fingerprint, and the schema fingerprint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from flighttime.features.assemble import (
    AssembledSample,
    FLIGHT_INFO_CATEGORICAL,
    FLIGHT_INFO_ORDER,
)
from flighttime.features.network import IndexMismatch
from flighttime.ingest.encoding import FeatureCodec, fit_codec, fit_zscore

FORMAT_VERSION = 1


@dataclass
class DatasetSchema:
    """Frozen encoding recipe: column layout plus training-set statistics."""

    index_hash: str
    n_t: int
    n_od: int
    n_airports: int
    window_mean: dict[str, np.ndarray]  # per branch, shape (n_t, cols)
    window_std: dict[str, np.ndarray]
    weather_mean: np.ndarray
    weather_std: np.ndarray
    flt_codec: FeatureCodec

    @property
    def n_weather(self) -> int:
        return len(self.weather_mean)

    @property
    def n_flight_info(self) -> int:
        return self.flt_codec.width

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "index_hash": self.index_hash,
            "n_t": self.n_t,
            "n_od": self.n_od,
            "n_airports": self.n_airports,
            "window_mean": {k: v.ravel().tolist() for k, v in self.window_mean.items()},
            "window_std": {k: v.ravel().tolist() for k, v in self.window_std.items()},
            "weather_mean": self.weather_mean.tolist(),
            "weather_std": self.weather_std.tolist(),
            "flight_info_codec": self.flt_codec.to_json(),
        }

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()
        ).hexdigest()

    @classmethod
    def from_json(cls, doc) -> "DatasetSchema":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported schema format_version {doc.get('format_version')}")
        n_t = doc["n_t"]
        cols = {"od": doc["n_od"], "arr": doc["n_airports"], "dep": doc["n_airports"]}
        return cls(
            index_hash=doc["index_hash"],
            n_t=n_t,
            n_od=doc["n_od"],
            n_airports=doc["n_airports"],
            window_mean={
                k: np.array(v).reshape(n_t, cols[k]) for k, v in doc["window_mean"].items()
            },
            window_std={
                k: np.array(v).reshape(n_t, cols[k]) for k, v in doc["window_std"].items()
            },
            weather_mean=np.array(doc["weather_mean"]),
            weather_std=np.array(doc["weather_std"]),
            flt_codec=FeatureCodec.from_json(doc["flight_info_codec"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class FeatureDataset:
    """Model-ready arrays for one split, all encoded against one schema."""

    ids: list[str]
    od_idx: np.ndarray  # (n,) int64
    window_od: np.ndarray  # (n, n_t, n_od), normalized
    window_arr: np.ndarray  # (n, n_t, n_airports)
    window_dep: np.ndarray
    weather: np.ndarray  # (n, 2 * n_weather_vars)
    flight_info: np.ndarray  # (n, width)
    y: np.ndarray  # (n,) actual enroute minutes
    outlier: np.ndarray  # (n,) bool
    planned: np.ndarray  # (n,) planned flight time in minutes (status-quo baseline)
    dep_time_s: np.ndarray  # (n,) scheduled departure, epoch seconds
    schema_hash: str

    @property
    def n(self) -> int:
        return len(self.ids)

    def subset(self, mask: np.ndarray) -> "FeatureDataset":
        idx = np.nonzero(mask)[0] if mask.dtype == bool else np.asarray(mask)
        return FeatureDataset(
            ids=[self.ids[i] for i in idx],
            od_idx=self.od_idx[idx],
            window_od=self.window_od[idx],
            window_arr=self.window_arr[idx],
            window_dep=self.window_dep[idx],
            weather=self.weather[idx],
            flight_info=self.flight_info[idx],
            y=self.y[idx],
            outlier=self.outlier[idx],
            planned=self.planned[idx],
            dep_time_s=self.dep_time_s[idx],
            schema_hash=self.schema_hash,
        )

    def flattened_features(self) -> np.ndarray:
        """Single flat feature matrix: window branches, weather, flight info."""
        n = self.n
        return np.concatenate(
            [
                self.window_od.reshape(n, -1),
                self.window_arr.reshape(n, -1),
                self.window_dep.reshape(n, -1),
                self.weather,
                self.flight_info,
            ],
            axis=1,
        )


def _window_stack(samples: Sequence[AssembledSample], branch: str) -> np.ndarray:
    return np.stack([getattr(s.window, branch) for s in samples])


def fit_schema(
    samples: Sequence[AssembledSample], index_hash: str, n_t: int
) -> DatasetSchema:
    """Fit normalization statistics and the flight-info codec on training samples."""
    if not samples:
        raise ValueError("cannot fit a schema on zero samples")
    window_mean, window_std = {}, {}
    for branch in ("od", "arr", "dep"):
        stack = _window_stack(samples, branch)
        mean, std = fit_zscore(stack.reshape(stack.shape[0], -1))
        window_mean[branch] = mean.reshape(stack.shape[1:])
        window_std[branch] = std.reshape(stack.shape[1:])
    weather_mean, weather_std = fit_zscore(np.stack([s.weather for s in samples]))
    codec = fit_codec(
        [s.flight_info for s in samples],
        FLIGHT_INFO_ORDER,
        FLIGHT_INFO_CATEGORICAL,
    )
    first = samples[0].window
    return DatasetSchema(
        index_hash=index_hash,
        n_t=n_t,
        n_od=first.od.shape[1],
        n_airports=first.arr.shape[1],
        window_mean=window_mean,
        window_std=window_std,
        weather_mean=weather_mean,
        weather_std=weather_std,
        flt_codec=codec,
    )


def encode_samples(
    samples: Sequence[AssembledSample],
    schema: DatasetSchema,
    outlier: np.ndarray | None = None,
) -> FeatureDataset:
    """Encode samples against a frozen schema."""
    n = len(samples)
    windows = {}
    for branch in ("od", "arr", "dep"):
        raw = _window_stack(samples, branch)
        std = schema.window_std[branch]
        windows[branch] = (raw - schema.window_mean[branch]) / np.where(std > 0, std, 1.0)
    wx_raw = np.stack([s.weather for s in samples])
    wx_std = np.where(schema.weather_std > 0, schema.weather_std, 1.0)
    weather = (wx_raw - schema.weather_mean) / wx_std
    flt = schema.flt_codec.transform([s.flight_info for s in samples])
    targets = np.array(
        [float("nan") if s.target is None else s.target for s in samples], dtype=np.float64
    )
    return FeatureDataset(
        ids=[s.flight_id for s in samples],
        od_idx=np.array([s.od_index for s in samples], dtype=np.int64),
        window_od=windows["od"],
        window_arr=windows["arr"],
        window_dep=windows["dep"],
        weather=weather,
        flight_info=flt,
        y=targets,
        outlier=np.zeros(n, dtype=bool) if outlier is None else np.asarray(outlier, dtype=bool),
        planned=np.array([s.flight_info["planned_flight_time"] for s in samples], dtype=np.float64),
        dep_time_s=np.array(
            [int(s.prediction_time.timestamp()) + 3600 for s in samples], dtype=np.int64
        ),
        schema_hash=schema.fingerprint,
    )


def save_split(path, dataset: FeatureDataset, schema: DatasetSchema, split: str) -> None:
    """Write one split as columnar text; first line is the file's metadata."""
    meta = {
        "format_version": FORMAT_VERSION,
        "index_hash": schema.index_hash,
        "schema_hash": dataset.schema_hash,
        "split": split,
        "n_t": schema.n_t,
    }
    names = (
        [f"od_r{r:02d}_c{c:03d}" for r in range(schema.n_t) for c in range(schema.n_od)]
        + [f"arr_r{r:02d}_c{c:03d}" for r in range(schema.n_t) for c in range(schema.n_airports)]
        + [f"dep_r{r:02d}_c{c:03d}" for r in range(schema.n_t) for c in range(schema.n_airports)]
        + [f"wx_{i:02d}" for i in range(schema.n_weather)]
        + [name for name, _ in schema.flt_codec.schema]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#flighttime-features " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(
            ",".join(
                ["flight_id", "od_index", "outlier", "target", "planned", "dep_time_s"] + names
            )
            + "\n"
        )
        flat = dataset.flattened_features()
        for i in range(dataset.n):
            row = [
                dataset.ids[i],
                str(int(dataset.od_idx[i])),
                str(int(dataset.outlier[i])),
                repr(float(dataset.y[i])),
                repr(float(dataset.planned[i])),
                str(int(dataset.dep_time_s[i])),
            ]
            row.extend(repr(v) for v in flat[i])
            fh.write(",".join(row) + "\n")


def load_split(path, schema: DatasetSchema) -> FeatureDataset:
    """Read one split back; validates format version and schema fingerprint."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#flighttime-features "):
            raise ValueError(f"{path} is not a feature-split file")
        meta = json.loads(header[len("#flighttime-features "):])
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported split format_version {meta['format_version']}")
        if meta["index_hash"] != schema.index_hash:
            raise IndexMismatch("split file was built under a different network index")
        if meta["schema_hash"] != schema.fingerprint:
            raise IndexMismatch("split file was built under a different schema")
        fh.readline()  # column header
        ids, od_idx, outlier, y, planned, dep_time, rows = [], [], [], [], [], [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            od_idx.append(int(parts[1]))
            outlier.append(bool(int(parts[2])))
            y.append(float(parts[3]))
            planned.append(float(parts[4]))
            dep_time.append(int(parts[5]))
            rows.append(np.array(parts[6:], dtype=np.float64))
    flat = np.stack(rows) if rows else np.zeros((0, 0))
    n = len(ids)
    n_t, n_od, n_ap = schema.n_t, schema.n_od, schema.n_airports
    sizes = [n_t * n_od, n_t * n_ap, n_t * n_ap, schema.n_weather, schema.n_flight_info]
    offs = np.cumsum([0] + sizes)
    return FeatureDataset(
        ids=ids,
        od_idx=np.array(od_idx, dtype=np.int64),
        window_od=flat[:, offs[0]: offs[1]].reshape(n, n_t, n_od),
        window_arr=flat[:, offs[1]: offs[2]].reshape(n, n_t, n_ap),
        window_dep=flat[:, offs[2]: offs[3]].reshape(n, n_t, n_ap),
        weather=flat[:, offs[3]: offs[4]],
        flight_info=flat[:, offs[4]: offs[5]],
        y=np.array(y, dtype=np.float64),
        outlier=np.array(outlier, dtype=bool),
        planned=np.array(planned, dtype=np.float64),
        dep_time_s=np.array(dep_time, dtype=np.int64),
        schema_hash=schema.fingerprint,
    )


def utcnow_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
