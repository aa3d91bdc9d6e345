"""One-hot encoding and z-score normalization with frozen training statistics.

A codec is fit once on training data and then applied verbatim to every
split, so column identity and scaling are bit-identical across train,
validation, and test. Categorical features expand to one-hot groups with a
reserved ``__other__`` level that absorbs categories unseen at fit time;
numeric features are z-scored with population statistics. Constant numeric
columns are dropped (and logged) unless explicitly protected, in which case
they are centered and passed through with unit scale.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Collection, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
OTHER_LEVEL = "__other__"


def fit_zscore(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population standard deviation of a 2-D array."""
    x = np.asarray(values, dtype=np.float64)
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return mean, std


def apply_zscore(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Standardize with frozen stats; zero-spread columns pass through centered."""
    scale = np.where(std > 0.0, std, 1.0)
    return (np.asarray(values, dtype=np.float64) - mean) / scale


@dataclass(frozen=True)
class EncodedColumn:
    name: str
    kind: str  # "numeric" | "onehot"
    source: str
    level: str | None = None


class FeatureCodec:
    """Frozen mapping from raw feature rows to a fixed-width numeric matrix."""

    def __init__(
        self,
        columns: Sequence[EncodedColumn],
        levels: Mapping[str, Sequence[str]],
        means: Mapping[str, float],
        stds: Mapping[str, float],
        dropped: Sequence[str] = (),
    ):
        self.columns = tuple(columns)
        self.levels = {k: tuple(v) for k, v in levels.items()}
        self.means = dict(means)
        self.stds = dict(stds)
        self.dropped = tuple(dropped)

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def schema(self) -> tuple[tuple[str, str], ...]:
        return tuple((c.name, c.kind) for c in self.columns)

    def transform(self, rows: Sequence[Mapping]) -> np.ndarray:
        out = np.zeros((len(rows), self.width), dtype=np.float64)
        for j, col in enumerate(self.columns):
            if col.kind == "numeric":
                raw = np.array([float(r[col.source]) for r in rows], dtype=np.float64)
                std = self.stds[col.source]
                out[:, j] = (raw - self.means[col.source]) / (std if std > 0 else 1.0)
            else:
                known = set(self.levels[col.source])
                for i, r in enumerate(rows):
                    value = str(r[col.source])
                    if value not in known:
                        value = OTHER_LEVEL
                    if value == col.level:
                        out[i, j] = 1.0
        return out

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "columns": [
                {"name": c.name, "kind": c.kind, "source": c.source, "level": c.level}
                for c in self.columns
            ],
            "levels": {k: list(v) for k, v in self.levels.items()},
            "means": self.means,
            "stds": self.stds,
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "FeatureCodec":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported codec format_version {doc.get('format_version')}")
        return cls(
            columns=[EncodedColumn(**c) for c in doc["columns"]],
            levels=doc["levels"],
            means=doc["means"],
            stds=doc["stds"],
            dropped=doc.get("dropped", ()),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path) -> "FeatureCodec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def fit_codec(
    rows: Sequence[Mapping],
    feature_order: Sequence[str],
    categorical: Collection[str],
    protected: Collection[str] = (),
) -> FeatureCodec:
    """Fit a codec on training rows.

    `feature_order` fixes the source-feature ordering; categorical sources
    expand to sorted observed levels plus the reserved other-level.
    """
    if not rows:
        raise ValueError("cannot fit a codec on zero rows")
    categorical = set(categorical)
    protected = set(protected)
    columns: list[EncodedColumn] = []
    levels: dict[str, tuple[str, ...]] = {}
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    dropped: list[str] = []

    for source in feature_order:
        if source in categorical:
            observed = sorted({str(r[source]) for r in rows})
            levels[source] = tuple(observed) + (OTHER_LEVEL,)
            for level in levels[source]:
                columns.append(
                    EncodedColumn(name=f"{source}={level}", kind="onehot", source=source, level=level)
                )
        else:
            raw = np.array([float(r[source]) for r in rows], dtype=np.float64)
            mean = float(raw.mean())
            std = float(np.sqrt(((raw - mean) ** 2).mean()))
            if std == 0.0 and source not in protected:
                dropped.append(source)
                logger.info("dropping constant feature column %r", source)
                continue
            means[source] = mean
            stds[source] = std
            columns.append(EncodedColumn(name=source, kind="numeric", source=source))
    return FeatureCodec(columns, levels, means, stds, dropped)
