"""Outlier stratification, splitting, and the two-step training procedure.

Step 1 trains, for every route with enough samples, a throwaway full model
copy on that route's samples alone and harvests only the route's spatial
scale-and-bias vectors into a shared bank. Step 2 freezes the bank, draws a
fresh downstream network, and trains it on the merged, shuffled training set
with Adam, keeping the parameters from the best-validation epoch.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from flighttime.features.dataset import FeatureDataset
from flighttime.model import ModelConfig, NonFiniteActivation, SpatialWeightedRnn, SwlBank
from flighttime.nn.optim import Adam

logger = logging.getLogger(__name__)

#: Window lengths exercised by the timestep sensitivity sweep.
SWEEP_TIMESTEPS = (2, 6, 12, 24, 36, 48)


class DivergenceDetected(RuntimeError):
    """Training loss went non-finite."""


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the model's reference setup."""

    batch_size: int = 256
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_t: int = 24
    leaky_slope: float = 0.01
    dropout_rate: float = 0.2
    seed: int = 0
    step1_epochs: int = 50
    step2_epochs: int = 100
    early_stop_patience: int = 15
    min_samples_per_od: int = 30
    threads: int = 1

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and f.name not in ("seed",) and value < 0:
                raise ValueError(f"negative {f.name}")
        if self.batch_size < 1 or self.step2_epochs < 1:
            raise ValueError("batch_size and step2_epochs must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        kwargs = {}
        casts = {f.name: f.type for f in fields(cls)}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in casts:
                raise ValueError(f"unknown config key {key!r}")
            raw = raw.strip().strip("'\"")
            kind = casts[key]
            if kind in ("int", int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def label_outliers(fdt: np.ndarray, groups: Sequence) -> np.ndarray:
    """Outlier flags: |delay - group mean| strictly above 2 group stddevs.

    Groups with fewer than 3 members default to normal; a zero-spread group
    flags only members off its mean.
    """
    fdt = np.asarray(fdt, dtype=np.float64)
    labels = np.zeros(len(fdt), dtype=bool)
    by_group: dict = {}
    for i, g in enumerate(groups):
        by_group.setdefault(g, []).append(i)
    for members in by_group.values():
        idx = np.array(members)
        if idx.size < 3:
            continue
        values = fdt[idx]
        mu = values.mean()
        sigma = values.std()
        labels[idx] = np.abs(values - mu) > 2.0 * sigma
    return labels


def stratified_split(
    labels: np.ndarray, seed: int, ratios: tuple[int, int, int] = (3, 1, 1)
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, exhaustive per-stratum split with a seeded shuffle."""
    labels = np.asarray(labels, dtype=bool)
    total = sum(ratios)
    parts: list[list[np.ndarray]] = [[], [], []]
    for stream, mask in ((1, labels), (2, ~labels)):
        idx = np.nonzero(mask)[0]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 300 + stream]))
        idx = idx[rng.permutation(idx.size)]
        n = idx.size
        n_train = round(n * ratios[0] / total)
        n_val = round(n * ratios[1] / total)
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    out = tuple(np.sort(np.concatenate(p)) for p in parts)
    return out  # train, val, test


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _rng_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _fit(
    model: SpatialWeightedRnn,
    train: FeatureDataset,
    cfg: TrainConfig,
    epochs: int,
    rng: np.random.Generator,
    val: FeatureDataset | None = None,
    patience: int | None = None,
) -> list[dict]:
    """Inner Adam loop; with a validation set, keeps the best-epoch parameters."""
    optimizer = Adam(
        model.trainable_parameters(),
        lr=cfg.learning_rate,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps=cfg.adam_eps,
    )
    history: list[dict] = []
    best_blob: bytes | None = None
    best_val = np.inf
    stale = 0
    for epoch in range(1, epochs + 1):
        losses = []
        for batch in _minibatches(train.n, cfg.batch_size, rng):
            try:
                losses.append(model.backward_batch(train, batch, rng=rng))
            except NonFiniteActivation as exc:
                raise DivergenceDetected(f"epoch {epoch}: {exc}") from exc
            optimizer.step()
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val is not None and val.n:
            err = model.predict(val) - val.y
            row["val_loss"] = float(np.mean(err**2))
            row["val_rmse"] = float(np.sqrt(row["val_loss"]))
            if row["val_loss"] < best_val:
                best_val = row["val_loss"]
                best_blob = model.to_bytes(adam_t=optimizer.t)
                stale = 0
            else:
                stale += 1
        history.append(row)
        if patience is not None and val is not None and stale > patience:
            logger.info("early stop at epoch %d (no val improvement)", epoch)
            break
    if best_blob is not None:
        model.restore(best_blob)
    return history


def pretrain_swl(
    train: FeatureDataset,
    model_config: ModelConfig,
    cfg: TrainConfig,
    schema_hash: str = "",
) -> SwlBank:
    """Step 1: per-route pretraining; harvest only the spatial vectors.

    Routes with fewer than `cfg.min_samples_per_od` training samples keep
    the identity initialization and are marked not pretrained.
    """
    bank = SwlBank(model_config.n_od, model_config.n_airports, model_config.n_od)
    jobs = []
    for od in range(model_config.n_od):
        mask = train.od_idx == od
        if int(mask.sum()) < cfg.min_samples_per_od:
            logger.info("route %d has %d samples; keeping identity vectors", od, int(mask.sum()))
            continue
        jobs.append((od, train.subset(mask)))

    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(
                pool.map(
                    _pretrain_one_od,
                    [(od, sub, model_config, cfg, schema_hash) for od, sub in jobs],
                )
            )
    else:
        results = [_pretrain_one_od((od, sub, model_config, cfg, schema_hash)) for od, sub in jobs]

    for od, row_values in results:
        bank.set_row(od, row_values)
        bank.pretrained[od] = True
    return bank


def _pretrain_one_od(args) -> tuple[int, dict[str, np.ndarray]]:
    od, subset, model_config, cfg, schema_hash = args
    rng_init = _rng_stream(cfg.seed, 101, od)
    model = SpatialWeightedRnn(model_config, rng_init, schema_hash=schema_hash, swl_rows=1)
    local = subset.subset(np.arange(subset.n))
    local.od_idx = np.zeros(subset.n, dtype=np.int64)  # single-row bank
    rng_train = _rng_stream(cfg.seed, 102, od)
    _fit(model, local, cfg, epochs=cfg.step1_epochs, rng=rng_train)
    return od, model.swl.get_row(0)


def train_full(
    train: FeatureDataset,
    val: FeatureDataset,
    bank: SwlBank | None,
    model_config: ModelConfig,
    cfg: TrainConfig,
    index_hash: str = "",
    schema_hash: str = "",
) -> tuple[SpatialWeightedRnn, list[dict]]:
    """Step 2 (or single-step / ablation): train the shared network.

    With a `bank`, its vectors are copied in and frozen; without one, the
    model trains in a single stage (its own banks learn jointly when the
    config has them, and the ablation config has none).
    """
    model = SpatialWeightedRnn(
        model_config, _rng_stream(cfg.seed, 201), index_hash=index_hash, schema_hash=schema_hash
    )
    if bank is not None:
        if model.swl is None:
            raise ValueError("cannot install a bank into a model without spatial layers")
        for mine, theirs in zip(model.swl.parameters(), bank.parameters()):
            mine.data[...] = theirs.data
        model.swl.pretrained = bank.pretrained.copy()
        model.swl.freeze_all()
    history = _fit(
        model,
        train,
        cfg,
        epochs=cfg.step2_epochs,
        rng=_rng_stream(cfg.seed, 202),
        val=val,
        patience=cfg.early_stop_patience,
    )
    return model, history


def train_two_step(
    train: FeatureDataset,
    val: FeatureDataset,
    model_config: ModelConfig,
    cfg: TrainConfig,
    index_hash: str = "",
    schema_hash: str = "",
) -> tuple[SpatialWeightedRnn, list[dict], SwlBank]:
    bank = pretrain_swl(train, model_config, cfg, schema_hash=schema_hash)
    model, history = train_full(
        train, val, bank, model_config, cfg, index_hash=index_hash, schema_hash=schema_hash
    )
    return model, history, bank


def timestep_sweep(
    build_datasets: Callable[[int], tuple[FeatureDataset, FeatureDataset]],
    model_config_for: Callable[[int], ModelConfig],
    cfg: TrainConfig,
    n_t_values: Sequence[int] = SWEEP_TIMESTEPS,
    two_step: bool = False,
) -> list[dict]:
    """Retrain per window length with a shared seed; rows sorted by n_t."""
    rows = []
    for n_t in sorted(n_t_values):
        train, val = build_datasets(n_t)
        mc = model_config_for(n_t)
        run_cfg = replace(cfg, n_t=n_t)
        if two_step:
            model, history, _ = train_two_step(train, val, mc, run_cfg)
        else:
            model, history = train_full(train, val, None, mc, run_cfg)
        best = min((h.get("val_rmse", np.inf) for h in history), default=np.inf)
        rows.append({"n_t": n_t, "val_rmse": float(best)})
    return rows
