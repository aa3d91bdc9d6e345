"""The spatial-weighted recurrent network.

Three delay-state branches (per-route column scale-and-bias through a leaky
ReLU, then a two-layer stacked LSTM each), an affine weather branch, and the
raw flight-info vector are concatenated and regressed through a three-layer
MLP with batch normalization and dropout. The per-route scale-and-bias
vectors live in banks indexed by the sample's OD position; only the rows
selected by a batch receive gradients.

Checkpoints are single binary files: an 8-byte magic, a little-endian uint32
format version, a little-endian uint64 JSON header length, the JSON header
(dims, fingerprints, block table, freeze flags, optimizer step count), the
raw little-endian float64 block payloads in header order, and a trailing
SHA-256 of everything before it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from flighttime.features.dataset import FeatureDataset
from flighttime.features.network import IndexMismatch
from flighttime.nn.layers import BatchNorm, Linear, StackedLstm, dropout
from flighttime.nn.tensor import (
    Parameter,
    Tensor,
    add,
    concat,
    gather_rows,
    hadamard,
    leaky_relu,
    reshape,
)

CHECKPOINT_MAGIC = b"FTCKPT01"
CHECKPOINT_VERSION = 1


class VersionMismatch(ValueError):
    """Checkpoint format version unsupported by this build."""


class CorruptCheckpoint(ValueError):
    """Checkpoint checksum or structure is invalid."""


class NonFiniteActivation(FloatingPointError):
    """The forward pass produced a non-finite output."""


@dataclass
class ModelConfig:
    """Architecture dimensions and layer hyperparameters."""

    n_od: int
    n_airports: int
    n_t: int
    n_weather: int
    n_flight_info: int
    lstm_od_units: int = 40
    lstm_airport_units: int = 10
    lstm_layers: int = 2
    weather_units: int = 10
    mlp_units: tuple[int, ...] = (150, 100, 30)
    leaky_slope: float = 0.01
    dropout_rate: float = 0.2
    with_swl: bool = True

    @property
    def concat_dim(self) -> int:
        return (
            self.lstm_od_units
            + 2 * self.lstm_airport_units
            + self.weather_units
            + self.n_flight_info
        )

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["mlp_units"] = list(self.mlp_units)
        return doc

    @classmethod
    def from_json(cls, doc) -> "ModelConfig":
        doc = dict(doc)
        doc["mlp_units"] = tuple(doc["mlp_units"])
        return cls(**doc)


class SwlBank:
    """Per-route column scale-and-bias vectors for the three delay branches.

    Row l of each bank holds the vectors used by samples on route l. Banks
    start as the identity (scale 1, bias 0) so untrained routes pass delay
    states through unchanged up to the activation.
    """

    def __init__(self, n_od: int, n_airports: int, n_rows: int):
        self.n_rows = n_rows
        self.w_od = Parameter(np.ones((n_rows, n_od)), "swl.w_od")
        self.b_od = Parameter(np.zeros((n_rows, n_od)), "swl.b_od")
        self.w_arr = Parameter(np.ones((n_rows, n_airports)), "swl.w_arr")
        self.b_arr = Parameter(np.zeros((n_rows, n_airports)), "swl.b_arr")
        self.w_dep = Parameter(np.ones((n_rows, n_airports)), "swl.w_dep")
        self.b_dep = Parameter(np.zeros((n_rows, n_airports)), "swl.b_dep")
        self.frozen = np.zeros(n_rows, dtype=bool)
        self.pretrained = np.zeros(n_rows, dtype=bool)

    def parameters(self) -> list[Parameter]:
        return [self.w_od, self.b_od, self.w_arr, self.b_arr, self.w_dep, self.b_dep]

    @property
    def all_frozen(self) -> bool:
        return bool(self.frozen.all())

    def freeze_all(self) -> None:
        self.frozen[:] = True

    def zero_frozen_grads(self) -> None:
        """Clear gradient rows of frozen entries so they receive no update."""
        for p in self.parameters():
            if p.grad is not None:
                p.grad[self.frozen] = 0.0

    def set_row(self, row: int, values: dict[str, np.ndarray]) -> None:
        for key, arr in values.items():
            getattr(self, key).data[row] = arr

    def get_row(self, row: int) -> dict[str, np.ndarray]:
        return {
            key: getattr(self, key).data[row].copy()
            for key in ("w_od", "b_od", "w_arr", "b_arr", "w_dep", "b_dep")
        }


def swl_forward(
    window_od: np.ndarray,
    window_arr: np.ndarray,
    window_dep: np.ndarray,
    bank: SwlBank,
    row: int,
    slope: float = 0.01,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply route `row`'s scale-and-bias + leaky ReLU to raw window matrices."""
    def apply(x, w, b):
        z = x * w[None, :] + b[None, :]
        return np.where(z >= 0, z, slope * z)

    return (
        apply(window_od, bank.w_od.data[row], bank.b_od.data[row]),
        apply(window_arr, bank.w_arr.data[row], bank.b_arr.data[row]),
        apply(window_dep, bank.w_dep.data[row], bank.b_dep.data[row]),
    )


class SpatialWeightedRnn:
    """Full network: SWL banks, three LSTM branches, weather FCL, MLP head."""

    def __init__(
        self,
        config: ModelConfig,
        rng: np.random.Generator,
        index_hash: str = "",
        schema_hash: str = "",
        swl_rows: int | None = None,
    ):
        self.config = config
        self.index_hash = index_hash
        self.schema_hash = schema_hash
        self.swl_rows = swl_rows if swl_rows is not None else config.n_od
        c = config
        self.swl: Optional[SwlBank] = (
            SwlBank(c.n_od, c.n_airports, self.swl_rows) if c.with_swl else None
        )
        self.lstm_od = StackedLstm(c.n_od, c.lstm_od_units, c.lstm_layers, rng, "lstm_od")
        self.lstm_arr = StackedLstm(c.n_airports, c.lstm_airport_units, c.lstm_layers, rng, "lstm_arr")
        self.lstm_dep = StackedLstm(c.n_airports, c.lstm_airport_units, c.lstm_layers, rng, "lstm_dep")
        self.weather_fcl = Linear(c.n_weather, c.weather_units, rng, "weather_fcl")
        self.mlp_linears: list[Linear] = []
        self.mlp_bns: list[BatchNorm] = []
        prev = c.concat_dim
        for i, units in enumerate(c.mlp_units):
            self.mlp_linears.append(Linear(prev, units, rng, f"mlp.fc{i + 1}"))
            self.mlp_bns.append(BatchNorm(units, f"mlp.bn{i + 1}"))
            prev = units
        self.output = Linear(prev, 1, rng, "output")

    # ---------------- parameter bookkeeping ----------------

    def named_parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        if self.swl is not None:
            params.extend(self.swl.parameters())
        for part in (self.lstm_od, self.lstm_arr, self.lstm_dep):
            params.extend(part.parameters())
        params.extend(self.weather_fcl.parameters())
        for lin, bn in zip(self.mlp_linears, self.mlp_bns):
            params.extend(lin.parameters())
            params.extend(bn.parameters())
        params.extend(self.output.parameters())
        return params

    def trainable_parameters(self) -> list[Parameter]:
        """All parameters except fully frozen SWL banks."""
        params = self.named_parameters()
        if self.swl is not None and self.swl.all_frozen:
            bank = set(id(p) for p in self.swl.parameters())
            params = [p for p in params if id(p) not in bank]
        return params

    def named_state(self) -> list[tuple[str, np.ndarray]]:
        state = []
        for i, bn in enumerate(self.mlp_bns):
            state.append((f"mlp.bn{i + 1}.running_mean", bn.running_mean))
            state.append((f"mlp.bn{i + 1}.running_var", bn.running_var))
        return state

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_parameters())

    # ---------------- forward / backward ----------------

    def _branch_input(
        self,
        window: np.ndarray,
        w_bank: Optional[Parameter],
        b_bank: Optional[Parameter],
        od_idx: np.ndarray,
    ) -> Tensor:
        """(batch, time, cols) branch input, oldest hour first, SWL if present."""
        x = Tensor(np.ascontiguousarray(window[:, ::-1, :]))  # window row 0 is newest
        if w_bank is not None:
            w_sel = reshape(gather_rows(w_bank, od_idx), (window.shape[0], 1, window.shape[2]))
            b_sel = reshape(gather_rows(b_bank, od_idx), (window.shape[0], 1, window.shape[2]))
            x = leaky_relu(add(hadamard(x, w_sel), b_sel), self.config.leaky_slope)
        return x

    def forward_batch(
        self,
        window_od: np.ndarray,
        window_arr: np.ndarray,
        window_dep: np.ndarray,
        weather: np.ndarray,
        flight_info: np.ndarray,
        od_idx: np.ndarray,
        training: bool,
        rng: Optional[np.random.Generator] = None,
        update_running: bool = True,
    ) -> Tensor:
        """Predicted enroute minutes for a batch, shape (batch,)."""
        c = self.config
        swl = self.swl
        out_od = self.lstm_od.forward(
            self._branch_input(window_od, swl.w_od if swl else None, swl.b_od if swl else None, od_idx)
        )
        out_arr = self.lstm_arr.forward(
            self._branch_input(window_arr, swl.w_arr if swl else None, swl.b_arr if swl else None, od_idx)
        )
        out_dep = self.lstm_dep.forward(
            self._branch_input(window_dep, swl.w_dep if swl else None, swl.b_dep if swl else None, od_idx)
        )
        wx = self.weather_fcl.forward(Tensor(weather))
        x = concat([out_od, out_arr, out_dep, wx, Tensor(flight_info)], axis=1)
        for lin, bn in zip(self.mlp_linears, self.mlp_bns):
            x = lin.forward(x)
            x = bn.forward(x, training, update_running=update_running)
            x = leaky_relu(x, c.leaky_slope)
            if training:
                if rng is None:
                    raise ValueError("training forward requires an rng for dropout")
                x = dropout(x, c.dropout_rate, training, rng)
        y = self.output.forward(x)
        if not np.isfinite(y.data).all():
            raise NonFiniteActivation("non-finite model output")
        return y

    def forward_dataset(
        self,
        data: FeatureDataset,
        idx: np.ndarray,
        training: bool,
        rng: Optional[np.random.Generator] = None,
        update_running: bool = True,
    ) -> Tensor:
        return self.forward_batch(
            data.window_od[idx],
            data.window_arr[idx],
            data.window_dep[idx],
            data.weather[idx],
            data.flight_info[idx],
            data.od_idx[idx],
            training=training,
            rng=rng,
            update_running=update_running,
        )

    def predict(self, data: FeatureDataset, batch_size: int = 512) -> np.ndarray:
        """Eval-mode predictions for a whole dataset."""
        from flighttime.nn.tensor import no_grad

        out = np.zeros(data.n)
        with no_grad():
            for start in range(0, data.n, batch_size):
                idx = np.arange(start, min(start + batch_size, data.n))
                out[idx] = self.forward_dataset(data, idx, training=False).data.reshape(-1)
        return out

    def loss_batch(
        self,
        data: FeatureDataset,
        idx: np.ndarray,
        training: bool,
        rng: Optional[np.random.Generator] = None,
        update_running: bool = True,
    ) -> tuple[Tensor, Tensor]:
        """(MSE loss, predictions) for the rows `idx`."""
        from flighttime.nn.layers import mse_loss

        pred = self.forward_dataset(data, idx, training=training, rng=rng,
                                    update_running=update_running)
        return mse_loss(pred, data.y[idx]), pred

    def backward_batch(
        self,
        data: FeatureDataset,
        idx: np.ndarray,
        rng: np.random.Generator,
        training: bool = True,
    ) -> float:
        """Populate gradients (zeroing frozen SWL rows) and return the loss."""
        for p in self.named_parameters():
            p.zero_grad()
        loss, _ = self.loss_batch(data, idx, training=training, rng=rng)
        if not np.isfinite(loss.data):
            raise NonFiniteActivation("non-finite training loss")
        loss.backward()
        if self.swl is not None:
            self.swl.zero_frozen_grads()
        return float(loss.data)

    # ---------------- checkpoint serialization ----------------

    def to_bytes(self, adam_t: int = 0) -> bytes:
        params = self.named_parameters()
        state = self.named_state()
        header = {
            "config": self.config.to_json(),
            "swl_rows": self.swl_rows,
            "index_hash": self.index_hash,
            "schema_hash": self.schema_hash,
            "adam_t": adam_t,
            "frozen": self.swl.frozen.astype(int).tolist() if self.swl else [],
            "pretrained": self.swl.pretrained.astype(int).tolist() if self.swl else [],
            "param_blocks": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
            "state_blocks": [{"name": n, "shape": list(a.shape)} for n, a in state],
        }
        head = json.dumps(header, sort_keys=True).encode()
        chunks = [
            CHECKPOINT_MAGIC,
            np.uint32(CHECKPOINT_VERSION).astype("<u4").tobytes(),
            np.uint64(len(head)).astype("<u8").tobytes(),
            head,
        ]
        for p in params:
            chunks.append(p.data.astype("<f8").tobytes())
            chunks.append(p.adam_m.astype("<f8").tobytes())
            chunks.append(p.adam_v.astype("<f8").tobytes())
        for _, arr in state:
            chunks.append(arr.astype("<f8").tobytes())
        body = b"".join(chunks)
        return body + hashlib.sha256(body).digest()

    def save_checkpoint(self, path, adam_t: int = 0) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(adam_t=adam_t))

    @classmethod
    def from_bytes(cls, blob: bytes, expect_index_hash: str | None = None) -> tuple["SpatialWeightedRnn", int]:
        if len(blob) < 52 or blob[:8] != CHECKPOINT_MAGIC:
            raise CorruptCheckpoint("bad magic or truncated file")
        body, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise CorruptCheckpoint("checksum mismatch")
        version = int(np.frombuffer(body[8:12], dtype="<u4")[0])
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        head_len = int(np.frombuffer(body[12:20], dtype="<u8")[0])
        header = json.loads(body[20:20 + head_len].decode())
        if expect_index_hash is not None and header["index_hash"] != expect_index_hash:
            raise IndexMismatch("checkpoint was trained under a different network index")
        config = ModelConfig.from_json(header["config"])
        model = cls(config, np.random.default_rng(0),
                    index_hash=header["index_hash"], schema_hash=header["schema_hash"],
                    swl_rows=header.get("swl_rows"))
        params = model.named_parameters()
        declared = [b["name"] for b in header["param_blocks"]]
        if declared != [p.name for p in params]:
            raise CorruptCheckpoint("parameter block table does not match architecture")
        offset = 20 + head_len
        for p in params:
            n = p.data.size * 8
            for target in (p.data, p.adam_m, p.adam_v):
                target[...] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(p.data.shape)
                offset += n
        for name, arr in model.named_state():
            n = arr.size * 8
            arr[...] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(arr.shape)
            offset += n
        if offset != len(body):
            raise CorruptCheckpoint("trailing bytes in checkpoint")
        if model.swl is not None:
            model.swl.frozen = np.array(header["frozen"], dtype=bool)
            model.swl.pretrained = np.array(header["pretrained"], dtype=bool)
        return model, int(header["adam_t"])

    @classmethod
    def load_checkpoint(cls, path, expect_index_hash: str | None = None) -> tuple["SpatialWeightedRnn", int]:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), expect_index_hash=expect_index_hash)

    def clone_values_from(self, other: "SpatialWeightedRnn") -> None:
        """Copy parameter and state values (not optimizer identity) from `other`."""
        for mine, theirs in zip(self.named_parameters(), other.named_parameters()):
            mine.data[...] = theirs.data
            mine.adam_m[...] = theirs.adam_m
            mine.adam_v[...] = theirs.adam_v
        for (_, mine), (_, theirs) in zip(self.named_state(), other.named_state()):
            mine[...] = theirs
        if self.swl is not None and other.swl is not None:
            self.swl.frozen = other.swl.frozen.copy()
            self.swl.pretrained = other.swl.pretrained.copy()

    def snapshot(self) -> bytes:
        return self.to_bytes()

    def restore(self, blob: bytes) -> None:
        other, _ = SpatialWeightedRnn.from_bytes(blob)
        self.clone_values_from(other)
