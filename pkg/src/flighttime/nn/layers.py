"""Layers built on the autodiff tensor: LSTM, affine, batch norm, dropout, MSE."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from flighttime.nn.tensor import (
    Parameter,
    ShapeMismatch,
    Tensor,
    add,
    gather_rows,
    hadamard,
    matmul,
    mean_all,
    mean_axis0,
    narrow,
    pow_scalar,
    reshape,
    sigmoid,
    sub,
    tanh,
)
from flighttime.nn.tensor import tanh as tanh_op  # noqa: F401 (re-export convenience)


class DegenerateBatch(UserWarning):
    """Batch normalization asked to fit statistics on a single-sample batch."""


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def recurrent_uniform(rng: np.random.Generator, hidden: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(hidden)
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """Affine layer y = x W + b with W stored (in, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim)), f"{name}.weight")
        self.bias = Parameter(np.zeros(out_dim), f"{name}.bias")

    def forward(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def fcl(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Functional affine layer over a batch: x (B, in) @ weight (in, out) + bias."""
    return add(matmul(x, weight), bias)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _sigmoid_into(x: np.ndarray, out: np.ndarray) -> None:
    """sigmoid(x) = (tanh(x/2) + 1) / 2, evaluated without temporaries."""
    np.multiply(x, 0.5, out=out)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5


class LstmLayer:
    """One LSTM layer with combined gate matrices.

    Gate order along the last axis is fixed: input, forget, cell candidate,
    output. Update: c_t = f * c_prev + i * g, h_t = o * tanh(c_t), with
    sigmoid gates and tanh candidate.

    `step` composes autodiff primitives one timestep at a time and serves as
    the reference path; `forward_sequence` runs the whole sequence as a
    single graph node with a hand-derived backpropagation-through-time
    backward (the two paths are asserted equal in tests).
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator, name: str):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        m = hidden_dim
        self.w_x = Parameter(glorot_uniform(rng, input_dim, m, (input_dim, 4 * m)), f"{name}.w_x")
        self.w_h = Parameter(recurrent_uniform(rng, m, (m, 4 * m)), f"{name}.w_h")
        self.bias = Parameter(np.zeros(4 * m), f"{name}.bias")

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.data.shape[1] != self.input_dim:
            raise ShapeMismatch(f"LSTM input dim {x.data.shape[1]}, expected {self.input_dim}")
        m = self.hidden_dim
        z = add(add(matmul(x, self.w_x), matmul(h, self.w_h)), self.bias)
        i = sigmoid(narrow(z, 1, 0, m))
        f = sigmoid(narrow(z, 1, m, m))
        g = tanh(narrow(z, 1, 2 * m, m))
        o = sigmoid(narrow(z, 1, 3 * m, m))
        c_next = add(hadamard(f, c), hadamard(i, g))
        h_next = hadamard(o, tanh(c_next))
        return h_next, c_next

    def forward_sequence(self, x_seq: Tensor) -> Tensor:
        """All hidden states for a (batch, time, input) tensor, single node.

        One graph node for the whole sequence: gates are cached time-major
        during the forward loop and the backward replays them in reverse
        (backpropagation through time), accumulating into the weights and,
        when required, the input. Preallocated buffers keep the inner loops
        free of temporaries.
        """
        from flighttime.nn.tensor import _node

        if x_seq.data.ndim != 3 or x_seq.data.shape[2] != self.input_dim:
            raise ShapeMismatch(f"expected (B, T, {self.input_dim}), got {x_seq.data.shape}")
        batch, steps, _ = x_seq.data.shape
        m = self.hidden_dim
        w_x, w_h, b = self.w_x, self.w_h, self.bias
        x = x_seq.data

        # post-activation gate cache, time-major, contiguous per (step, gate)
        gates = np.empty((steps, 4, batch, m))  # order i, f, g, o
        cells = np.empty((steps, batch, m))
        hidden_out = np.empty((batch, steps, m))
        h = np.zeros((batch, m))
        c = np.zeros((batch, m))
        z = np.empty((batch, 4 * m))
        zx = np.empty((batch, 4 * m))
        z4 = np.empty((4, batch, m))  # contiguous per-gate blocks
        tmp = np.empty((batch, m))
        for t in range(steps):
            np.matmul(h, w_h.data, out=z)
            np.matmul(x[:, t], w_x.data, out=zx)
            z += zx
            z += b.data
            np.copyto(z4, z.reshape(batch, 4, m).transpose(1, 0, 2))
            i, f, g, o = gates[t]
            _sigmoid_into(z4[0], i)
            _sigmoid_into(z4[1], f)
            np.tanh(z4[2], out=g)
            _sigmoid_into(z4[3], o)
            np.multiply(f, c, out=c)
            np.multiply(i, g, out=tmp)
            c += tmp
            cells[t] = c
            np.tanh(c, out=tmp)
            np.multiply(o, tmp, out=h)
            hidden_out[:, t] = h

        def backward(out):
            def fn():
                grad_h_seq = out.grad  # (B, T, M)
                d_wx = np.zeros_like(w_x.data)
                d_wh = np.zeros_like(w_h.data)
                d_b = np.zeros_like(b.data)
                d_x = np.empty_like(x) if x_seq.requires_grad else None
                zeros = np.zeros((batch, m))
                dh = np.empty((batch, m))
                dc = np.empty((batch, m))
                dc_next = np.zeros((batch, m))
                dh_next = np.zeros((batch, m))
                dz4 = np.empty((4, batch, m))
                dz = np.empty((batch, 4 * m))
                dz_view = dz.reshape(batch, 4, m).transpose(1, 0, 2)
                dx_t = np.empty((batch, x.shape[2])) if d_x is not None else None
                tc = np.empty((batch, m))
                u = np.empty((batch, m))
                small = np.empty_like(d_wx)
                small_h = np.empty_like(d_wh)
                for t in range(steps - 1, -1, -1):
                    i, f, g, o = gates[t]
                    c_prev = cells[t - 1] if t > 0 else zeros
                    h_prev = hidden_out[:, t - 1] if t > 0 else zeros
                    np.tanh(cells[t], out=tc)
                    np.add(grad_h_seq[:, t], dh_next, out=dh)
                    # cell-state gradient: through h = o * tanh(c), plus carry
                    np.multiply(tc, tc, out=u)
                    np.subtract(1.0, u, out=u)
                    u *= o
                    u *= dh
                    np.add(dc_next, u, out=dc)
                    # gate pre-activation gradients, order i,f,g,o
                    zi, zf, zg, zo = dz4
                    np.multiply(dc, g, out=zi)
                    zi *= i
                    np.subtract(1.0, i, out=u)
                    zi *= u
                    np.multiply(dc, c_prev, out=zf)
                    zf *= f
                    np.subtract(1.0, f, out=u)
                    zf *= u
                    np.multiply(g, g, out=u)
                    np.subtract(1.0, u, out=u)
                    u *= i
                    np.multiply(dc, u, out=zg)
                    np.multiply(dh, tc, out=zo)
                    zo *= o
                    np.subtract(1.0, o, out=u)
                    zo *= u
                    np.copyto(dz_view, dz4)
                    np.multiply(dc, f, out=dc_next)
                    np.matmul(dz, w_h.data.T, out=dh_next)
                    np.matmul(x[:, t].T, dz, out=small)
                    d_wx += small
                    np.matmul(h_prev.T, dz, out=small_h)
                    d_wh += small_h
                    d_b += dz.sum(axis=0)
                    if d_x is not None:
                        np.matmul(dz, w_x.data.T, out=dx_t)
                        d_x[:, t] = dx_t
                w_x._accumulate(d_wx)
                w_h._accumulate(d_wh)
                b._accumulate(d_b)
                if d_x is not None:
                    x_seq._accumulate(d_x)
            return fn

        return _node(hidden_out, (x_seq, w_x, w_h, b), backward)

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.bias]


def lstm_cell_step(
    x: Tensor, h_prev: Tensor, c_prev: Tensor, cell: LstmLayer
) -> tuple[Tensor, Tensor]:
    """Single-cell step; thin functional wrapper over `LstmLayer.step`."""
    return cell.step(x, h_prev, c_prev)


class StackedLstm:
    """Stack of LSTM layers; returns the top layer's final hidden state."""

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        n_layers: int,
        rng: np.random.Generator,
        name: str,
    ):
        if n_layers < 1:
            raise ValueError("need at least one LSTM layer")
        self.layers = [
            LstmLayer(input_dim if i == 0 else hidden_dim, hidden_dim, rng, f"{name}.l{i}")
            for i in range(n_layers)
        ]
        self.hidden_dim = hidden_dim

    def forward(self, x_seq: Tensor) -> Tensor:
        """Final top-layer hidden state for a (batch, time, input) tensor."""
        seq = x_seq
        for layer in self.layers:
            seq = layer.forward_sequence(seq)
        steps = seq.data.shape[1]
        last = narrow(seq, 1, steps - 1, 1)
        return reshape(last, (seq.data.shape[0], self.hidden_dim))

    def forward_steps(self, steps: Sequence[Tensor]) -> Tensor:
        """Reference path: per-timestep composition of `LstmLayer.step`."""
        if not steps:
            raise ShapeMismatch("empty input sequence")
        batch = steps[0].data.shape[0]
        seq = list(steps)
        for layer in self.layers:
            h = Tensor(np.zeros((batch, layer.hidden_dim)))
            c = Tensor(np.zeros((batch, layer.hidden_dim)))
            outputs = []
            for x in seq:
                h, c = layer.step(x, h, c)
                outputs.append(h)
            seq = outputs
        return seq[-1]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]


def lstm_sequence(xs: np.ndarray, stack: StackedLstm) -> Tensor:
    """Final hidden vector for one constant (n_t, d) sequence, oldest row first."""
    return reshape(stack.forward(Tensor(xs[None, :, :])), (stack.hidden_dim,))


class BatchNorm:
    """Batch normalization with running statistics.

    Training mode normalizes with batch statistics (population variance) and
    updates running stats with momentum 0.9; eval mode uses the running
    stats. A single-sample training batch cannot supply statistics, so it
    falls back to running stats with a `DegenerateBatch` warning.
    """

    MOMENTUM = 0.9
    EPS = 1e-5

    def __init__(self, dim: int, name: str):
        self.dim = dim
        self.gamma = Parameter(np.ones(dim), f"{name}.gamma")
        self.beta = Parameter(np.zeros(dim), f"{name}.beta")
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x: Tensor, training: bool, update_running: bool = True) -> Tensor:
        batch = x.data.shape[0]
        if training and batch == 1:
            warnings.warn("batch of size 1 in training mode; using running stats", DegenerateBatch)
            training = False
        if training:
            mu = mean_axis0(x)
            centered = sub(x, mu)
            var = mean_axis0(hadamard(centered, centered))
            inv_std = pow_scalar(add(var, self.EPS), -0.5)
            x_hat = hadamard(centered, inv_std)
            if update_running:
                self.running_mean = self.MOMENTUM * self.running_mean + (1 - self.MOMENTUM) * mu.data
                self.running_var = self.MOMENTUM * self.running_var + (1 - self.MOMENTUM) * var.data
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.EPS)
            x_hat = hadamard(sub(x, Tensor(self.running_mean)), Tensor(inv))
        return add(hadamard(x_hat, self.gamma), self.beta)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; eval mode and rate 0 return the input unchanged."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return hadamard(x, Tensor(mask))


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over the batch."""
    target = np.asarray(target, dtype=np.float64)
    flat = reshape(pred, target.shape)
    diff = sub(flat, Tensor(target))
    return mean_all(hadamard(diff, diff))


def swl_gather(bank: Parameter, od_idx: np.ndarray) -> Tensor:
    """Per-sample rows of a per-route parameter bank."""
    return gather_rows(bank, od_idx)
