"""Dense numerical kernel: autodiff tensors, layers, Adam, gradient checking."""

from flighttime.nn.gradcheck import grad_check
from flighttime.nn.layers import (
    BatchNorm,
    DegenerateBatch,
    Linear,
    LstmLayer,
    StackedLstm,
    dropout,
    fcl,
    glorot_uniform,
    lstm_cell_step,
    lstm_sequence,
    mse_loss,
    recurrent_uniform,
)
from flighttime.nn.optim import Adam, adam_step
from flighttime.nn.tensor import (
    Parameter,
    ShapeMismatch,
    Tensor,
    add,
    concat,
    gather_rows,
    hadamard,
    leaky_relu,
    matmul,
    mean_all,
    mean_axis0,
    narrow,
    no_grad,
    outer_broadcast,
    pow_scalar,
    reshape,
    scale,
    sigmoid,
    sub,
    sum_all,
    tanh,
)

__all__ = [
    "Adam",
    "BatchNorm",
    "DegenerateBatch",
    "Linear",
    "LstmLayer",
    "Parameter",
    "ShapeMismatch",
    "StackedLstm",
    "Tensor",
    "adam_step",
    "add",
    "concat",
    "dropout",
    "fcl",
    "gather_rows",
    "glorot_uniform",
    "grad_check",
    "hadamard",
    "leaky_relu",
    "lstm_cell_step",
    "lstm_sequence",
    "matmul",
    "mean_all",
    "mean_axis0",
    "mse_loss",
    "narrow",
    "no_grad",
    "outer_broadcast",
    "pow_scalar",
    "recurrent_uniform",
    "reshape",
    "scale",
    "sigmoid",
    "sub",
    "sum_all",
    "tanh",
]
