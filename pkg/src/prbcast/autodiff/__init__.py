"""Minimal reverse-mode automatic differentiation over numpy arrays."""
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    log,
    lstm_cell,
    matmul,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    softplus,
    sqrt,
    square,
    stack,
    sub,
    tanh,
    transpose,
)
from .optim import AdamState, adam_step, clip_grad_norm
from .gradcheck import grad_check, params_grad_check
from .checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint

__all__ = [
    "Tape", "Tensor", "active_tape", "add", "as_tensor", "backward", "concat", "div", "exp",
    "log", "lstm_cell", "matmul", "mul", "neg", "reduce_mean", "reduce_sum", "relu", "reshape",
    "sigmoid", "slice_", "softmax", "softplus", "sqrt", "square", "stack", "sub", "tanh",
    "transpose", "AdamState", "adam_step", "clip_grad_norm", "grad_check", "params_grad_check", "dump_checkpoint",
    "load_checkpoint", "parse_checkpoint", "save_checkpoint",
]
