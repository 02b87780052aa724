"""Numeric substrate: tensors, reverse-mode autodiff, Adam, gradient checks."""

from .gradcheck import grad_check
from .init import glorot_uniform, zeros
from .optim import AdamState, adam_step
from .tensor import (
    OPS,
    GraphConsumedError,
    NonFiniteError,
    NumcoreError,
    ShapeError,
    Tensor,
    UnknownOpError,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    dropout,
    exp,
    forward_op,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mul,
    no_grad,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    softmax_cross_entropy,
    sub,
    tanh,
    transpose,
)
from .module import ParamModel, dense, dense_params, fit, minibatches
