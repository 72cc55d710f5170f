"""Tensor arithmetic, reverse-mode autodiff and the linear algebra kernels."""
from . import kernels
from .errors import ConvergenceError, DimensionError, DomainError, NumericsError, TapeError
from .gradcheck import gradients_match, numeric_grad, relative_error
from .linalg import cca, retained_rank, svd
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    backward,
    concat,
    cosine_similarity,
    cross_entropy,
    dot,
    dropout,
    embedding,
    exp,
    index,
    l2_normalize,
    layer_norm,
    linear,
    log,
    masked_fill,
    matmul,
    mul,
    recording,
    relu,
    reshape,
    softmax,
    sub,
    sum_axis,
    total,
    transpose,
)
