"""Minimal dense numeric kernel: differentiable primitives, Adam, and the
finite-difference gradient checker. Hot segment/scatter loops run on the
compiled backend when built, numpy otherwise (see ``backend``)."""

from .backend import backend_name, compiled_available, kernels
from .ops import (AdamState, GradCheckReport, activation, adam_step, affine_bwd,
                  affine_fwd, dropout_bwd, dropout_fwd, elu_bwd, elu_fwd,
                  grad_check, leaky_relu_bwd, leaky_relu_fwd, mse_bwd, mse_fwd,
                  segment_softmax_bwd, segment_softmax_fwd, sigmoid_bwd,
                  sigmoid_fwd)

__all__ = [
    "AdamState", "GradCheckReport", "activation", "adam_step", "affine_bwd",
    "affine_fwd", "backend_name", "compiled_available", "dropout_bwd",
    "dropout_fwd", "elu_bwd", "elu_fwd", "grad_check", "kernels",
    "leaky_relu_bwd", "leaky_relu_fwd", "mse_bwd", "mse_fwd",
    "segment_softmax_bwd", "segment_softmax_fwd", "sigmoid_bwd", "sigmoid_fwd",
]
