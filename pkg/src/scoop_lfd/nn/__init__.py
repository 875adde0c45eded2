"""Minimal reverse-mode autodiff stack: tensors, layers, an LSTM cell, Adam."""
from scoop_lfd.nn.conv import conv2d, conv2d_output_hw, deconv2d, deconv2d_output_hw
from scoop_lfd.nn.gradcheck import gradient_check
from scoop_lfd.nn.layers import (
    LayerSpec,
    forward_layers,
    init_layer_params,
    layer_forward,
    param_count,
    trainable_params,
)
from scoop_lfd.nn.lstm import GATE_NAMES, LstmCellParams, init_lstm_cell, lstm_cell_step
from scoop_lfd.nn.optim import AdamState, adam_step, zero_grads
from scoop_lfd.nn.rng import seeded_rng, spawn_rng
from scoop_lfd.nn.tensor import Tensor, concat, leaky_relu, mse_loss, sigmoid, tanh

__all__ = [
    "Tensor",
    "concat",
    "sigmoid",
    "tanh",
    "leaky_relu",
    "mse_loss",
    "conv2d",
    "deconv2d",
    "conv2d_output_hw",
    "deconv2d_output_hw",
    "LayerSpec",
    "init_layer_params",
    "layer_forward",
    "forward_layers",
    "trainable_params",
    "param_count",
    "LstmCellParams",
    "GATE_NAMES",
    "init_lstm_cell",
    "lstm_cell_step",
    "AdamState",
    "adam_step",
    "zero_grads",
    "seeded_rng",
    "spawn_rng",
    "gradient_check",
]
