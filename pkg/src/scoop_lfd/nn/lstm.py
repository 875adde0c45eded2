"""LSTM cell with four explicit gate blocks.

Each gate owns a weight over the concatenated [input, hidden] vector plus
a bias, so gate math stays legible and individually checkable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scoop_lfd.errors import ShapeMismatchError
from scoop_lfd.nn import tensor as T
from scoop_lfd.nn.layers import _glorot
from scoop_lfd.nn.tensor import Tensor

GATE_NAMES = ("input", "forget", "output", "candidate")


@dataclass
class LstmCellParams:
    input_size: int
    hidden_size: int
    weights: dict[str, Tensor]  # per gate: (input_size + hidden_size, hidden_size)
    biases: dict[str, Tensor]  # per gate: (hidden_size,)

    def tensors(self) -> list[Tensor]:
        out = []
        for name in GATE_NAMES:
            out.append(self.weights[name])
            out.append(self.biases[name])
        return out


def init_lstm_cell(input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32) -> LstmCellParams:
    z = input_size + hidden_size
    weights = {name: _glorot(rng, (z, hidden_size), z, hidden_size, dtype) for name in GATE_NAMES}
    biases = {name: Tensor(np.zeros(hidden_size), requires_grad=True, dtype=dtype) for name in GATE_NAMES}
    return LstmCellParams(input_size, hidden_size, weights, biases)


def lstm_cell_step(params: LstmCellParams, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One step: (batch, input_size) x state -> new (h, c), each (batch, hidden_size)."""
    if x.shape[1] != params.input_size:
        raise ShapeMismatchError(f"cell expects input width {params.input_size}, got {x.shape}")
    if h.shape[1] != params.hidden_size or c.shape[1] != params.hidden_size:
        raise ShapeMismatchError(f"cell state width must be {params.hidden_size}, got h {h.shape}, c {c.shape}")
    z = T.concat([x, h], axis=1)
    gi = T.sigmoid(z @ params.weights["input"] + params.biases["input"])
    gf = T.sigmoid(z @ params.weights["forget"] + params.biases["forget"])
    go = T.sigmoid(z @ params.weights["output"] + params.biases["output"])
    gc = T.tanh(z @ params.weights["candidate"] + params.biases["candidate"])
    c_new = gf * c + gi * gc
    h_new = go * T.tanh(c_new)
    return h_new, c_new
