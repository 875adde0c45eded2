"""Adam optimizer with bias-corrected moment estimates.

Updates are applied in place to the parameter arrays; the graph is rebuilt
each pass so mutating .data between passes is safe.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scoop_lfd.nn.tensor import Tensor


@dataclass
class AdamState:
    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
        if not self.v:
            self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState) -> None:
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, m, v in zip(state.params, state.m, state.v):
        if p.grad is None:
            continue
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype, copy=False)


def zero_grads(params: list[Tensor]) -> None:
    for p in params:
        p.zero_grad()
