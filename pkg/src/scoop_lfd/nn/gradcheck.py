"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from scoop_lfd.nn.tensor import Tensor


def gradient_check(make_loss: Callable[[], Tensor], params: list[Tensor], h: float = 1e-5) -> float:
    """Worst symmetric relative error between backprop and central differences.

    make_loss must rebuild the graph from the current parameter values and
    return a scalar.  Parameters should hold float64 data; float32 rounding
    drowns the comparison.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("gradient_check needs float64 parameters")
        p.zero_grad()
    loss = make_loss()
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        if ga is None:
            raise ValueError("parameter received no gradient")
        flat = p.data.reshape(-1)
        gf = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = make_loss().item()
            flat[i] = saved - h
            down = make_loss().item()
            flat[i] = saved
            numeric = (up - down) / (2.0 * h)
            err = abs(numeric - gf[i]) / max(abs(numeric) + abs(gf[i]), 1e-8)
            worst = max(worst, err)
    return worst
