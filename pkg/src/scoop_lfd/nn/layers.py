"""Layer descriptions, parameter init and a small forward interpreter.

A network is a list of LayerSpec values plus a parallel list of parameter
dicts.  Keeping layers declarative makes mirrored encoder/decoder stacks
and serialization straightforward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from scoop_lfd.errors import ShapeMismatchError
from scoop_lfd.nn import tensor as T
from scoop_lfd.nn.conv import conv2d, deconv2d
from scoop_lfd.nn.tensor import Tensor

LAYER_KINDS = ("dense", "conv2d", "deconv2d", "leaky_relu", "dropout", "sigmoid", "flatten", "reshape")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_size: int = 0
    out_size: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    out_pad: int = 0
    slope: float = 0.1
    p: float = 0.0
    shape: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int, dtype) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, dtype=dtype)


def init_layer_params(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    if spec.kind == "dense":
        w = _glorot(rng, (spec.in_size, spec.out_size), spec.in_size, spec.out_size, dtype)
        b = Tensor(np.zeros(spec.out_size), requires_grad=True, dtype=dtype)
        return {"w": w, "b": b}
    if spec.kind == "conv2d":
        k = spec.kernel
        fan_in, fan_out = spec.in_channels * k * k, spec.out_channels * k * k
        w = _glorot(rng, (spec.out_channels, spec.in_channels, k, k), fan_in, fan_out, dtype)
        b = Tensor(np.zeros(spec.out_channels), requires_grad=True, dtype=dtype)
        return {"w": w, "b": b}
    if spec.kind == "deconv2d":
        k = spec.kernel
        fan_in, fan_out = spec.in_channels * k * k, spec.out_channels * k * k
        w = _glorot(rng, (spec.in_channels, spec.out_channels, k, k), fan_in, fan_out, dtype)
        b = Tensor(np.zeros(spec.out_channels), requires_grad=True, dtype=dtype)
        return {"w": w, "b": b}
    return {}


def layer_forward(
    spec: LayerSpec,
    params: dict[str, Tensor],
    x: Tensor,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    if spec.kind == "dense":
        return x @ params["w"] + params["b"]
    if spec.kind == "conv2d":
        return conv2d(x, params["w"], params["b"], stride=spec.stride, pad=spec.pad)
    if spec.kind == "deconv2d":
        return deconv2d(x, params["w"], params["b"], stride=spec.stride, pad=spec.pad, out_pad=spec.out_pad)
    if spec.kind == "leaky_relu":
        return T.leaky_relu(x, slope=spec.slope)
    if spec.kind == "sigmoid":
        return T.sigmoid(x)
    if spec.kind == "flatten":
        return x.reshape((x.shape[0], -1))
    if spec.kind == "reshape":
        return x.reshape((x.shape[0], *spec.shape))
    if spec.kind == "dropout":
        if not train or spec.p == 0.0:
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        # Inverted scaling keeps eval-time activations at the same magnitude.
        keep = (rng.random(x.shape) >= spec.p).astype(x.dtype) / np.asarray(1.0 - spec.p, dtype=x.dtype)
        mask = Tensor(keep, dtype=x.dtype)
        return x * mask
    raise ValueError(f"unknown layer kind {spec.kind!r}")


def forward_layers(
    specs: list[LayerSpec],
    params: list[dict[str, Tensor]],
    x: Tensor,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    if len(specs) != len(params):
        raise ShapeMismatchError(f"{len(specs)} layer specs but {len(params)} parameter dicts")
    for spec, p in zip(specs, params):
        x = layer_forward(spec, p, x, train=train, rng=rng)
    return x


def trainable_params(params: list[dict[str, Tensor]]) -> list[Tensor]:
    out = []
    for p in params:
        for key in sorted(p):
            out.append(p[key])
    return out


def param_count(params: list[dict[str, Tensor]]) -> int:
    return sum(t.size for t in trainable_params(params))
