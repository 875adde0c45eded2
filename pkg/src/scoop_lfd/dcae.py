"""Convolutional autoencoder that compresses scene images to a small code.

Encoder: strided 5x5 convolutions (32 then 16 filters by default), then a
dense funnel ending in a linear code.  The decoder mirrors the encoder
exactly, finishing with a sigmoid back to pixel range; the mirror is
checked structurally at build time.  Dropout follows every encoder
activation during training and the decoder is kept clean, so the code
path is regularized while reconstructions stay crisp.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from scoop_lfd.errors import ShapeMismatchError, TrainingDivergedError
from scoop_lfd.nn.conv import conv2d_output_hw
from scoop_lfd.nn.layers import LayerSpec, forward_layers, init_layer_params, trainable_params
from scoop_lfd.nn.optim import AdamState, adam_step, zero_grads
from scoop_lfd.nn.tensor import Tensor, mse_loss


@dataclass(frozen=True)
class DcaeConfig:
    image_hw: int = 64
    channels: int = 3
    conv_channels: tuple[int, ...] = (32, 16)
    fc_sizes: tuple[int, ...] = (100, 10)
    kernel: int = 5
    stride: int = 2
    pad: int = 2
    dropout: float = 0.4
    slope: float = 0.1
    epochs: int = 50
    batch_size: int = 32

    def __post_init__(self):
        if not self.conv_channels or not self.fc_sizes:
            raise ValueError("need at least one conv layer and one dense size")
        total_stride = self.stride ** len(self.conv_channels)
        if self.image_hw % total_stride:
            raise ShapeMismatchError(
                f"image size {self.image_hw} not divisible by total stride {total_stride}"
            )

    @property
    def code_size(self) -> int:
        return self.fc_sizes[-1]

    def bottleneck_hw(self) -> int:
        hw = self.image_hw
        for _ in self.conv_channels:
            hw, _ = conv2d_output_hw(hw, hw, self.kernel, self.stride, self.pad)
        return hw

    def flat_size(self) -> int:
        return self.conv_channels[-1] * self.bottleneck_hw() ** 2


def _encoder_specs(cfg: DcaeConfig) -> list[LayerSpec]:
    specs = []
    chans = (cfg.channels, *cfg.conv_channels)
    for c_in, c_out in zip(chans[:-1], chans[1:]):
        specs.append(LayerSpec(kind="conv2d", in_channels=c_in, out_channels=c_out,
                               kernel=cfg.kernel, stride=cfg.stride, pad=cfg.pad))
        specs.append(LayerSpec(kind="leaky_relu", slope=cfg.slope))
        specs.append(LayerSpec(kind="dropout", p=cfg.dropout))
    specs.append(LayerSpec(kind="flatten"))
    widths = (cfg.flat_size(), *cfg.fc_sizes)
    for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
        specs.append(LayerSpec(kind="dense", in_size=w_in, out_size=w_out))
        if i < len(cfg.fc_sizes) - 1:  # the code layer itself stays linear
            specs.append(LayerSpec(kind="leaky_relu", slope=cfg.slope))
            specs.append(LayerSpec(kind="dropout", p=cfg.dropout))
    return specs


def _decoder_specs(cfg: DcaeConfig) -> list[LayerSpec]:
    bhw = cfg.bottleneck_hw()
    specs = []
    widths = (cfg.flat_size(), *cfg.fc_sizes)
    for w_out, w_in in zip(reversed(widths[:-1]), reversed(widths[1:])):
        specs.append(LayerSpec(kind="dense", in_size=w_in, out_size=w_out))
        specs.append(LayerSpec(kind="leaky_relu", slope=cfg.slope))
    specs.append(LayerSpec(kind="reshape", shape=(cfg.conv_channels[-1], bhw, bhw)))
    chans = (cfg.channels, *cfg.conv_channels)
    for c_out, c_in in zip(reversed(chans[:-1]), reversed(chans[1:])):
        specs.append(LayerSpec(kind="deconv2d", in_channels=c_in, out_channels=c_out,
                               kernel=cfg.kernel, stride=cfg.stride, pad=cfg.pad, out_pad=cfg.stride - 1))
        if c_out == cfg.channels:
            specs.append(LayerSpec(kind="sigmoid"))
        else:
            specs.append(LayerSpec(kind="leaky_relu", slope=cfg.slope))
    return specs


def check_mirror(enc: list[LayerSpec], dec: list[LayerSpec]) -> None:
    """Structural check that the decoder runs the encoder backwards."""
    enc_shape = [(s.kind, s.in_channels, s.out_channels) for s in enc if s.kind == "conv2d"]
    dec_shape = [(s.kind, s.out_channels, s.in_channels) for s in dec if s.kind == "deconv2d"]
    if [("conv2d", a, b) for _, a, b in reversed(dec_shape)] != enc_shape:
        raise ShapeMismatchError("decoder deconvolutions do not mirror encoder convolutions")
    enc_dense = [(s.in_size, s.out_size) for s in enc if s.kind == "dense"]
    dec_dense = [(s.out_size, s.in_size) for s in dec if s.kind == "dense"]
    if list(reversed(dec_dense)) != enc_dense:
        raise ShapeMismatchError("decoder dense sizes do not mirror encoder dense sizes")


@dataclass
class DcaeModel:
    config: DcaeConfig
    enc_specs: list[LayerSpec]
    enc_params: list[dict]
    dec_specs: list[LayerSpec]
    dec_params: list[dict]

    def parameters(self) -> list[Tensor]:
        return trainable_params(self.enc_params) + trainable_params(self.dec_params)


def build_dcae(cfg: DcaeConfig, rng: np.random.Generator) -> DcaeModel:
    enc = _encoder_specs(cfg)
    dec = _decoder_specs(cfg)
    check_mirror(enc, dec)
    return DcaeModel(
        config=cfg,
        enc_specs=enc,
        enc_params=[init_layer_params(s, rng) for s in enc],
        dec_specs=dec,
        dec_params=[init_layer_params(s, rng) for s in dec],
    )


def _as_batch(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == ndim - 1:
        return x[None], True
    return x, False


def _check_images(model: DcaeModel, images: np.ndarray) -> np.ndarray:
    cfg = model.config
    if images.ndim != 4 or images.shape[1:] != (cfg.channels, cfg.image_hw, cfg.image_hw):
        raise ShapeMismatchError(
            f"expected images (N, {cfg.channels}, {cfg.image_hw}, {cfg.image_hw}), got {images.shape}"
        )
    return images


def encode(model: DcaeModel, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Images to codes, deterministic (no dropout).  Accepts one or a batch."""
    images, single = _as_batch(images, 4)
    images = _check_images(model, images)
    out = np.empty((images.shape[0], model.config.code_size), dtype=np.float32)
    for lo in range(0, images.shape[0], batch_size):
        x = Tensor(images[lo:lo + batch_size])
        out[lo:lo + batch_size] = forward_layers(model.enc_specs, model.enc_params, x).data
    return out[0] if single else out


def decode(model: DcaeModel, codes: np.ndarray, batch_size: int = 64) -> np.ndarray:
    codes, single = _as_batch(codes, 2)
    if codes.ndim != 2 or codes.shape[1] != model.config.code_size:
        raise ShapeMismatchError(f"expected codes (N, {model.config.code_size}), got {codes.shape}")
    cfg = model.config
    out = np.empty((codes.shape[0], cfg.channels, cfg.image_hw, cfg.image_hw), dtype=np.float32)
    for lo in range(0, codes.shape[0], batch_size):
        z = Tensor(codes[lo:lo + batch_size])
        out[lo:lo + batch_size] = forward_layers(model.dec_specs, model.dec_params, z).data
    return out[0] if single else out


def reconstruct(model: DcaeModel, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    return decode(model, encode(model, images, batch_size), batch_size)


def recon_error(model: DcaeModel, images: np.ndarray, batch_size: int = 64) -> float:
    """Mean squared per-pixel error of reconstruction over the given image(s)."""
    images, _ = _as_batch(images, 4)
    images = _check_images(model, images)
    total = 0.0
    for lo in range(0, images.shape[0], batch_size):
        chunk = images[lo:lo + batch_size]
        rec = reconstruct(model, chunk, batch_size)
        total += float(((rec - chunk) ** 2).sum())
    return total / images.size


def train_dcae(
    model: DcaeModel,
    images: np.ndarray,
    rng: np.random.Generator,
    epochs: int | None = None,
    batch_size: int | None = None,
    lr: float = 1e-3,
    log=None,
) -> list[float]:
    """Reconstruction training; returns the mean loss of each epoch."""
    images = _check_images(model, np.asarray(images, dtype=np.float32))
    if images.shape[0] == 0:
        raise TrainingDivergedError("no images to train on")
    epochs = model.config.epochs if epochs is None else epochs
    batch_size = model.config.batch_size if batch_size is None else batch_size
    params = model.parameters()
    opt = AdamState(params, lr=lr)
    losses = []
    specs = model.enc_specs + model.dec_specs
    layer_params = model.enc_params + model.dec_params
    for epoch in range(epochs):
        order = rng.permutation(images.shape[0])
        total = 0.0
        for bi, lo in enumerate(range(0, order.size, batch_size)):
            batch = images[order[lo:lo + batch_size]]
            x = Tensor(batch)
            out = forward_layers(specs, layer_params, x, train=True, rng=rng)
            loss = mse_loss(out, x)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {bi}")
            zero_grads(params)
            loss.backward()
            adam_step(opt)
            total += value * batch.shape[0]
        losses.append(total / images.shape[0])
        if log:
            log(epoch, losses[-1])
    return losses


# ---- persistence ----


def dcae_blocks(model: DcaeModel) -> dict[str, np.ndarray]:
    blocks = {}
    for prefix, plist in (("enc", model.enc_params), ("dec", model.dec_params)):
        for i, p in enumerate(plist):
            for key, tensor in p.items():
                blocks[f"{prefix}{i}.{key}"] = tensor.data
    return blocks


def dcae_config_dict(cfg: DcaeConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["conv_channels"] = list(cfg.conv_channels)
    d["fc_sizes"] = list(cfg.fc_sizes)
    return d


def dcae_from_parts(config: dict, blocks: dict[str, np.ndarray]) -> DcaeModel:
    cfg = DcaeConfig(**{
        **config,
        "conv_channels": tuple(config["conv_channels"]),
        "fc_sizes": tuple(config["fc_sizes"]),
    })
    enc = _encoder_specs(cfg)
    dec = _decoder_specs(cfg)
    model = DcaeModel(config=cfg, enc_specs=enc, enc_params=[{} for _ in enc], dec_specs=dec, dec_params=[{} for _ in dec])
    for prefix, specs, plist in (("enc", enc, model.enc_params), ("dec", dec, model.dec_params)):
        for i, spec in enumerate(specs):
            expected = init_layer_params(spec, np.random.default_rng(0))
            for key, ref in expected.items():
                name = f"{prefix}{i}.{key}"
                if name not in blocks:
                    raise ShapeMismatchError(f"model bundle missing block {name!r}")
                arr = blocks[name]
                if arr.shape != ref.shape:
                    raise ShapeMismatchError(f"block {name!r} has shape {arr.shape}, expected {ref.shape}")
                plist[i][key] = Tensor(arr.astype(np.float32), requires_grad=True)
    return model
