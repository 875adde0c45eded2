import numpy as np
import pytest

from scoop_lfd.nn.layers import (
    LayerSpec,
    forward_layers,
    init_layer_params,
    layer_forward,
    param_count,
    trainable_params,
)
from scoop_lfd.nn.rng import seeded_rng
from scoop_lfd.nn.tensor import Tensor


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        LayerSpec(kind="softmax")


def test_dense_init_shapes_and_bounds():
    spec = LayerSpec(kind="dense", in_size=50, out_size=20)
    params = init_layer_params(spec, seeded_rng(0))
    assert params["w"].shape == (50, 20)
    assert params["b"].shape == (20,)
    bound = np.sqrt(6.0 / 70.0)
    assert np.all(np.abs(params["w"].data) <= bound)
    assert not params["b"].data.any()
    assert params["w"].requires_grad and params["b"].requires_grad


def test_conv_init_fan_uses_kernel_area():
    spec = LayerSpec(kind="conv2d", in_channels=3, out_channels=32, kernel=5, stride=2, pad=2)
    params = init_layer_params(spec, seeded_rng(0))
    assert params["w"].shape == (32, 3, 5, 5)
    bound = np.sqrt(6.0 / (3 * 25 + 32 * 25))
    assert np.all(np.abs(params["w"].data) <= bound)


def test_activation_layers_have_no_params():
    for kind in ("leaky_relu", "sigmoid", "dropout", "flatten", "reshape"):
        assert init_layer_params(LayerSpec(kind=kind), seeded_rng(0)) == {}


def test_dropout_eval_is_identity():
    spec = LayerSpec(kind="dropout", p=0.4)
    x = Tensor(np.ones((4, 8)))
    out = layer_forward(spec, {}, x, train=False)
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_train_scales_survivors():
    spec = LayerSpec(kind="dropout", p=0.4)
    x = Tensor(np.ones((200, 50)))
    out = layer_forward(spec, {}, x, train=True, rng=seeded_rng(7))
    vals = np.unique(out.data)
    np.testing.assert_allclose(sorted(vals), [0.0, 1.0 / 0.6], rtol=1e-6)
    drop_rate = float((out.data == 0.0).mean())
    assert abs(drop_rate - 0.4) < 0.02
    # Inverted scaling keeps the mean near 1 in expectation.
    assert abs(float(out.data.mean()) - 1.0) < 0.05


def test_dropout_train_requires_rng():
    with pytest.raises(ValueError):
        layer_forward(LayerSpec(kind="dropout", p=0.4), {}, Tensor(np.ones(3)), train=True)


def test_flatten_and_reshape_roundtrip():
    x = Tensor(np.arange(24.0).reshape(2, 3, 2, 2), requires_grad=True)
    flat = layer_forward(LayerSpec(kind="flatten"), {}, x)
    assert flat.shape == (2, 12)
    back = layer_forward(LayerSpec(kind="reshape", shape=(3, 2, 2)), {}, flat)
    np.testing.assert_array_equal(back.data, x.data)


def test_forward_layers_image_stack_shapes():
    # Halve twice with conv, restore with mirrored deconv.
    specs = [
        LayerSpec(kind="conv2d", in_channels=3, out_channels=8, kernel=5, stride=2, pad=2),
        LayerSpec(kind="leaky_relu"),
        LayerSpec(kind="conv2d", in_channels=8, out_channels=4, kernel=5, stride=2, pad=2),
        LayerSpec(kind="flatten"),
        LayerSpec(kind="dense", in_size=4 * 16 * 16, out_size=10),
        LayerSpec(kind="dense", in_size=10, out_size=4 * 16 * 16),
        LayerSpec(kind="reshape", shape=(4, 16, 16)),
        LayerSpec(kind="deconv2d", in_channels=4, out_channels=8, kernel=5, stride=2, pad=2, out_pad=1),
        LayerSpec(kind="deconv2d", in_channels=8, out_channels=3, kernel=5, stride=2, pad=2, out_pad=1),
        LayerSpec(kind="sigmoid"),
    ]
    rng = seeded_rng(3)
    params = [init_layer_params(s, rng) for s in specs]
    out = forward_layers(specs, params, Tensor(np.zeros((2, 3, 64, 64), dtype=np.float32)))
    assert out.shape == (2, 3, 64, 64)
    assert np.all((out.data >= 0.0) & (out.data <= 1.0))


def test_param_count_and_collection_order_stable():
    specs = [
        LayerSpec(kind="dense", in_size=4, out_size=3),
        LayerSpec(kind="leaky_relu"),
        LayerSpec(kind="dense", in_size=3, out_size=2),
    ]
    rng = seeded_rng(0)
    params = [init_layer_params(s, rng) for s in specs]
    tensors = trainable_params(params)
    assert len(tensors) == 4
    assert param_count(params) == 4 * 3 + 3 + 3 * 2 + 2
    assert tensors[0].shape == (3,)  # "b" sorts before "w"
    assert tensors[1].shape == (4, 3)


def test_init_same_seed_is_identical():
    spec = LayerSpec(kind="dense", in_size=6, out_size=5)
    a = init_layer_params(spec, seeded_rng(42))
    b = init_layer_params(spec, seeded_rng(42))
    np.testing.assert_array_equal(a["w"].data, b["w"].data)
