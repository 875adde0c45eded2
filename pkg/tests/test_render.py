import numpy as np

from scoop_lfd.sim.render import PALETTE, render_scene, to_u8_hwc
from scoop_lfd.sim.scene import HOME_Q, initial_state, scene_for


def color_mask(img_chw, name):
    color = np.array(PALETTE[name], dtype=np.float32).reshape(3, 1, 1)
    return np.all(np.abs(img_chw - color) < 1e-6, axis=0)


def test_shape_dtype_range():
    cfg = scene_for(3)
    img = render_scene(cfg, initial_state(cfg))
    assert img.shape == (3, 64, 64)
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_render_is_pure_and_returns_fresh_buffers():
    cfg = scene_for(2, fill="low", color="green")
    state = initial_state(cfg)
    a = render_scene(cfg, state)
    b = render_scene(cfg, state)
    np.testing.assert_array_equal(a, b)
    assert a is not b
    a[:] = 0.0
    np.testing.assert_array_equal(render_scene(cfg, state), b)


def test_table_fills_bottom_rows():
    cfg = scene_for(3)
    img = render_scene(cfg, initial_state(cfg))
    table = color_mask(img, "table")
    # View starts 0.10 below the table surface: the bottom rows are table
    # except where the bowl sits on it.
    assert table[-1].sum() > 32


def test_fill_levels_differ_by_at_least_two_rows():
    high = scene_for(3, fill="high")
    low = scene_for(3, fill="low")
    img_h = render_scene(high, initial_state(high))
    img_l = render_scene(low, initial_state(low))
    rows_h = np.where(color_mask(img_h, "material").any(axis=1))[0]
    rows_l = np.where(color_mask(img_l, "material").any(axis=1))[0]
    assert rows_h.size and rows_l.size
    assert rows_l.min() - rows_h.min() >= 2  # row 0 is the top


def test_bowl_colors_distinguishable():
    y = scene_for(3, color="yellow")
    g = scene_for(3, color="green")
    assert color_mask(render_scene(y, initial_state(y)), "yellow").any()
    assert color_mask(render_scene(g, initial_state(g)), "green").any()
    assert not color_mask(render_scene(g, initial_state(g)), "yellow").any()


def test_bowl_positions_distinguishable():
    a = scene_for(0)
    b = scene_for(6)
    img_a = render_scene(a, initial_state(a))
    img_b = render_scene(b, initial_state(b))
    cols_a = np.where(color_mask(img_a, a.bowl_color).any(axis=0))[0]
    cols_b = np.where(color_mask(img_b, b.bowl_color).any(axis=0))[0]
    assert cols_a.max() < cols_b.min()


def test_carried_material_changes_image():
    cfg = scene_for(3)
    empty = initial_state(cfg)
    carrying = empty.__class__(q=HOME_Q, in_bowl=empty.in_bowl - 300, on_spoon=300)
    img_e = render_scene(cfg, empty)
    img_c = render_scene(cfg, carrying)
    assert (img_e != img_c).any()
    assert color_mask(img_c, "material").sum() > color_mask(img_e, "material").sum()


def test_u8_conversion():
    cfg = scene_for(1)
    img = render_scene(cfg, initial_state(cfg))
    u8 = to_u8_hwc(img)
    assert u8.shape == (64, 64, 3)
    assert u8.dtype == np.uint8
    back = u8.astype(np.float32) / 255.0
    assert np.abs(back - img.transpose(1, 2, 0)).max() < 0.5 / 255.0 + 1e-6
