"""Flat-color scene rasterizer.

Paints masks over a cached pixel-center grid, back to front: background,
table, bowl, material, arm, spoon, then any carried material as a blob
riding the spoon, which is the main visual cue that a scoop happened.
Pure function of (config, state); never mutates either.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from scoop_lfd.sim.kinematics import fk, joint_positions
from scoop_lfd.sim.scene import SceneConfig, SimState

PALETTE = {
    "background": (0.82, 0.87, 0.93),
    "table": (0.48, 0.33, 0.20),
    "yellow": (0.93, 0.76, 0.12),
    "green": (0.18, 0.60, 0.26),
    "material": (0.96, 0.93, 0.84),
    "arm": (0.38, 0.40, 0.45),
    "spoon": (0.16, 0.18, 0.24),
}

LINK_HALF_WIDTH = 0.012
SPOON_HALF_WIDTH = 0.014


@lru_cache(maxsize=8)
def _pixel_grid(hw: int, x0: float, y0: float, extent: float):
    """World coordinates of pixel centers; row 0 is the top of the image."""
    step = extent / hw
    xs = x0 + (np.arange(hw) + 0.5) * step
    ys = y0 + (hw - np.arange(hw) - 0.5) * step
    gx, gy = np.meshgrid(xs, ys)
    gx.setflags(write=False)
    gy.setflags(write=False)
    return gx, gy


def _segment_mask(gx, gy, p0, p1, half_width: float):
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    len2 = vx * vx + vy * vy
    if len2 == 0.0:
        t = 0.0
    else:
        t = np.clip(((gx - p0[0]) * vx + (gy - p0[1]) * vy) / len2, 0.0, 1.0)
    dx = gx - (p0[0] + t * vx)
    dy = gy - (p0[1] + t * vy)
    return dx * dx + dy * dy <= half_width * half_width


def render_scene(cfg: SceneConfig, state: SimState) -> np.ndarray:
    """(3, H, W) float32 image in [0, 1]."""
    gx, gy = _pixel_grid(cfg.image_hw, cfg.view_x0, cfg.view_y0, cfg.view_extent)
    img = np.empty((cfg.image_hw, cfg.image_hw, 3), dtype=np.float32)
    img[:] = PALETTE["background"]
    img[gy < 0.0] = PALETTE["table"]

    cx, cy = cfg.bowl_center
    d2 = (gx - cx) ** 2 + (gy - cy) ** 2
    inner, outer = cfg.bowl_radius, cfg.bowl_radius + cfg.bowl_wall
    img[(gy <= cy) & (d2 >= inner * inner) & (d2 <= outer * outer)] = PALETTE[cfg.bowl_color]
    img[(d2 < inner * inner) & (gy <= cfg.surface_height(state.in_bowl))] = PALETTE["material"]

    pts = joint_positions(state.q, cfg)
    for i in range(cfg.n_joints):
        img[_segment_mask(gx, gy, pts[i], pts[i + 1], LINK_HALF_WIDTH)] = PALETTE["arm"]
    pose = fk(state.q, cfg)
    img[_segment_mask(gx, gy, pts[-1], (pose.x, pose.y), SPOON_HALF_WIDTH)] = PALETTE["spoon"]

    if state.on_spoon > 0:
        frac = state.on_spoon / cfg.spoon_capacity
        r = 0.008 + 0.020 * np.sqrt(frac)
        blob = (gx - pose.x) ** 2 + (gy - (pose.y + 0.01)) ** 2 <= r * r
        img[blob] = PALETTE["material"]

    return np.ascontiguousarray(img.transpose(2, 0, 1))


def to_u8_hwc(img_chw: np.ndarray) -> np.ndarray:
    """(3, H, W) float image to (H, W, 3) uint8, for wire transport."""
    hwc = np.transpose(img_chw, (1, 2, 0))
    return np.clip(np.rint(hwc * 255.0), 0, 255).astype(np.uint8)
