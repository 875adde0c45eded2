"""Scene description and state for the planar scooping world.

Geometry lives in a vertical x/y plane: the table surface is y = 0, a
6-joint arm hangs from a fixed base, and an open-top bowl sits on the
table holding granular material.  Material is tracked in integer grain
units so bookkeeping is exact; heights derive from the unit count.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

BOWL_COLORS = ("yellow", "green")
FILL_LEVELS = ("high", "low")

# Joint angles whose tool tip rests at (0.15, 0.46) with the spoon tilted
# 0.6 rad below horizontal; the arm arches over the base, clear of every
# bowl slot.  Every run starts here.
HOME_Q = (2.3464, 0.0921, -0.6686, -1.1494, -1.0021, -0.2185)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


@dataclass(frozen=True)
class SceneConfig:
    bowl_x: float = 0.42
    bowl_color: str = "yellow"
    fill: str = "high"

    # Arm: six equal links anchored above and behind the bowls.
    n_joints: int = 6
    link_length: float = 0.12
    base_x: float = 0.0
    base_y: float = 0.25
    joint_limit: float = np.pi
    tool_length: float = 0.05

    # Bowl: half annulus opening upward, rim at y = bowl_radius.
    bowl_radius: float = 0.06
    bowl_wall: float = 0.012

    # Material grains.
    capacity: int = 1000
    fill_high: int = 850
    fill_low: int = 350
    spoon_capacity: int = 450
    scoop_rate: float = 5.0  # grains per (capacity * meter of swept arc)
    spill_tilt: float = 1.0
    spill_depth: float = 0.0  # tip below this y dumps the spoon

    # Dynamics.
    dt: float = 0.05
    rate_limit: float = 0.15  # max |dq| per step, radians
    contact_stiffness: float = 500.0
    break_force: float = 50.0

    # Camera.
    image_hw: int = 64
    view_x0: float = -0.04
    view_y0: float = -0.10
    view_extent: float = 0.80

    def __post_init__(self):
        if self.bowl_color not in BOWL_COLORS:
            raise ValueError(f"bowl_color must be one of {BOWL_COLORS}, got {self.bowl_color!r}")
        if self.fill not in FILL_LEVELS:
            raise ValueError(f"fill must be one of {FILL_LEVELS}, got {self.fill!r}")

    @property
    def initial_units(self) -> int:
        return self.fill_high if self.fill == "high" else self.fill_low

    @property
    def bowl_center(self) -> tuple[float, float]:
        return (self.bowl_x, self.bowl_radius)

    def surface_height(self, units: int) -> float:
        """Material surface y for a given grain count."""
        return self.bowl_radius * units / self.capacity


# Bowl slots s1..s7, evenly spaced across the reachable span.
BOWL_POSITIONS = tuple(0.22 + i * 0.0667 for i in range(7))


def position_name(index: int) -> str:
    return f"s{index + 1}"


def scene_for(position: int, color: str = "yellow", fill: str = "high", **kw) -> SceneConfig:
    if not 0 <= position < len(BOWL_POSITIONS):
        raise ValueError(f"position index must be 0..{len(BOWL_POSITIONS) - 1}, got {position}")
    return SceneConfig(bowl_x=BOWL_POSITIONS[position], bowl_color=color, fill=fill, **kw)


def all_scene_combos(position: int = 3) -> list[SceneConfig]:
    """The four color/fill variants at one bowl slot."""
    return [scene_for(position, color=c, fill=f) for c in BOWL_COLORS for f in FILL_LEVELS]


@dataclass(frozen=True)
class SimState:
    q: tuple[float, ...] = HOME_Q
    in_bowl: int = 0
    on_spoon: int = 0
    removed: int = 0

    def total_units(self) -> int:
        return self.in_bowl + self.on_spoon + self.removed


def initial_state(cfg: SceneConfig) -> SimState:
    return SimState(q=HOME_Q, in_bowl=cfg.initial_units, on_spoon=0, removed=0)


def with_units(state: SimState, in_bowl: int, on_spoon: int, removed: int) -> SimState:
    return replace(state, in_bowl=in_bowl, on_spoon=on_spoon, removed=removed)
