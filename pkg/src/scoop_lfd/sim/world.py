"""World stepping: contact, material transfer and run outcomes.

Contact uses a stiffness penalty on tip penetration; returned forces are
the reaction acting on the spoon.  Grain counts are integers and every
transfer is a move between the in_bowl / on_spoon / removed buckets, so
their sum is conserved exactly, step by step, forever.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from scoop_lfd.sim.kinematics import fk, joint_positions
from scoop_lfd.sim.scene import Pose2D, SceneConfig, SimState


def wrap_angle(a: float) -> float:
    if -math.pi <= a < math.pi:
        return a
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def contact_force(q, cfg: SceneConfig) -> np.ndarray:
    """(fx, fy, torque about the wrist) acting on the spoon tip.

    Table: penetration below y = 0 pushes straight up.  Bowl wall: the
    tip is shoved back out of the wall toward whichever surface (inner
    or outer) is closer, which is where it came from at sane speeds.
    """
    pts = joint_positions(q, cfg)
    pose = fk(q, cfg)
    fx = 0.0
    fy = 0.0
    if pose.y < 0.0:
        fy += -cfg.contact_stiffness * pose.y
    cx, cy = cfg.bowl_center
    # Wall band exists only above the table; below y=0 the table owns contact.
    if 0.0 <= pose.y <= cy:
        dx, dy = pose.x - cx, pose.y - cy
        d = math.hypot(dx, dy)
        inner, outer = cfg.bowl_radius, cfg.bowl_radius + cfg.bowl_wall
        if inner <= d <= outer and d > 0.0:
            nx, ny = dx / d, dy / d
            if d - inner <= outer - d:
                depth = d - inner
                fx += -cfg.contact_stiffness * depth * nx
                fy += -cfg.contact_stiffness * depth * ny
            else:
                depth = outer - d
                fx += cfg.contact_stiffness * depth * nx
                fy += cfg.contact_stiffness * depth * ny
    rx, ry = pose.x - pts[-1, 0], pose.y - pts[-1, 1]
    return np.array([fx, fy, rx * fy - ry * fx])


def _tip_in_material(pose: Pose2D, surface_y: float, cfg: SceneConfig) -> bool:
    cx, cy = cfg.bowl_center
    if pose.y > min(surface_y, cy):
        return False
    return math.hypot(pose.x - cx, pose.y - cy) < cfg.bowl_radius


@dataclass(frozen=True)
class StepInfo:
    tip: Pose2D
    force: np.ndarray
    picked: int
    spilled: int
    limit_hit: bool


def step(cfg: SceneConfig, state: SimState, qdot) -> tuple[SimState, StepInfo]:
    """Advance one tick under commanded joint rates (rad/s)."""
    q = np.asarray(state.q, dtype=np.float64)
    dq = np.clip(np.asarray(qdot, dtype=np.float64) * cfg.dt, -cfg.rate_limit, cfg.rate_limit)
    q_new = q + dq
    limit_hit = bool(np.any(np.abs(q_new) > cfg.joint_limit))
    q_new = np.clip(q_new, -cfg.joint_limit, cfg.joint_limit)

    tip_old = fk(q, cfg)
    tip_new = fk(q_new, cfg)

    in_bowl, on_spoon, removed = state.in_bowl, state.on_spoon, state.removed
    picked = 0
    surface_y = cfg.surface_height(in_bowl)
    if _tip_in_material(tip_new, surface_y, cfg):
        swept = math.hypot(tip_new.x - tip_old.x, tip_new.y - tip_old.y)
        picked = int(cfg.capacity * cfg.scoop_rate * swept)
        picked = min(picked, in_bowl, cfg.spoon_capacity - on_spoon)
        picked = max(picked, 0)
        in_bowl -= picked
        on_spoon += picked

    spilled = 0
    if on_spoon and (abs(wrap_angle(tip_new.theta)) > cfg.spill_tilt or tip_new.y < cfg.spill_depth):
        spilled = on_spoon
        removed += spilled
        on_spoon = 0

    new_state = replace(
        state,
        q=tuple(float(v) for v in q_new),
        in_bowl=in_bowl,
        on_spoon=on_spoon,
        removed=removed,
    )
    info = StepInfo(
        tip=tip_new,
        force=contact_force(q_new, cfg),
        picked=picked,
        spilled=spilled,
        limit_hit=limit_hit,
    )
    return new_state, info


@dataclass(frozen=True)
class RunOutcome:
    success: bool
    scooped_fraction: float
    max_force: float
    limit_hit: bool
    broke: bool


def evaluate_run(cfg: SceneConfig, initial_units: int, trace: list[tuple[SimState, StepInfo]]) -> RunOutcome:
    """Judge a run: carried enough grains above the rim without breakage.

    Success needs some step where the spoon holds at least 20% of the
    starting grains with the tip above the bowl rim, and no step where
    planar contact force reaches break_force.
    """
    rim_y = cfg.bowl_center[1]
    carried_high = False
    best_fraction = 0.0
    max_force = 0.0
    limit_hit = False
    for state, info in trace:
        fraction = state.on_spoon / initial_units if initial_units else 0.0
        best_fraction = max(best_fraction, fraction)
        if fraction >= 0.2 and info.tip.y > rim_y:
            carried_high = True
        max_force = max(max_force, float(np.hypot(info.force[0], info.force[1])))
        limit_hit = limit_hit or info.limit_hit
    broke = max_force >= cfg.break_force
    return RunOutcome(
        success=carried_high and not broke,
        scooped_fraction=best_fraction,
        max_force=max_force,
        limit_hit=limit_hit,
        broke=broke,
    )
