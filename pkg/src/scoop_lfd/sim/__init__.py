"""Planar scooping world: scenes, kinematics, contact and rendering."""
from scoop_lfd.sim.kinematics import fk, ik_velocity, jacobian, joint_positions
from scoop_lfd.sim.render import render_scene, to_u8_hwc
from scoop_lfd.sim.scene import (
    BOWL_COLORS,
    BOWL_POSITIONS,
    FILL_LEVELS,
    HOME_Q,
    Pose2D,
    SceneConfig,
    SimState,
    all_scene_combos,
    initial_state,
    position_name,
    scene_for,
)
from scoop_lfd.sim.world import RunOutcome, StepInfo, contact_force, evaluate_run, step, wrap_angle

__all__ = [
    "Pose2D",
    "SceneConfig",
    "SimState",
    "BOWL_COLORS",
    "BOWL_POSITIONS",
    "FILL_LEVELS",
    "HOME_Q",
    "scene_for",
    "all_scene_combos",
    "position_name",
    "initial_state",
    "fk",
    "jacobian",
    "ik_velocity",
    "joint_positions",
    "contact_force",
    "step",
    "evaluate_run",
    "wrap_angle",
    "StepInfo",
    "RunOutcome",
    "render_scene",
    "to_u8_hwc",
]
