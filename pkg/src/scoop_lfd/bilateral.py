"""Bilateral coupling between a master pose and the simulated arm.

The master is a massless admittance point in tip space (x, y, theta): it
moves at a rate set by the operator force minus the reflected environment
force, so pushing into something stiff slows and then stalls the hand.
The slave chases the master pose through damped least squares IK.  An
operator model turns waypoints into bounded forces, standing in for a
human during batch collection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scoop_lfd.sim.kinematics import fk, ik_velocity
from scoop_lfd.sim.scene import SceneConfig, SimState
from scoop_lfd.sim.world import StepInfo, contact_force, step, wrap_angle


@dataclass(frozen=True)
class BilateralConfig:
    admittance_xy: float = 0.1  # m / (N s)
    admittance_theta: float = 0.5  # rad / (N m s)
    force_reflection: float = 1.0
    slave_gain: float = 5.0  # 1/s on master-slave pose error
    max_human_force: float = 20.0
    human_p_xy: float = 40.0
    human_d_xy: float = 6.0
    human_p_theta: float = 4.0
    human_d_theta: float = 0.8


@dataclass
class BilateralState:
    pose: np.ndarray  # master (x, y, theta)
    vel: np.ndarray  # last master rate, for operator damping

    @classmethod
    def at(cls, pose) -> "BilateralState":
        return cls(pose=np.asarray(pose, dtype=np.float64).copy(), vel=np.zeros(3))


def synth_human_force(state: BilateralState, waypoint, cfg: BilateralConfig) -> np.ndarray:
    """Bounded PD pull of the master toward a waypoint pose."""
    wp = np.asarray(waypoint, dtype=np.float64)
    err = wp - state.pose
    err[2] = wrap_angle(err[2])
    f = np.empty(3)
    f[0] = cfg.human_p_xy * err[0] - cfg.human_d_xy * state.vel[0]
    f[1] = cfg.human_p_xy * err[1] - cfg.human_d_xy * state.vel[1]
    f[2] = cfg.human_p_theta * err[2] - cfg.human_d_theta * state.vel[2]
    return np.clip(f, -cfg.max_human_force, cfg.max_human_force)


def master_update(state: BilateralState, f_human, f_env, cfg: BilateralConfig, dt: float) -> BilateralState:
    """Admittance integration: rate follows operator force minus reflection.

    f_env is the force the tool applies to the environment; its reflection
    opposes the operator, so pressing into a surface stalls the master.
    """
    drive = np.asarray(f_human, dtype=np.float64) - cfg.force_reflection * np.asarray(f_env, dtype=np.float64)
    vel = np.array([cfg.admittance_xy, cfg.admittance_xy, cfg.admittance_theta]) * drive
    pose = state.pose + vel * dt
    pose[2] = wrap_angle(pose[2])
    return BilateralState(pose=pose, vel=vel)


def slave_command(master_pose, slave_pose, cfg: BilateralConfig) -> np.ndarray:
    """Tip velocity command chasing the master pose."""
    err = np.asarray(master_pose, dtype=np.float64) - np.asarray(slave_pose, dtype=np.float64)
    err[2] = wrap_angle(err[2])
    return cfg.slave_gain * err


def teleop_tick(
    scene: SceneConfig,
    bcfg: BilateralConfig,
    bstate: BilateralState,
    sim_state: SimState,
    waypoint,
) -> tuple[BilateralState, SimState, StepInfo, np.ndarray]:
    """One synchronized master/slave tick; returns the applied tool force too."""
    f_env = -contact_force(sim_state.q, scene)
    f_h = synth_human_force(bstate, waypoint, bcfg)
    bstate = master_update(bstate, f_h, f_env, bcfg, scene.dt)

    pose = fk(sim_state.q, scene)
    v_cmd = slave_command(bstate.pose, pose.as_array(), bcfg)
    qdot = ik_velocity(sim_state.q, v_cmd, scene)
    sim_state, info = step(scene, sim_state, qdot)
    return bstate, sim_state, info, f_env
