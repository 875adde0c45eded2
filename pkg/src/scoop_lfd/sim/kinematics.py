"""Forward kinematics, the tool Jacobian and damped least squares IK."""
from __future__ import annotations

import numpy as np

from scoop_lfd.errors import ShapeMismatchError
from scoop_lfd.sim.scene import Pose2D, SceneConfig


def joint_positions(q, cfg: SceneConfig) -> np.ndarray:
    """(n_joints + 1, 2) chain points from the base to the wrist."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (cfg.n_joints,):
        raise ShapeMismatchError(f"expected {cfg.n_joints} joint angles, got shape {q.shape}")
    angles = np.cumsum(q)
    pts = np.empty((cfg.n_joints + 1, 2))
    pts[0] = (cfg.base_x, cfg.base_y)
    pts[1:, 0] = cfg.base_x + np.cumsum(cfg.link_length * np.cos(angles))
    pts[1:, 1] = cfg.base_y + np.cumsum(cfg.link_length * np.sin(angles))
    return pts


def fk(q, cfg: SceneConfig) -> Pose2D:
    """Tool tip pose; the tool extends the last link by tool_length."""
    pts = joint_positions(q, cfg)
    phi = float(np.sum(q))
    tip = pts[-1] + cfg.tool_length * np.array([np.cos(phi), np.sin(phi)])
    return Pose2D(float(tip[0]), float(tip[1]), phi)


def jacobian(q, cfg: SceneConfig) -> np.ndarray:
    """3 x n_joints tool Jacobian; rows are d(x, y, theta)/dq."""
    pts = joint_positions(q, cfg)
    pose = fk(q, cfg)
    tip = np.array([pose.x, pose.y])
    jac = np.empty((3, cfg.n_joints))
    for i in range(cfg.n_joints):
        r = tip - pts[i]
        jac[0, i] = -r[1]
        jac[1, i] = r[0]
        jac[2, i] = 1.0
    return jac


def ik_velocity(q, v_des, cfg: SceneConfig, damping: float = 0.05) -> np.ndarray:
    """Joint rates realizing a desired tip twist (vx, vy, omega).

    Damped least squares: qdot = J^T (J J^T + damping^2 I)^-1 v, bounded
    near singularities with peak gain 1 / (2 * damping).
    """
    v = np.asarray(v_des, dtype=np.float64)
    if v.shape != (3,):
        raise ShapeMismatchError(f"tip velocity must be (vx, vy, omega), got shape {v.shape}")
    jac = jacobian(q, cfg)
    core = jac @ jac.T + (damping * damping) * np.eye(3)
    return jac.T @ np.linalg.solve(core, v)
