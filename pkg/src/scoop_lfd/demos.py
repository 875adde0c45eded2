"""Scripted scooping demonstrations and pose-grid image sweeps.

A demonstration drives the bilateral loop through a fixed phase plan:
hold at home, approach the bowl, insert the spoon into the material,
sweep across the bowl, lift level above the rim, withdraw.  Small seeded
waypoint noise varies the strokes; clamping keeps the stroke inside the
bowl interior so noise never turns a demonstration into a wall strike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from scoop_lfd.bilateral import BilateralConfig, BilateralState, teleop_tick
from scoop_lfd.errors import PlanningError
from scoop_lfd.nn.rng import spawn_rng
from scoop_lfd.sim.kinematics import fk, ik_velocity
from scoop_lfd.sim.render import render_scene
from scoop_lfd.sim.scene import BOWL_POSITIONS, HOME_Q, SceneConfig, SimState, initial_state
from scoop_lfd.sim.world import RunOutcome, contact_force, evaluate_run
from scoop_lfd.store import DemoFrame, DemoSequence

INSERT_DEPTH = 0.012  # below the material surface
FRAME_PERIOD = 4

# (name, steps) in execution order; 240 steps = 60 recorded frames.
PHASE_STEPS = (
    ("home", 20),
    ("approach", 50),
    ("insert", 45),
    ("sweep", 45),
    ("lift", 50),
    ("withdraw", 30),
)


@dataclass(frozen=True)
class ScoopPlan:
    phases: tuple[tuple[str, np.ndarray, int], ...]  # (name, tip waypoint, steps)
    frame_period: int = FRAME_PERIOD

    @property
    def total_steps(self) -> int:
        return sum(steps for _, _, steps in self.phases)


def _interior_half_width(cfg: SceneConfig, y: float) -> float:
    cy = cfg.bowl_center[1]
    s = cfg.bowl_radius**2 - (y - cy) ** 2
    if s <= 0.0:
        raise PlanningError(f"height {y:.3f} is outside the bowl interior")
    return math.sqrt(s)


def plan_scoop(cfg: SceneConfig, rng: np.random.Generator | None = None, noise: float = 0.005) -> ScoopPlan:
    """Waypoint plan for one scoop of the configured scene."""
    home = fk(HOME_Q, cfg).as_array()
    bx, rim_y = cfg.bowl_center
    surface = cfg.surface_height(cfg.initial_units)
    insert_y = surface - INSERT_DEPTH
    if insert_y <= 0.004:
        raise PlanningError(f"fill too shallow to insert: surface {surface:.3f}")
    half = _interior_half_width(cfg, insert_y)

    # The sweep digs 12 mm under the insert height: the surface falls as
    # grains load the spoon, and the tip has to follow it down.
    targets = {
        "home": home,
        "approach": np.array([bx - 0.55 * half, rim_y + 0.10, -0.9]),
        "insert": np.array([bx - 0.55 * half, insert_y, -0.9]),
        "sweep": np.array([bx + 0.55 * half, insert_y - 0.012, -0.3]),
        "lift": np.array([bx + 0.02, rim_y + 0.12, 0.0]),
        "withdraw": np.array([home[0] + 0.03, home[1] - 0.06, -0.2]),
    }
    if rng is not None and noise > 0.0:
        for name in ("approach", "insert", "sweep", "lift", "withdraw"):
            targets[name] = targets[name] + np.concatenate([rng.normal(0.0, noise, 2), rng.normal(0.0, noise, 1)])
        # Keep the stroke inside the bowl whatever the noise drew.
        ti, ts = targets["insert"], targets["sweep"]
        ti[1] = np.clip(ti[1], 0.008, surface - 0.006)
        ts[1] = np.clip(ts[1], 0.005, max(0.005, ti[1] - 0.008))
        for t in (ti, ts):
            hw = _interior_half_width(cfg, t[1])
            t[0] = np.clip(t[0], bx - 0.8 * hw, bx + 0.8 * hw)
            t[2] = np.clip(t[2], -0.95, 0.0)
        targets["lift"][1] = max(targets["lift"][1], rim_y + 0.08)
        targets["lift"][2] = np.clip(targets["lift"][2], -0.4, 0.4)

    phases = tuple((name, targets[name], steps) for name, steps in PHASE_STEPS)
    return ScoopPlan(phases=phases)


def capture_frame(cfg: SceneConfig, state: SimState, initial_units: int) -> DemoFrame:
    level = state.on_spoon / initial_units if initial_units else 0.0
    return DemoFrame(
        image=render_scene(cfg, state),
        joints=np.asarray(state.q, dtype=np.float32),
        tool_force=(-contact_force(state.q, cfg)).astype(np.float32),
        material_level=float(np.float32(level)),
    )


def run_plan(cfg: SceneConfig, plan: ScoopPlan, bcfg: BilateralConfig | None = None):
    """Execute a plan through the bilateral loop, recording frames.

    Returns (sequence, outcome); the sequence is unjudged raw data and the
    outcome says whether it counts as a successful demonstration.
    """
    bcfg = bcfg or BilateralConfig()
    sim = initial_state(cfg)
    bstate = BilateralState.at(fk(sim.q, cfg).as_array())
    initial_units = sim.in_bowl
    frames = []
    trace = []
    t = 0
    for _, waypoint, steps in plan.phases:
        for _ in range(steps):
            if t % plan.frame_period == 0:
                frames.append(capture_frame(cfg, sim, initial_units))
            bstate, sim, info, _ = teleop_tick(cfg, bcfg, bstate, sim, waypoint)
            trace.append((sim, info))
            t += 1
    outcome = evaluate_run(cfg, initial_units, trace)
    seq = DemoSequence(frames=frames, meta=sequence_meta(cfg, outcome))
    return seq, outcome


def record_demo(cfg: SceneConfig, seed: int, sequence_index: int = 0, noise: float = 0.005):
    """One noisy demonstration; the stream is keyed by (seed, index)."""
    rng = spawn_rng(seed, sequence_index)
    plan = plan_scoop(cfg, rng=rng, noise=noise)
    seq, outcome = run_plan(cfg, plan)
    seq.meta["seed"] = int(seed)
    seq.meta["sequence_index"] = int(sequence_index)
    return seq, outcome


def sequence_meta(cfg: SceneConfig, outcome: RunOutcome) -> dict:
    try:
        position = BOWL_POSITIONS.index(cfg.bowl_x)
    except ValueError:
        position = -1
    return {
        "position": position,
        "bowl_x": cfg.bowl_x,
        "color": cfg.bowl_color,
        "fill": cfg.fill,
        "success": outcome.success,
        "scooped_fraction": round(outcome.scooped_fraction, 6),
        "max_force": round(outcome.max_force, 6),
    }


# ---- pose-grid image sweeps ----


@dataclass(frozen=True)
class GridSpec:
    """Workspace sweep: bowls on an even grid, random spoon poses at each.

    `n_positions` bowl placements span the scene family's bowl range, so
    slots between and beyond the demonstrated ones appear in image
    training too.  At each placement `n_poses` spoon positions are drawn
    uniformly from a box over the bowl, each rendered at every
    orientation in `thetas`.  The default orientations are the tilts a
    scooping stroke passes through: inserted, mid-sweep, and carrying
    level.
    """

    n_positions: int = 25
    n_poses: int = 15
    n_thetas: int = 3
    x_span: float = 0.08  # pose box half-width either side of the bowl
    y_lo: float = 0.02
    y_hi: float = 0.20
    thetas: tuple[float, ...] = (-0.9, -0.45, 0.0)

    def __post_init__(self):
        if min(self.n_positions, self.n_poses, self.n_thetas) < 1:
            raise ValueError("grid needs at least one placement, pose, and orientation")
        if self.n_thetas > len(self.thetas):
            raise ValueError(f"need {self.n_thetas} orientation values, got {len(self.thetas)}")

    def count(self) -> int:
        return self.n_positions * self.n_poses * self.n_thetas


def solve_pose(cfg: SceneConfig, target, q0, tol: float = 1e-10, max_iters: int = 3000) -> np.ndarray:
    """Resolved-rate IK to an exact tip pose; raises if it cannot get there."""
    q = np.array(q0, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    for _ in range(max_iters):
        pose = fk(q, cfg)
        err = target - pose.as_array()
        if np.linalg.norm(err) < tol:
            return q
        q = q + ik_velocity(q, 0.5 * err, cfg)
    raise PlanningError(f"pose {target.tolist()} unreachable from the given start")


# Redraws allowed per sampled pose before giving up on the placement.
MAX_REDRAWS = 200


def _stroke_chain(cfg: SceneConfig, bx: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Joint postures along a nominal scooping stroke at one bowl placement.

    A six joint arm is redundant for a planar tip pose, so a cold solve
    from home can settle into a different elbow posture than an arm that
    tracked its way into the bowl.  Warm-starting every sampled pose from
    the nearest stroke waypoint keeps the rendered arm in the posture
    family the recorded sequences actually show.
    """
    scene = replace(cfg, bowl_x=bx)
    cx, rim = scene.bowl_center
    surface = scene.surface_height(scene.initial_units)
    insert_y = surface - INSERT_DEPTH
    half = _interior_half_width(scene, insert_y)
    tips = (
        np.array([cx - 0.55 * half, rim + 0.10, -0.9]),
        np.array([cx - 0.55 * half, insert_y, -0.9]),
        np.array([cx + 0.55 * half, insert_y - 0.012, -0.3]),
        np.array([cx + 0.02, rim + 0.12, 0.0]),
    )
    chain = []
    q = np.array(HOME_Q, dtype=np.float64)
    for tip in tips:
        q = solve_pose(cfg, tip, q)
        chain.append((tip, q))
    return chain


def _nearest_start(chain: list[tuple[np.ndarray, np.ndarray]], x: float, y: float, theta: float) -> np.ndarray:
    # 0.08 m per radian keeps the tilt term on the same scale as the offsets.
    best = min(chain, key=lambda c: math.hypot(x - c[0][0], y - c[0][1]) + 0.08 * abs(theta - c[0][2]))
    return best[1]


@dataclass(frozen=True)
class GridResult:
    images: np.ndarray  # (count, 3, hw, hw) float32
    poses: np.ndarray  # (count, 3) tip targets, satisfied by `joints`
    joints: np.ndarray  # (count, n_joints)
    scene_indices: np.ndarray  # (count,) row k rendered against scenes[i]
    material: np.ndarray  # (count, 2) sampled (in_bowl, on_spoon) units
    resampled: int  # draws outside comfortable reach, replaced


def grid_augment(scenes: list[SceneConfig], spec: GridSpec = GridSpec(), seed: int = 0) -> GridResult:
    """Render bowls across the workspace with randomly posed spoons.

    Bowl placements run on an even grid spanning the scenes' bowl
    positions; colors round-robin through `scenes` image by image, so
    placement and appearance vary independently.  Each image also draws
    a material state (bowl level, spoon load) uniformly over the ranges
    a scoop passes through: demonstration frames show bowls part-emptied
    and spoons carrying grains, and those appearances have to exist in
    image training away from the demonstrated slots too.  Pose draws
    landing outside comfortable reach are replaced (the far side of the
    last slot exceeds the arm's envelope) and the replacement count is
    reported.  Deterministic given the seed.
    """
    if not scenes:
        raise PlanningError("need at least one scene to render the grid against")
    kin = scenes[0]
    hw = kin.image_hw
    if any(s.image_hw != hw or s.n_joints != kin.n_joints for s in scenes):
        raise PlanningError("grid scenes must share image size and joint count")

    lo = min(s.bowl_x for s in scenes)
    hi = max(s.bowl_x for s in scenes)
    placements = np.linspace(lo, hi, spec.n_positions)
    thetas = np.asarray(spec.thetas[: spec.n_thetas], dtype=np.float64)
    reach = 0.94 * kin.n_joints * kin.link_length

    rng = spawn_rng(seed, 331)
    n = spec.count()
    images = np.empty((n, 3, hw, hw), dtype=np.float32)
    poses = np.empty((n, 3))
    joints = np.empty((n, kin.n_joints))
    scene_idx = np.empty(n, dtype=np.int64)
    material = np.empty((n, 2), dtype=np.int64)
    resampled = 0
    k = 0
    for bx in placements:
        chain = _stroke_chain(kin, float(bx))
        for _ in range(spec.n_poses):
            for _ in range(MAX_REDRAWS):
                x = rng.uniform(bx - spec.x_span, bx + spec.x_span)
                y = rng.uniform(spec.y_lo, spec.y_hi)
                if math.hypot(x - kin.base_x, y - kin.base_y) > reach:
                    resampled += 1
                    continue
                try:
                    qs = [solve_pose(kin, (x, y, th), _nearest_start(chain, x, y, th)) for th in thetas]
                    break
                except PlanningError:
                    resampled += 1
            else:
                raise PlanningError(f"no reachable spoon pose near a bowl at x={bx:.3f}")
            for th, q in zip(thetas, qs):
                s = k % len(scenes)
                scene = replace(scenes[s], bowl_x=float(bx))
                in_bowl = int(rng.integers(0, kin.fill_high + 1))
                on_spoon = int(rng.integers(0, kin.spoon_capacity + 1))
                state = SimState(q=tuple(q), in_bowl=in_bowl, on_spoon=on_spoon)
                images[k] = render_scene(scene, state)
                poses[k] = (x, y, th)
                joints[k] = q
                scene_idx[k] = s
                material[k] = (in_bowl, on_spoon)
                k += 1
    return GridResult(images, poses, joints, scene_idx, material, resampled)
