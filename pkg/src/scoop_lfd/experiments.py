"""End-to-end studies: collect demos, train both models, evaluate.

Three standard setups are provided.  `exp1` trains and tests at a single
bowl slot.  `exp2` trains on six slots and holds the seventh out entirely,
probing interpolation.  `exp3` repeats `exp2` but adds an untaught pose
grid to the image model's training set.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scoop_lfd.dcae import (
    DcaeConfig,
    DcaeModel,
    build_dcae,
    dcae_blocks,
    dcae_config_dict,
    dcae_from_parts,
    recon_error,
    train_dcae,
)
from scoop_lfd.demos import GridSpec, grid_augment, record_demo
from scoop_lfd.errors import PipelineError, TrainingDivergedError
from scoop_lfd.motion_rnn import (
    RnnConfig,
    RnnModel,
    build_rnn,
    rnn_blocks,
    rnn_config_dict,
    rnn_from_parts,
    rollout,
    train_rnn_on_demos,
)
from scoop_lfd.nn.rng import spawn_rng
from scoop_lfd.sim import BOWL_COLORS, BOWL_POSITIONS, FILL_LEVELS, position_name, scene_for
from scoop_lfd.store import (
    Dataset,
    DemoFrame,
    DemoSequence,
    load_model,
    save_dataset,
    save_model,
    save_sequence,
)

EXPERIMENTS = ("exp1", "exp2", "exp3")
SCALES = ("desk", "paper")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun a study from a single seed."""

    experiment: str
    scale: str = "desk"
    seed: int = 0
    positions: tuple[int, ...] = (0,)
    holdout_position: int | None = None
    per_combo: int = 5
    noise: float = 0.005
    frame_stride: int = 2
    dcae_epochs: int = 50
    dcae_batch: int = 32
    dcae_lr: float = 3e-3
    rnn_iterations: int = 500
    rnn_batch: int = 32
    rnn_lr: float = 1e-3
    grid: GridSpec | None = None
    # (position, color, fill) triples, each rolled out over rollout_seeds
    rollout_scenes: tuple[tuple[int, str, str], ...] = ((0, "yellow", "high"),)
    rollout_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    rollout_steps: int = 60

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not self.positions:
            raise ValueError("positions must not be empty")
        for p in self.positions:
            if not 0 <= p < len(BOWL_POSITIONS):
                raise ValueError(f"position index {p} out of range")
        if self.holdout_position is not None and self.holdout_position not in self.positions:
            raise ValueError("holdout_position must be one of the collected positions")
        if self.per_combo < 1:
            raise ValueError("per_combo must be at least 1")
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be at least 1")
        for pos, color, fill in self.rollout_scenes:
            if not 0 <= pos < len(BOWL_POSITIONS):
                raise ValueError(f"rollout position index {pos} out of range")
            if color not in BOWL_COLORS or fill not in FILL_LEVELS:
                raise ValueError(f"unknown rollout scene variant ({color!r}, {fill!r})")

    @property
    def trained_positions(self) -> tuple[int, ...]:
        return tuple(p for p in self.positions if p != self.holdout_position)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["grid"] = dataclasses.asdict(self.grid) if self.grid else None
        return doc


def spec_for(experiment: str, scale: str = "desk", seed: int = 0) -> ExperimentSpec:
    """The standard configuration of each study at the given scale."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    iters = 500 if scale == "desk" else 3000
    if experiment == "exp1":
        return ExperimentSpec(
            experiment=experiment,
            scale=scale,
            seed=seed,
            positions=(0,),
            frame_stride=2,
            rnn_iterations=iters,
            rollout_scenes=((0, "yellow", "high"), (0, "yellow", "low")),
        )
    grid = None
    rollout_steps = 60
    if experiment == "exp3":
        if scale == "desk":
            grid = GridSpec(n_positions=25, n_poses=15, n_thetas=3)
        else:
            grid = GridSpec(n_positions=100, n_poses=45, n_thetas=3)
        # Image features spread over the whole workspace make the learned
        # motion approach more tentatively; give the scoop room to finish
        # instead of cutting it off mid-sweep.
        rollout_steps = 90
    return ExperimentSpec(
        experiment=experiment,
        scale=scale,
        seed=seed,
        positions=tuple(range(7)),
        holdout_position=3,
        frame_stride=4,
        rnn_iterations=iters,
        grid=grid,
        rollout_scenes=((0, "yellow", "high"), (3, "yellow", "high")),
        rollout_steps=rollout_steps,
    )


def config_hash(spec: ExperimentSpec, dcae_cfg: DcaeConfig, rnn_cfg: RnnConfig) -> str:
    doc = {
        "spec": spec.to_dict(),
        "dcae": dcae_config_dict(dcae_cfg),
        "rnn": rnn_config_dict(rnn_cfg),
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---- collection ----


def demo_tasks(spec: ExperimentSpec) -> list[tuple[int, int, str, str]]:
    """(index, position, color, fill) for every demonstration to record."""
    tasks = []
    index = 0
    for position in spec.positions:
        for color in BOWL_COLORS:
            for fill in FILL_LEVELS:
                for _ in range(spec.per_combo):
                    tasks.append((index, position, color, fill))
                    index += 1
    return tasks


def _record_task(args):
    index, position, color, fill, seed, noise = args
    seq, outcome = record_demo(scene_for(position, color, fill), seed, index, noise)
    return index, seq, outcome.success


def collect_demo_dataset(spec: ExperimentSpec, root, jobs: int = 1, log=None) -> Dataset:
    """Record every demonstration the experiment calls for under `root`.

    Sequences are keyed by (spec.seed, global index), so the result is
    identical whether recorded serially or across worker processes.
    """
    tasks = [(i, p, c, f, spec.seed, spec.noise) for i, p, c, f in demo_tasks(spec)]
    results = [None] * len(tasks)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, seq, ok in pool.map(_record_task, tasks, chunksize=4):
                results[index] = (seq, ok)
    else:
        for task in tasks:
            index, seq, ok = _record_task(task)
            results[index] = (seq, ok)
    failures = [i for i, r in enumerate(results) if r is not None and not r[1]]
    if failures:
        warnings.warn(f"{len(failures)} of {len(results)} demonstrations did not scoop cleanly")
    sequences = [seq for seq, _ in results]
    dataset = save_dataset(root, sequences)
    if log:
        log(f"recorded {len(sequences)} demonstrations to {root}")
    return dataset


def collect_grid_dataset(spec: ExperimentSpec, root, log=None) -> Dataset:
    """Render the untaught pose sweep and store it as one image sequence."""
    if spec.grid is None:
        raise ValueError("spec has no grid to collect")
    scenes = [
        scene_for(p, c, f)
        for p in spec.positions
        for c in BOWL_COLORS
        for f in FILL_LEVELS
    ]
    grid = grid_augment(scenes, spec.grid, seed=spec.seed)
    zero_force = np.zeros(3, dtype=np.float32)
    frames = [
        DemoFrame(image=img, joints=q.astype(np.float32), tool_force=zero_force.copy(), material_level=0.0)
        for img, q in zip(grid.images, grid.joints)
    ]
    seq = DemoSequence(
        frames=frames,
        meta={
            "kind": "grid",
            "count": len(grid.images),
            "positions": spec.grid.n_positions,
            "poses": spec.grid.n_poses,
            "orientations": spec.grid.n_thetas,
            "scenes": len(scenes),
            "resampled": grid.resampled,
        },
    )
    dataset = save_dataset(root, [seq])
    if log:
        log(f"rendered {len(grid.images)} grid images to {root} ({grid.resampled} redraws)")
    return dataset


# ---- dataset splits ----


def split_dataset(dataset: Dataset, spec: ExperimentSpec):
    """Partition stored demos into train / trained-slot test / held-out-slot test.

    The last sequence recorded at each slot is reserved for testing, so one
    slot yields a 19/1 split at the standard count; every sequence at the
    held-out slot is test data.
    """
    train, test_trained, test_holdout = [], [], []
    position_counts: dict[int, int] = {}
    for entry in dataset.entries:
        position = entry.get("meta", {}).get("position")
        position_counts[position] = position_counts.get(position, 0) + 1
    position_seen: dict[int, int] = {}
    for i, entry in enumerate(dataset.entries):
        position = entry.get("meta", {}).get("position")
        position_seen[position] = position_seen.get(position, 0) + 1
        if spec.holdout_position is not None and position == spec.holdout_position:
            test_holdout.append(i)
        elif position_seen[position] == position_counts[position] and position_counts[position] > 1:
            test_trained.append(i)
        else:
            train.append(i)
    return train, test_trained, test_holdout


def stack_images(dataset: Dataset, indices, stride: int = 1) -> np.ndarray:
    parts = [dataset.sequence(i).images()[::stride] for i in indices]
    if not parts:
        raise ValueError("no sequences selected")
    return np.concatenate(parts, axis=0)


# ---- reports ----


@dataclass
class RolloutRecord:
    position: int
    color: str
    fill: str
    seed: int
    success: bool
    scooped_fraction: float
    max_force: float
    limit_hit: bool
    trajectory: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunReport:
    """Everything a rerun needs to be checked against: config, metrics, files."""

    experiment: str
    scale: str
    seed: int
    config_hash: str
    counts: dict = field(default_factory=dict)
    recon: dict = field(default_factory=dict)
    rollouts: list[RolloutRecord] = field(default_factory=list)
    losses: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def successes_at(self, position: int, fill: str = "high") -> tuple[int, int]:
        runs = [r for r in self.rollouts if r.position == position and r.fill == fill]
        return sum(1 for r in runs if r.success), len(runs)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["rollouts"] = [r.to_dict() for r in self.rollouts]
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")


def load_report(path) -> RunReport:
    doc = json.loads(Path(path).read_text())
    doc["rollouts"] = [RolloutRecord(**r) for r in doc["rollouts"]]
    return RunReport(**doc)


def format_matrix(reports: list[RunReport]) -> str:
    """Success matrix over bowl slots, one column per study.

    A cell is filled when more than half of that slot's rollouts scooped
    successfully, crossed when they ran and did not, and dashed when the
    slot was not tested in that study.
    """
    columns = [r.experiment for r in reports]
    lines = ["slot  " + "  ".join(f"{c:>5}" for c in columns)]
    for position in range(len(BOWL_POSITIONS)):
        cells = []
        for report in reports:
            wins, total = report.successes_at(position)
            if total == 0:
                cells.append("-")
            elif wins * 2 > total:
                cells.append("o")
            else:
                cells.append("x")
        lines.append(f"{position_name(position):<4}  " + "  ".join(f"{c:>5}" for c in cells))
    return "\n".join(lines) + "\n"


# ---- pipeline ----


def _stage(name: str, log, fn, *args, **kw):
    t0 = time.monotonic()
    if log:
        log(f"[{name}] ...")
    try:
        out = fn(*args, **kw)
    except (PipelineError, TrainingDivergedError):
        raise
    except Exception as e:
        raise PipelineError(name, str(e)) from e
    dt = time.monotonic() - t0
    if log:
        log(f"[{name}] done in {dt:.1f}s")
    return out, dt


def run_experiment(spec: ExperimentSpec, workdir, jobs: int = 1, log=None) -> RunReport:
    """Run one study end to end, leaving every artifact under `workdir`."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    dcae_cfg = DcaeConfig(epochs=spec.dcae_epochs, batch_size=spec.dcae_batch)
    rnn_cfg = RnnConfig(iterations=spec.rnn_iterations, batch_size=spec.rnn_batch)
    report = RunReport(
        experiment=spec.experiment,
        scale=spec.scale,
        seed=spec.seed,
        config_hash=config_hash(spec, dcae_cfg, rnn_cfg),
    )
    (workdir / "spec.json").write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=1) + "\n")

    demos_dir = workdir / "demos"
    dataset, dt = _stage("collect", log, collect_demo_dataset, spec, demos_dir, jobs, log)
    report.stage_seconds["collect"] = dt
    report.artifacts["demos"] = str(demos_dir)
    report.counts["sequences"] = len(dataset)

    grid_images = None
    if spec.grid is not None:
        grid_dir = workdir / "grid"
        grid_ds, dt = _stage("collect-grid", log, collect_grid_dataset, spec, grid_dir, log)
        grid_images = grid_ds.sequence(0).images()
        report.stage_seconds["collect-grid"] = dt
        report.artifacts["grid"] = str(grid_dir)
        report.counts["grid_images"] = len(grid_images)

    train_idx, test_trained_idx, test_holdout_idx = split_dataset(dataset, spec)
    report.counts["train_sequences"] = len(train_idx)
    report.counts["test_trained_sequences"] = len(test_trained_idx)
    report.counts["test_holdout_sequences"] = len(test_holdout_idx)

    def _train_dcae():
        images = stack_images(dataset, train_idx, spec.frame_stride)
        if grid_images is not None:
            images = np.concatenate([images, grid_images], axis=0)
        report.counts["dcae_images"] = len(images)
        model = build_dcae(dcae_cfg, spawn_rng(spec.seed, 101))
        history = train_dcae(model, images, spawn_rng(spec.seed, 102), lr=spec.dcae_lr, log=log)
        return model, history

    (dcae_model, dcae_hist), dt = _stage("train-dcae", log, _train_dcae)
    report.stage_seconds["train-dcae"] = dt
    report.losses["dcae_final"] = dcae_hist[-1]
    dcae_path = workdir / "dcae.lfdm"
    save_model(dcae_path, "dcae", dcae_config_dict(dcae_cfg), dcae_blocks(dcae_model))
    report.artifacts["dcae"] = str(dcae_path)

    def _train_rnn():
        demo_seqs = [dataset.sequence(i) for i in train_idx]
        model = build_rnn(rnn_cfg, spawn_rng(spec.seed, 201))
        history = train_rnn_on_demos(
            model, dcae_model, demo_seqs, spawn_rng(spec.seed, 202), lr=spec.rnn_lr, log=log
        )
        return model, history

    (rnn_model, rnn_hist), dt = _stage("train-rnn", log, _train_rnn)
    report.stage_seconds["train-rnn"] = dt
    report.losses["rnn_final"] = rnn_hist[-1]
    rnn_path = workdir / "rnn.lfdm"
    save_model(rnn_path, "rnn", rnn_config_dict(rnn_cfg), rnn_blocks(rnn_model))
    report.artifacts["rnn"] = str(rnn_path)
    (workdir / "losses.json").write_text(
        json.dumps({"dcae": dcae_hist, "rnn": rnn_hist}, indent=1) + "\n"
    )

    def _recon():
        out = {"train": recon_error(dcae_model, stack_images(dataset, train_idx, spec.frame_stride))}
        if test_trained_idx:
            out["test_trained"] = recon_error(dcae_model, stack_images(dataset, test_trained_idx))
        if test_holdout_idx:
            out["test_holdout"] = recon_error(dcae_model, stack_images(dataset, test_holdout_idx))
        return out

    report.recon, dt = _stage("eval-recon", log, _recon)
    report.stage_seconds["eval-recon"] = dt

    def _rollouts():
        rollouts_dir = workdir / "rollouts"
        rollouts_dir.mkdir(exist_ok=True)
        records = []
        for position, color, fill in spec.rollout_scenes:
            scene = scene_for(position, color, fill)
            for seed in spec.rollout_seeds:
                seq, outcome = rollout(rnn_model, dcae_model, scene, spec.rollout_steps, seed)
                name = f"{position_name(position)}_{color}_{fill}_seed{seed}.lfds"
                save_sequence(rollouts_dir / name, seq)
                records.append(
                    RolloutRecord(
                        position=position,
                        color=color,
                        fill=fill,
                        seed=seed,
                        success=outcome.success,
                        scooped_fraction=round(outcome.scooped_fraction, 6),
                        max_force=round(outcome.max_force, 6),
                        limit_hit=outcome.limit_hit,
                        trajectory=str(rollouts_dir / name),
                    )
                )
                if log:
                    tag = "ok" if outcome.success else "miss"
                    log(
                        f"  rollout {position_name(position)} {color}/{fill} "
                        f"seed {seed}: {tag} ({outcome.scooped_fraction:.2f})"
                    )
        report.artifacts["rollouts"] = str(rollouts_dir)
        return records

    report.rollouts, dt = _stage("rollout", log, _rollouts)
    report.stage_seconds["rollout"] = dt

    report.save(workdir / "report.json")
    (workdir / "matrix.txt").write_text(format_matrix([report]))
    if log:
        total = sum(report.stage_seconds.values())
        log(f"{spec.experiment} finished in {total:.0f}s; report at {workdir / 'report.json'}")
    return report


def load_models(dcae_path, rnn_path) -> tuple[DcaeModel, RnnModel]:
    """Load a trained model pair, checking that their feature sizes agree."""
    kind, cfg, blocks = load_model(dcae_path)
    if kind != "dcae":
        raise ValueError(f"{dcae_path} holds a {kind!r} model, expected dcae")
    dcae_model = dcae_from_parts(cfg, blocks)
    kind, cfg, blocks = load_model(rnn_path)
    if kind != "rnn":
        raise ValueError(f"{rnn_path} holds a {kind!r} model, expected rnn")
    rnn_model = rnn_from_parts(cfg, blocks)
    if rnn_model.config.feature_size != dcae_model.config.code_size:
        raise ValueError(
            f"feature size mismatch: image model emits {dcae_model.config.code_size}, "
            f"motion model expects {rnn_model.config.feature_size}"
        )
    return dcae_model, rnn_model
