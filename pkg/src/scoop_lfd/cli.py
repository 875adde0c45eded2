"""Command-line entry point: collection, training, rollout, evaluation.

Every verb is deterministic given its seed; `LFD_SEED` supplies the
default seed, a JSON config file supplies flag defaults, and explicit
flags win over both.  Exit codes: 0 success, 2 validation error,
3 training abort, 4 evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from scoop_lfd.dcae import (
    DcaeConfig,
    build_dcae,
    dcae_blocks,
    dcae_config_dict,
    dcae_from_parts,
    encode,
    recon_error,
    train_dcae,
)
from scoop_lfd.errors import (
    PipelineError,
    PlanningError,
    ShapeMismatchError,
    StoreFormatError,
    TrainingDivergedError,
)
from scoop_lfd.experiments import (
    collect_demo_dataset,
    collect_grid_dataset,
    format_matrix,
    load_models,
    run_experiment,
    spec_for,
)
from scoop_lfd.motion_rnn import (
    RnnConfig,
    build_rnn,
    rnn_blocks,
    rnn_config_dict,
    rollout,
    train_rnn_on_demos,
)
from scoop_lfd.nn.rng import spawn_rng
from scoop_lfd.sim import position_name, scene_for
from scoop_lfd.store import (
    load_dataset,
    load_model,
    load_sequence,
    save_model,
    save_sequence,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRAINING = 3
EXIT_EVALUATION = 4


def _default_seed() -> int:
    raw = os.environ.get("LFD_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"LFD_SEED must be an integer, got {raw!r}")


def _load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return doc


def _apply_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from the config file, then from hard defaults."""
    config = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in config.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"config key {key!r} is not a flag of this command")
        if getattr(args, attr) is None:
            setattr(args, attr, value)
    for attr, value in defaults.items():
        if getattr(args, attr) is None:
            setattr(args, attr, value)
    return args


def _load_sequences(path):
    """A dataset directory or a single stored sequence, as a list."""
    p = Path(path)
    if p.is_dir():
        ds = load_dataset(p)
        return [ds.sequence(i) for i in range(len(ds))]
    return [load_sequence(p)]


def _stack_frames(sequences, stride: int) -> np.ndarray:
    return np.concatenate([seq.images()[::stride] for seq in sequences], axis=0)


# ---- verbs ----


def cmd_collect_demos(args) -> int:
    _apply_config(args, {"experiment": "exp1", "scale": "desk", "seed": _default_seed(), "jobs": 1})
    spec = spec_for(args.experiment, args.scale, args.seed)
    dataset = collect_demo_dataset(spec, args.out, jobs=args.jobs, log=print)
    print(f"{len(dataset)} sequences in {args.out}")
    return EXIT_OK


def cmd_collect_grid(args) -> int:
    _apply_config(args, {"experiment": "exp3", "scale": "desk", "seed": _default_seed()})
    spec = spec_for(args.experiment, args.scale, args.seed)
    if spec.grid is None:
        raise ValueError(f"{args.experiment} has no image grid; use exp3")
    dataset = collect_grid_dataset(spec, args.out, log=print)
    print(f"{dataset.entries[0]['meta']['count']} grid images in {args.out}")
    return EXIT_OK


def cmd_train_dcae(args) -> int:
    _apply_config(
        args,
        {"seed": _default_seed(), "epochs": 50, "batch_size": 32, "lr": 3e-3, "stride": 1},
    )
    sequences = _load_sequences(args.data)
    images = _stack_frames(sequences, args.stride)
    if args.grid:
        for seq in _load_sequences(args.grid):
            images = np.concatenate([images, seq.images()], axis=0)
    print(f"training on {len(images)} images")
    cfg = DcaeConfig(epochs=args.epochs, batch_size=args.batch_size)
    model = build_dcae(cfg, spawn_rng(args.seed, 101))
    history = train_dcae(model, images, spawn_rng(args.seed, 102), lr=args.lr, log=print)
    save_model(args.out, "dcae", dcae_config_dict(cfg), dcae_blocks(model))
    Path(str(args.out) + ".losses.json").write_text(json.dumps(history) + "\n")
    print(f"model written to {args.out}; final loss {history[-1]:.6f}")
    return EXIT_OK


def cmd_train_rnn(args) -> int:
    _apply_config(
        args,
        {"seed": _default_seed(), "iterations": 500, "batch_size": 32, "lr": 1e-3},
    )
    kind, cfg_doc, blocks = load_model(args.dcae)
    if kind != "dcae":
        raise ValueError(f"{args.dcae} holds a {kind!r} model, expected dcae")
    dcae_model = dcae_from_parts(cfg_doc, blocks)
    sequences = _load_sequences(args.data)
    cfg = RnnConfig(
        feature_size=dcae_model.config.code_size,
        joint_size=sequences[0].frames[0].joints.shape[0],
        iterations=args.iterations,
        batch_size=args.batch_size,
    )
    model = build_rnn(cfg, spawn_rng(args.seed, 201))
    history = train_rnn_on_demos(
        model, dcae_model, sequences, spawn_rng(args.seed, 202), lr=args.lr, log=print
    )
    save_model(args.out, "rnn", rnn_config_dict(cfg), rnn_blocks(model))
    Path(str(args.out) + ".losses.json").write_text(json.dumps(history) + "\n")
    print(f"model written to {args.out}; final loss {history[-1]:.6f}")
    return EXIT_OK


def cmd_encode(args) -> int:
    _apply_config(args, {"stride": 1})
    kind, cfg_doc, blocks = load_model(args.model)
    if kind != "dcae":
        raise ValueError(f"{args.model} holds a {kind!r} model, expected dcae")
    model = dcae_from_parts(cfg_doc, blocks)
    out = {}
    p = Path(args.data)
    if p.is_dir():
        ds = load_dataset(p)
        items = [(ds.entries[i]["file"], ds.sequence(i)) for i in range(len(ds))]
    else:
        items = [(p.name, load_sequence(p))]
    for name, seq in items:
        feats = encode(model, seq.images()[:: args.stride])
        out[name] = [[round(float(v), 6) for v in row] for row in feats]
    text = json.dumps(out, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"features for {len(out)} sequences written to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval_recon(args) -> int:
    _apply_config(args, {"stride": 1})
    kind, cfg_doc, blocks = load_model(args.model)
    if kind != "dcae":
        raise ValueError(f"{args.model} holds a {kind!r} model, expected dcae")
    model = dcae_from_parts(cfg_doc, blocks)
    sequences = _load_sequences(args.data)
    images = _stack_frames(sequences, args.stride)
    err = recon_error(model, images)
    if not np.isfinite(err):
        raise PipelineError("eval-recon", "reconstruction error is not finite")
    print(f"recon MSE over {len(images)} images: {err:.6f}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    _apply_config(
        args,
        {
            "seed": _default_seed(),
            "position": 0,
            "color": "yellow",
            "fill": "high",
            "steps": 60,
        },
    )
    dcae_model, rnn_model = load_models(args.dcae, args.rnn)
    fills = ("high", "low") if args.fill == "both" else (args.fill,)
    verdicts = {}
    for fill in fills:
        scene = scene_for(args.position, args.color, fill)
        seq, outcome = rollout(rnn_model, dcae_model, scene, args.steps, args.seed)
        out_path = Path(args.out)
        if len(fills) > 1:
            out_path = out_path.with_name(out_path.stem + f"_{fill}" + out_path.suffix)
        save_sequence(out_path, seq)
        verdicts[fill] = outcome.success
        tag = "success" if outcome.success else "failure"
        print(
            f"{position_name(args.position)} {args.color}/{fill} seed {args.seed}: {tag} "
            f"(scooped {outcome.scooped_fraction:.2f}, peak force {outcome.max_force:.1f}) "
            f"-> {out_path}"
        )
    if len(verdicts) > 1:
        print(f"fill discrimination: {'yes' if verdicts['high'] != verdicts['low'] else 'no'}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    _apply_config(args, {"scale": "desk", "seed": _default_seed(), "jobs": 1})
    spec = spec_for(args.experiment, args.scale, args.seed)
    report = run_experiment(spec, args.out, jobs=args.jobs, log=print)
    print()
    print(format_matrix([report]))
    for key, value in sorted(report.recon.items()):
        print(f"recon {key}: {value:.6f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    _apply_config(args, {"host": "127.0.0.1", "port": 8765})
    from scoop_lfd.bridge import serve

    serve(host=args.host, port=args.port, record_dir=args.record_dir)
    return EXIT_OK


# ---- parser ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfd",
        description="Scooping-from-demonstration pipeline: collect, train, roll out, evaluate.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
        return p

    p = add("collect-demos", cmd_collect_demos, "record scripted demonstrations")
    p.add_argument("--experiment", choices=("exp1", "exp2", "exp3"))
    p.add_argument("--scale", choices=("desk", "paper"))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True)

    p = add("collect-grid", cmd_collect_grid, "render the untaught pose-grid image sweep")
    p.add_argument("--experiment", choices=("exp1", "exp2", "exp3"))
    p.add_argument("--scale", choices=("desk", "paper"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("train-dcae", cmd_train_dcae, "train the image auto-encoder on stored sequences")
    p.add_argument("--data", required=True, help="dataset directory or one .lfds file")
    p.add_argument("--grid", help="extra image dataset to append")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--stride", type=int, help="use every Nth frame")

    p = add("train-rnn", cmd_train_rnn, "train the motion model on encoded sequences")
    p.add_argument("--data", required=True)
    p.add_argument("--dcae", required=True, help="trained image model file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)

    p = add("encode", cmd_encode, "extract feature vectors from stored images")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--stride", type=int)

    p = add("eval-recon", cmd_eval_recon, "reconstruction error of a model on stored images")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--stride", type=int)

    p = add("rollout", cmd_rollout, "run the learned controller closed loop")
    p.add_argument("--dcae", required=True)
    p.add_argument("--rnn", required=True)
    p.add_argument("--position", type=int)
    p.add_argument("--color", choices=("yellow", "green"))
    p.add_argument("--fill", choices=("high", "low", "both"))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="trajectory file to write")

    p = add("reproduce", cmd_reproduce, "run one study end to end and print its matrix")
    p.add_argument("--experiment", required=True, choices=("exp1", "exp2", "exp3"))
    p.add_argument("--scale", choices=("desk", "paper"))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, help="directory for all artifacts")

    p = add("serve", cmd_serve, "serve the teleoperation bridge over WebSocket")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--record-dir", default="recordings")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e.__cause__, TrainingDivergedError) or e.stage.startswith("train"):
            return EXIT_TRAINING
        if e.stage.startswith(("eval", "rollout")):
            return EXIT_EVALUATION
        return EXIT_VALIDATION
    except (ValueError, StoreFormatError, ShapeMismatchError, PlanningError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
