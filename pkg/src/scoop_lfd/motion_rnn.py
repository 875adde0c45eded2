"""Sequence model that continues a motion from recent history.

A fixed-length queue of (image features, joint angles) records feeds a
stacked LSTM; the head predicts the next step's joints and features.
Training windows slide over demonstrations with left padding, repeating
the first record, so the model also learns to start from rest.  All gate
math runs in normalized space; the stats ride along in the model bundle.

The closed-loop runner lives here too: render, encode, predict, track
the predicted joints, repeat.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, replace

import numpy as np

from scoop_lfd.dcae import DcaeModel, encode
from scoop_lfd.demos import FRAME_PERIOD, capture_frame, sequence_meta
from scoop_lfd.errors import ShapeMismatchError, TrainingDivergedError
from scoop_lfd.nn.layers import _glorot
from scoop_lfd.nn.lstm import GATE_NAMES, LstmCellParams, init_lstm_cell, lstm_cell_step
from scoop_lfd.nn.optim import AdamState, adam_step, zero_grads
from scoop_lfd.nn.rng import spawn_rng
from scoop_lfd.nn.tensor import Tensor, mse_loss
from scoop_lfd.sim import RunOutcome, SceneConfig, evaluate_run, initial_state, step
from scoop_lfd.store import DemoSequence

STD_FLOOR = 1e-3


@dataclass(frozen=True)
class RnnConfig:
    feature_size: int = 10
    joint_size: int = 6
    hidden_size: int = 64
    num_layers: int = 2
    queue_length: int = 20
    iterations: int = 500
    batch_size: int = 32

    def __post_init__(self):
        if min(self.feature_size, self.joint_size, self.hidden_size, self.num_layers) < 1:
            raise ValueError("all network sizes must be positive")
        if self.queue_length < 2:
            raise ValueError("queue length must be at least 2")

    @property
    def io_size(self) -> int:
        return self.feature_size + self.joint_size


@dataclass(frozen=True)
class StepRecord:
    """One observation: image features plus the joint angles at that frame."""
    features: np.ndarray
    joints: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        if self.time_index < 0:
            raise ValueError("time index must be nonnegative")

    def as_input(self, cfg: RnnConfig) -> np.ndarray:
        f = np.asarray(self.features, dtype=np.float32)
        j = np.asarray(self.joints, dtype=np.float32)
        if f.shape != (cfg.feature_size,) or j.shape != (cfg.joint_size,):
            raise ShapeMismatchError(f"record shapes {f.shape}/{j.shape} do not match config")
        return np.concatenate([f, j])


def split_prediction(vec: np.ndarray, cfg: RnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """Predictions order joints first, then features."""
    return vec[: cfg.joint_size], vec[cfg.joint_size:]


class InputQueue:
    """Fixed-capacity record window; pushing past capacity drops the oldest."""

    def __init__(self, length: int):
        if length < 1:
            raise ValueError("queue length must be positive")
        self.length = length
        self._records: list[StepRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    @property
    def full(self) -> bool:
        return len(self._records) == self.length

    @property
    def records(self) -> tuple[StepRecord, ...]:
        return tuple(self._records)

    def push(self, record: StepRecord) -> None:
        self._records.append(record)
        if len(self._records) > self.length:
            self._records.pop(0)

    def prefill(self, record: StepRecord) -> None:
        """Load length-1 copies so the first real push completes a window."""
        self._records = [record] * (self.length - 1)

    def window(self, cfg: RnnConfig) -> np.ndarray:
        """Stack whatever is queued, oldest first.  Empty queues are an error."""
        if not self._records:
            raise ShapeMismatchError("cannot build a window from an empty queue")
        return np.stack([r.as_input(cfg) for r in self._records])


@dataclass
class RnnModel:
    config: RnnConfig
    cells: list[LstmCellParams]
    head_w: Tensor
    head_b: Tensor
    in_mean: np.ndarray | None = None
    in_std: np.ndarray | None = None
    out_mean: np.ndarray | None = None
    out_std: np.ndarray | None = None

    def __post_init__(self):
        io = self.config.io_size
        if self.in_mean is None:
            self.in_mean = np.zeros(io, dtype=np.float32)
        if self.in_std is None:
            self.in_std = np.ones(io, dtype=np.float32)
        if self.out_mean is None:
            self.out_mean = np.zeros(io, dtype=np.float32)
        if self.out_std is None:
            self.out_std = np.ones(io, dtype=np.float32)

    def parameters(self) -> list[Tensor]:
        out = []
        for cell in self.cells:
            out.extend(cell.tensors())
        out.extend([self.head_w, self.head_b])
        return out


def build_rnn(cfg: RnnConfig, rng: np.random.Generator) -> RnnModel:
    cells = []
    in_size = cfg.io_size
    for _ in range(cfg.num_layers):
        cells.append(init_lstm_cell(in_size, cfg.hidden_size, rng))
        in_size = cfg.hidden_size
    head_w = _glorot(rng, (cfg.hidden_size, cfg.io_size), cfg.hidden_size, cfg.io_size, np.float32)
    head_b = Tensor(np.zeros(cfg.io_size), requires_grad=True, dtype=np.float32)
    return RnnModel(config=cfg, cells=cells, head_w=head_w, head_b=head_b)


def _forward_windows(model: RnnModel, windows: np.ndarray) -> Tensor:
    """(B, L, io) normalized windows -> (B, io) normalized predictions."""
    cfg = model.config
    batch = windows.shape[0]
    h = [Tensor(np.zeros((batch, cfg.hidden_size), dtype=np.float32)) for _ in model.cells]
    c = [Tensor(np.zeros((batch, cfg.hidden_size), dtype=np.float32)) for _ in model.cells]
    for t in range(windows.shape[1]):
        x = Tensor(windows[:, t, :])
        for i, cell in enumerate(model.cells):
            h[i], c[i] = lstm_cell_step(cell, x, h[i], c[i])
            x = h[i]
    return h[-1] @ model.head_w + model.head_b


def sequence_io(features: np.ndarray, joints: np.ndarray, cfg: RnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """Raw per-frame inputs (T, io) and next-step targets (T-1, io)."""
    features = np.asarray(features, dtype=np.float32)
    joints = np.asarray(joints, dtype=np.float32)
    if features.ndim != 2 or joints.ndim != 2 or features.shape[0] != joints.shape[0]:
        raise ShapeMismatchError(f"features {features.shape} and joints {joints.shape} do not align")
    if features.shape[1] != cfg.feature_size or joints.shape[1] != cfg.joint_size:
        raise ShapeMismatchError(f"widths {features.shape[1]}/{joints.shape[1]} do not match config")
    x = np.concatenate([features, joints], axis=1)
    y = np.concatenate([joints[1:], features[1:]], axis=1)
    return x, y


def _window(xn: np.ndarray, t: int, length: int) -> np.ndarray:
    """History ending at t, left-padded by repeating the first row."""
    if t + 1 >= length:
        return xn[t + 1 - length:t + 1]
    pad = np.repeat(xn[:1], length - 1 - t, axis=0)
    return np.concatenate([pad, xn[:t + 1]], axis=0)


def _normalize(rows: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (rows - mean) / std


def train_rnn(
    model: RnnModel,
    sequences: list[tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator,
    iterations: int | None = None,
    batch_size: int | None = None,
    lr: float = 1e-3,
    log=None,
) -> list[float]:
    """Fit next-step prediction on (features, joints) sequences.

    Windows are sampled uniformly over every sequence and every end step;
    the loss is taken on the final step of each window only.
    """
    cfg = model.config
    iterations = cfg.iterations if iterations is None else iterations
    batch_size = cfg.batch_size if batch_size is None else batch_size
    pairs = [sequence_io(f, j, cfg) for f, j in sequences]
    if not pairs:
        raise TrainingDivergedError("no sequences to train on")
    all_x = np.concatenate([x for x, _ in pairs])
    all_y = np.concatenate([y for _, y in pairs])
    model.in_mean = all_x.mean(axis=0)
    model.in_std = np.maximum(all_x.std(axis=0), STD_FLOOR).astype(np.float32)
    model.out_mean = all_y.mean(axis=0)
    model.out_std = np.maximum(all_y.std(axis=0), STD_FLOOR).astype(np.float32)

    xns = [_normalize(x, model.in_mean, model.in_std) for x, _ in pairs]
    yns = [_normalize(y, model.out_mean, model.out_std) for _, y in pairs]
    index = [(s, t) for s in range(len(pairs)) for t in range(yns[s].shape[0])]
    if not index:
        raise TrainingDivergedError("no training windows: sequences are too short")

    params = model.parameters()
    opt = AdamState(params, lr=lr)
    losses = []
    for it in range(iterations):
        picks = rng.integers(0, len(index), size=batch_size)
        windows = np.empty((batch_size, cfg.queue_length, cfg.io_size), dtype=np.float32)
        targets = np.empty((batch_size, cfg.io_size), dtype=np.float32)
        for row, pick in enumerate(picks):
            s, t = index[pick]
            windows[row] = _window(xns[s], t, cfg.queue_length)
            targets[row] = yns[s][t]
        pred = _forward_windows(model, windows)
        loss = mse_loss(pred, Tensor(targets))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")
        zero_grads(params)
        loss.backward()
        adam_step(opt)
        losses.append(value)
        if log:
            log(it, value)
    return losses


def train_rnn_on_demos(
    model: RnnModel,
    dcae: DcaeModel,
    demos: list[DemoSequence],
    rng: np.random.Generator,
    iterations: int | None = None,
    batch_size: int | None = None,
    lr: float = 1e-3,
    log=None,
) -> list[float]:
    """Encode each demonstration's images, then fit next-step prediction.

    Demonstrations shorter than queue length + 1 frames cannot fill a
    single unpadded window and are skipped with a warning.
    """
    cfg = model.config
    need = cfg.queue_length + 1
    sequences = []
    for i, seq in enumerate(demos):
        if len(seq.frames) < need:
            warnings.warn(f"sequence {i} has {len(seq.frames)} frames, fewer than {need}; skipped")
            continue
        sequences.append((encode(dcae, seq.images()), seq.joint_matrix()))
    if not sequences:
        raise TrainingDivergedError(f"every sequence is shorter than {need} frames")
    return train_rnn(model, sequences, rng, iterations, batch_size, lr, log)


def predict_step(model: RnnModel, queue) -> tuple[np.ndarray, np.ndarray]:
    """Next (joints, features) from a queue or a raw (k, io) window.

    The LSTM runs over the queued records oldest-first from a zero state;
    the head is read at the last step.  Pure: no state survives the call.
    """
    cfg = model.config
    if isinstance(queue, InputQueue):
        rows = queue.window(cfg)
    else:
        rows = np.asarray(queue, dtype=np.float32)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] != cfg.io_size:
        raise ShapeMismatchError(f"window must be (steps >= 1, {cfg.io_size}), got {rows.shape}")
    wn = _normalize(rows.astype(np.float32), model.in_mean, model.in_std)[None]
    out = _forward_windows(model, wn).data[0]
    raw = out * model.out_std + model.out_mean
    joints, features = split_prediction(raw, cfg)
    return joints.copy(), features.copy()


ROLLOUT_START_NOISE = 0.01  # rad, applied per joint to the start posture


def rollout(
    rnn: RnnModel,
    dcae: DcaeModel,
    scene: SceneConfig,
    steps: int,
    seed: int,
) -> tuple[DemoSequence, RunOutcome]:
    """Run the learned controller closed loop from a perturbed start.

    Each tick renders the scene, encodes it, queues the observation,
    predicts the next joint target, and tracks it with the rate-limited
    controller for one frame period of physics.  Out-of-limit predictions
    are clamped and flagged, not fatal.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = spawn_rng(seed, 31)
    q0 = np.asarray(initial_state(scene).q, dtype=np.float64)
    q0 = q0 + rng.normal(0.0, ROLLOUT_START_NOISE, size=q0.size)
    q0 = np.clip(q0, -scene.joint_limit, scene.joint_limit)
    state = replace(initial_state(scene), q=tuple(float(v) for v in q0))
    initial_units = state.in_bowl

    queue = InputQueue(rnn.config.queue_length)
    frames = [capture_frame(scene, state, initial_units)]
    trace = []
    clamped = False
    for t in range(steps):
        features = encode(dcae, frames[-1].image)
        record = StepRecord(features=features, joints=np.asarray(state.q, dtype=np.float32), time_index=t)
        if t == 0:
            queue.prefill(record)
        queue.push(record)
        target, _ = predict_step(rnn, queue)
        target = np.asarray(target, dtype=np.float64)
        if np.any(np.abs(target) > scene.joint_limit):
            clamped = True
            target = np.clip(target, -scene.joint_limit, scene.joint_limit)
        for _ in range(FRAME_PERIOD):
            qdot = (target - np.asarray(state.q, dtype=np.float64)) / scene.dt
            state, info = step(scene, state, qdot)
            trace.append((state, info))
        frames.append(capture_frame(scene, state, initial_units))

    outcome = evaluate_run(scene, initial_units, trace)
    if clamped:
        outcome = replace(outcome, limit_hit=True)
    meta = sequence_meta(scene, outcome)
    meta.update({"kind": "rollout", "seed": seed, "steps": steps, "clamped_prediction": clamped})
    return DemoSequence(frames=frames, meta=meta), outcome


# ---- persistence ----


def rnn_blocks(model: RnnModel) -> dict[str, np.ndarray]:
    blocks = {}
    for i, cell in enumerate(model.cells):
        for gate in GATE_NAMES:
            blocks[f"cell{i}.{gate}.w"] = cell.weights[gate].data
            blocks[f"cell{i}.{gate}.b"] = cell.biases[gate].data
    blocks["head.w"] = model.head_w.data
    blocks["head.b"] = model.head_b.data
    blocks["norm.in_mean"] = model.in_mean
    blocks["norm.in_std"] = model.in_std
    blocks["norm.out_mean"] = model.out_mean
    blocks["norm.out_std"] = model.out_std
    return blocks


def rnn_config_dict(cfg: RnnConfig) -> dict:
    return dataclasses.asdict(cfg)


def rnn_from_parts(config: dict, blocks: dict[str, np.ndarray]) -> RnnModel:
    cfg = RnnConfig(**config)
    cells = []
    in_size = cfg.io_size
    for i in range(cfg.num_layers):
        weights = {}
        biases = {}
        for gate in GATE_NAMES:
            wname, bname = f"cell{i}.{gate}.w", f"cell{i}.{gate}.b"
            if wname not in blocks or bname not in blocks:
                raise ShapeMismatchError(f"model bundle missing blocks for cell {i} gate {gate}")
            w, b = blocks[wname], blocks[bname]
            if w.shape != (in_size + cfg.hidden_size, cfg.hidden_size) or b.shape != (cfg.hidden_size,):
                raise ShapeMismatchError(f"cell {i} gate {gate} has shapes {w.shape}/{b.shape}")
            weights[gate] = Tensor(w.astype(np.float32), requires_grad=True)
            biases[gate] = Tensor(b.astype(np.float32), requires_grad=True)
        cells.append(LstmCellParams(in_size, cfg.hidden_size, weights, biases))
        in_size = cfg.hidden_size
    model = RnnModel(
        config=cfg,
        cells=cells,
        head_w=Tensor(blocks["head.w"].astype(np.float32), requires_grad=True),
        head_b=Tensor(blocks["head.b"].astype(np.float32), requires_grad=True),
    )
    model.in_mean = blocks["norm.in_mean"].astype(np.float32)
    model.in_std = blocks["norm.in_std"].astype(np.float32)
    model.out_mean = blocks["norm.out_mean"].astype(np.float32)
    model.out_std = blocks["norm.out_std"].astype(np.float32)
    return model
