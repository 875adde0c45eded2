"""Release gate: one test and one printed verdict per acceptance criterion.

The suite is self-contained.  It retrains every model it judges at the desk
scale with fixed seeds, so a full run costs roughly 40 minutes of CPU time,
dominated by the three end-to-end study fixtures.  Each test prints exactly
one line, "<id>: PASS - <measurements>" or "<id>: FAIL - <measurements>",
so the terminal record shows every number the verdict rests on.
"""

import json
import math
import subprocess
import sys
import threading
import time

import numpy as np
import pytest
from websockets.sync.client import connect

from scoop_lfd.bridge import BridgeServer
from scoop_lfd.cli import main as cli_main
from scoop_lfd.dcae import DcaeConfig, build_dcae, dcae_blocks, dcae_config_dict, train_dcae
from scoop_lfd.demos import record_demo
from scoop_lfd.errors import StoreFormatError
from scoop_lfd.experiments import run_experiment, spec_for
from scoop_lfd.motion_rnn import RnnConfig, build_rnn, rnn_blocks, rnn_config_dict, rollout, train_rnn_on_demos
from scoop_lfd.nn.gradcheck import gradient_check
from scoop_lfd.nn.layers import LayerSpec, forward_layers, init_layer_params
from scoop_lfd.nn.lstm import init_lstm_cell, lstm_cell_step
from scoop_lfd.nn.optim import AdamState, adam_step
from scoop_lfd.nn.rng import seeded_rng, spawn_rng
from scoop_lfd.nn.tensor import Tensor, mse_loss
from scoop_lfd.sim.kinematics import fk
from scoop_lfd.sim.render import render_scene
from scoop_lfd.sim.scene import BOWL_COLORS, BOWL_POSITIONS, FILL_LEVELS, HOME_Q, SceneConfig, initial_state, scene_for
from scoop_lfd.sim.world import contact_force, step
from scoop_lfd.store import load_dataset, load_model, load_sequence, save_dataset, save_model, save_sequence

BRIDGE_PORT = 8932


def _verdict(capsys, name: str, ok: bool, detail: str) -> None:
    line = f"{name}: {'PASS' if ok else 'FAIL'} - {detail}"
    with capsys.disabled():
        print(line, flush=True)
    assert ok, line


# ---- study fixtures: each runs one full pipeline once per session ----


def _run_study(experiment: str, factory):
    workdir = factory.mktemp(experiment)
    spec = spec_for(experiment, "desk", seed=0)
    t0 = time.monotonic()
    report = run_experiment(spec, workdir, jobs=1)
    return report, time.monotonic() - t0, workdir


@pytest.fixture(scope="session")
def exp1_run(tmp_path_factory):
    return _run_study("exp1", tmp_path_factory)


@pytest.fixture(scope="session")
def exp2_run(tmp_path_factory):
    return _run_study("exp2", tmp_path_factory)


@pytest.fixture(scope="session")
def exp3_run(tmp_path_factory):
    return _run_study("exp3", tmp_path_factory)


# ---- A1: gradient correctness ----


def _stack_case(specs, in_shape, rng, nudge_off_kink=False):
    """Gradcheck one small layer stack; returns (worst rel err, param count)."""
    params = [init_layer_params(s, rng, dtype=np.float64) for s in specs]
    x_data = rng.normal(size=in_shape)
    if nudge_off_kink:
        # Finite differences straddle x=0 badly; keep inputs clear of it.
        x_data = np.sign(x_data) * (0.1 + np.abs(x_data))
    x = Tensor(x_data, requires_grad=True)
    probe = forward_layers(specs, params, x)
    target = Tensor(rng.normal(size=probe.shape))
    tensors = [x] + [t for d in params for t in d.values()]

    def loss():
        return mse_loss(forward_layers(specs, params, x), target)

    return gradient_check(loss, tensors), sum(t.data.size for t in tensors)


def test_a1_gradients_for_every_layer_kind(capsys):
    t0 = time.monotonic()
    rng = seeded_rng(2024)
    cases = {
        "dense": ([LayerSpec(kind="dense", in_size=12, out_size=10)], (4, 12), False),
        "conv2d": ([LayerSpec(kind="conv2d", in_channels=2, out_channels=6, kernel=3, stride=2, pad=1)], (2, 2, 6, 6), False),
        "deconv2d": ([LayerSpec(kind="deconv2d", in_channels=3, out_channels=4, kernel=3, stride=2, pad=1, out_pad=1)], (2, 3, 4, 4), False),
        "leaky_relu": ([LayerSpec(kind="leaky_relu")], (8, 16), True),
        "dropout_eval": ([LayerSpec(kind="dropout", p=0.4)], (8, 16), False),
        "sigmoid": ([LayerSpec(kind="sigmoid")], (8, 16), False),
        "flatten_reshape": ([LayerSpec(kind="flatten"), LayerSpec(kind="reshape", shape=(3, 6, 6))], (2, 3, 6, 6), False),
    }
    errors = {}
    counts = {}
    for name, (specs, in_shape, nudge) in cases.items():
        errors[name], counts[name] = _stack_case(specs, in_shape, rng, nudge_off_kink=nudge)

    cell = init_lstm_cell(6, 8, rng, dtype=np.float64)
    x1 = Tensor(rng.normal(size=(2, 6)), requires_grad=True)
    x2 = Tensor(rng.normal(size=(2, 6)))
    target = Tensor(rng.normal(size=(2, 8)))
    tensors = cell.tensors() + [x1]

    def cell_loss():
        h = Tensor(np.zeros((2, 8)))
        c = Tensor(np.zeros((2, 8)))
        h, c = lstm_cell_step(cell, x1, h, c)
        h, c = lstm_cell_step(cell, x2, h, c)
        return mse_loss(h, target)

    errors["lstm_cell"] = gradient_check(cell_loss, tensors)
    counts["lstm_cell"] = sum(t.data.size for t in tensors)

    seconds = time.monotonic() - t0
    worst = max(errors, key=errors.get)
    ok = all(e < 1e-4 for e in errors.values()) and all(n >= 100 for n in counts.values()) and seconds < 120
    _verdict(
        capsys,
        "A1",
        ok,
        f"{len(errors)} kinds checked, worst rel err {errors[worst]:.1e} ({worst}), "
        f"smallest check {min(counts.values())} params, {seconds:.0f}s",
    )


# ---- A2: optimizer and cell oracles ----


def test_a2_optimizer_and_cell_oracles(capsys):
    # Adam, three steps, against the textbook recurrence in plain floats.
    grads = [0.3, -1.2, 0.05]
    p = Tensor(np.array([2.0], dtype=np.float64), requires_grad=True)
    state = AdamState([p])
    for g in grads:
        p.grad = np.array([g], dtype=np.float64)
        adam_step(state)
    theta, m, v = 2.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 1e-3 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    adam_err = abs(float(p.data[0]) - theta)

    # LSTM cell against element-by-element gate arithmetic.
    rng = seeded_rng(31)
    cell = init_lstm_cell(4, 3, rng, dtype=np.float64)
    x = rng.normal(size=(1, 4))
    h0 = rng.normal(size=(1, 3))
    c0 = rng.normal(size=(1, 3))
    h_new, c_new = lstm_cell_step(cell, Tensor(x), Tensor(h0), Tensor(c0))

    z = list(x[0]) + list(h0[0])

    def gate(name, squash):
        w, b = cell.weights[name].data, cell.biases[name].data
        return [squash(b[j] + sum(zi * w[i, j] for i, zi in enumerate(z))) for j in range(3)]

    sig = lambda u: 1.0 / (1.0 + math.exp(-u))
    gi, gf, go = gate("input", sig), gate("forget", sig), gate("output", sig)
    gc = gate("candidate", math.tanh)
    c_ref = [gf[j] * c0[0][j] + gi[j] * gc[j] for j in range(3)]
    h_ref = [go[j] * math.tanh(c_ref[j]) for j in range(3)]
    cell_err = max(
        float(np.abs(h_new.data[0] - np.array(h_ref)).max()),
        float(np.abs(c_new.data[0] - np.array(c_ref)).max()),
    )

    ok = adam_err < 1e-10 and cell_err < 1e-12
    _verdict(capsys, "A2", ok, f"adam 3-step err {adam_err:.1e} (< 1e-10), cell err {cell_err:.1e} (< 1e-12)")


# ---- A3: one position, four scene combos ----


def test_a3_single_position_study(exp1_run, capsys):
    report, seconds, _ = exp1_run
    train = report.recon["train"]
    heldout_seq = report.recon["test_trained"]
    wins, total = report.successes_at(0, "high")
    ok = (
        report.counts["sequences"] == 20
        and train < 0.005
        and heldout_seq < 3.0 * train
        and total == 5
        and wins >= 4
        and seconds < 900
    )
    _verdict(
        capsys,
        "A3",
        ok,
        f"train recon {train:.5f} (< 0.005), held-out sequence {heldout_seq:.5f} ({heldout_seq / train:.2f}x), "
        f"rollouts {wins}/{total} at the trained position, {seconds:.0f}s",
    )


# ---- A4: unseen bowl position breaks the image model ----


def test_a4_holdout_position_study(exp2_run, capsys):
    report, seconds, _ = exp2_run
    trained = report.recon["test_trained"]
    holdout = report.recon["test_holdout"]
    wins, total = report.successes_at(3, "high")
    ok = (
        report.counts["sequences"] == 140
        and holdout > 2.0 * trained
        and total == 5
        and wins <= 1
        and seconds < 1200
    )
    _verdict(
        capsys,
        "A4",
        ok,
        f"held-out-position recon {holdout:.5f} vs trained-position {trained:.5f} ({holdout / trained:.2f}x, need > 2x), "
        f"rollouts {wins}/{total} at the unseen position, {seconds:.0f}s",
    )


# ---- A5: grid augmentation closes the gap ----


def test_a5_grid_augmentation_study(exp2_run, exp3_run, capsys):
    baseline = exp2_run[0].recon["test_holdout"]
    report, seconds, workdir = exp3_run
    grid = report.counts["grid_images"]
    holdout = report.recon["test_holdout"]
    wins, total = report.successes_at(0, "high")

    lines = (workdir / "matrix.txt").read_text().splitlines()
    header = lines[0].split() if lines else []
    s1_cell = ""
    for line in lines[1:]:
        parts = line.split()
        if parts and parts[0] == "s1":
            s1_cell = parts[1] if len(parts) > 1 else ""
    matrix_ok = len(lines) == 8 and header[:1] == ["slot"] and "exp3" in header and s1_cell == "o"

    ok = (
        grid >= 1125
        and holdout <= 0.5 * baseline
        and total == 5
        and wins >= 3
        and matrix_ok
        and seconds < 1800
    )
    _verdict(
        capsys,
        "A5",
        ok,
        f"{grid} grid images, held-out recon {holdout:.5f} vs {baseline:.5f} without grid "
        f"({1.0 - holdout / baseline:.0%} lower, need >= 50%), rollouts {wins}/{total} at s1, "
        f"matrix {'emitted' if matrix_ok else 'malformed'}, {seconds:.0f}s",
    )


# ---- A6: simulator invariants ----


def test_a6_simulator_invariants(capsys):
    t0 = time.monotonic()

    # Material conservation, exactly, over a million random commands.
    cfg = scene_for(3, fill="high")
    rng = np.random.default_rng(0)
    state = initial_state(cfg)
    total = state.total_units()
    commands = rng.uniform(-4.0, 4.0, size=(1_000_000, 6))
    steps_ok = 0
    for cmd in commands:
        state, _ = step(cfg, state, cmd)
        if state.total_units() != total:
            break
        steps_ok += 1
    pools_ok = state.in_bowl >= 0 and state.on_spoon >= 0 and state.removed >= 0
    conserved = steps_ok == len(commands) and pools_ok

    # Contact force: zero in free space, outward-signed under penetration.
    free = contact_force(HOME_Q, SceneConfig())
    contact_bad = 0 if not free.any() else 1
    cx, cy = cfg.bowl_center
    inner, outer = cfg.bowl_radius, cfg.bowl_radius + cfg.bowl_wall
    seen_table = seen_inner = seen_outer = 0
    for _ in range(10_000):
        q = rng.uniform(-np.pi, np.pi, 6)
        pose = fk(q, cfg)
        f = contact_force(q, cfg)
        if pose.y < 0:
            seen_table += 1
            if not f[1] > 0.0:
                contact_bad += 1
        d = math.hypot(pose.x - cx, pose.y - cy)
        if 0.0 <= pose.y <= cy and inner < d < outer:
            radial = f[0] * (pose.x - cx) + f[1] * (pose.y - cy)
            if d - inner < outer - d:
                seen_inner += 1
                if not radial < 0.0:
                    contact_bad += 1
            elif outer - d < d - inner:
                seen_outer += 1
                if not radial > 0.0:
                    contact_bad += 1
        if pose.y > cy and f.any():
            contact_bad += 1
    contacts_ok = contact_bad == 0 and seen_table > 100 and seen_inner > 0 and seen_outer > 0

    # Rendering is a pure function returning fresh buffers.
    rcfg = scene_for(2, fill="low", color="green")
    rstate = initial_state(rcfg)
    a = render_scene(rcfg, rstate)
    b = render_scene(rcfg, rstate)
    render_ok = a is not b and a.tobytes() == b.tobytes()
    a[:] = 0.0
    render_ok = render_ok and render_scene(rcfg, rstate).tobytes() == b.tobytes()

    # Scripted planner succeeds on every default scene combination.
    combos = 0
    planner_wins = 0
    for pos in range(len(BOWL_POSITIONS)):
        for color in BOWL_COLORS:
            for fill in FILL_LEVELS:
                combos += 1
                _, out = record_demo(scene_for(pos, color=color, fill=fill), seed=7, sequence_index=pos)
                planner_wins += bool(out.success)

    seconds = time.monotonic() - t0
    ok = conserved and contacts_ok and render_ok and combos == 28 and planner_wins == 28
    _verdict(
        capsys,
        "A6",
        ok,
        f"units conserved for {steps_ok} of 1000000 steps, {contact_bad} contact sign violations in 10000 poses "
        f"({seen_table}/{seen_inner}/{seen_outer} table/inner/outer hits), render {'bit-stable' if render_ok else 'UNSTABLE'}, "
        f"planner {planner_wins}/{combos}, {seconds:.0f}s",
    )


# ---- A7: determinism and persistence ----


def _rejects(loader, path, needle: str) -> bool:
    try:
        loader(path)
    except StoreFormatError as e:
        return needle in str(e)
    return False


def test_a7_determinism_and_persistence(tmp_path, capsys):
    t0 = time.monotonic()
    demos = []
    for i in range(2):
        seq, out = record_demo(scene_for(0), seed=3, sequence_index=i)
        assert out.success
        demos.append(seq)
    images = np.concatenate([seq.images()[::6] for seq in demos])

    def train_image_model(path):
        model = build_dcae(DcaeConfig(epochs=2, batch_size=8), spawn_rng(9, 101))
        train_dcae(model, images, spawn_rng(9, 102), lr=3e-3)
        save_model(path, "dcae", dcae_config_dict(model.config), dcae_blocks(model))
        return model

    dcae_a = train_image_model(tmp_path / "a.lfdm")
    train_image_model(tmp_path / "b.lfdm")
    dcae_identical = (tmp_path / "a.lfdm").read_bytes() == (tmp_path / "b.lfdm").read_bytes()

    def train_motion_model(path):
        model = build_rnn(RnnConfig(iterations=5, batch_size=8), spawn_rng(9, 201))
        train_rnn_on_demos(model, dcae_a, demos, spawn_rng(9, 202))
        save_model(path, "rnn", rnn_config_dict(model.config), rnn_blocks(model))
        return model

    rnn_a = train_motion_model(tmp_path / "ra.lfdm")
    train_motion_model(tmp_path / "rb.lfdm")
    rnn_identical = (tmp_path / "ra.lfdm").read_bytes() == (tmp_path / "rb.lfdm").read_bytes()

    traj_a, _ = rollout(rnn_a, dcae_a, scene_for(0), steps=6, seed=4)
    traj_b, _ = rollout(rnn_a, dcae_a, scene_for(0), steps=6, seed=4)
    save_sequence(tmp_path / "ta.lfds", traj_a)
    save_sequence(tmp_path / "tb.lfds", traj_b)
    traj_identical = (tmp_path / "ta.lfds").read_bytes() == (tmp_path / "tb.lfds").read_bytes()

    root_a, root_b = tmp_path / "ds_a", tmp_path / "ds_b"
    save_dataset(root_a, demos)
    loaded = load_dataset(root_a)
    save_dataset(root_b, [loaded.sequence(i) for i in range(len(loaded))])
    names = ["manifest.json", "seq_0000.lfds", "seq_0001.lfds"]
    dataset_roundtrip = all((root_a / n).read_bytes() == (root_b / n).read_bytes() for n in names)

    kind, config, blocks = load_model(tmp_path / "a.lfdm")
    save_model(tmp_path / "a2.lfdm", kind, config, blocks)
    model_roundtrip = (tmp_path / "a.lfdm").read_bytes() == (tmp_path / "a2.lfdm").read_bytes()

    seq_bytes = (root_a / "seq_0000.lfds").read_bytes()
    model_bytes = (tmp_path / "a.lfdm").read_bytes()
    (tmp_path / "bad.lfds").write_bytes(b"XXXX" + seq_bytes[4:])
    (tmp_path / "bad.lfdm").write_bytes(b"YYYY" + model_bytes[4:])
    (tmp_path / "short.lfdm").write_bytes(model_bytes[:10])
    diagnostics = (
        _rejects(load_sequence, tmp_path / "bad.lfds", "bad magic")
        and _rejects(load_model, tmp_path / "bad.lfdm", "not a model bundle")
        and _rejects(load_model, tmp_path / "short.lfdm", "truncated header")
    )

    seconds = time.monotonic() - t0
    ok = dcae_identical and rnn_identical and traj_identical and dataset_roundtrip and model_roundtrip and diagnostics
    _verdict(
        capsys,
        "A7",
        ok,
        f"retrains bit-identical (image {dcae_identical}, motion {rnn_identical}), trajectories bit-identical "
        f"({traj_identical}), round-trips byte-identical (dataset {dataset_roundtrip}, model {model_roundtrip}), "
        f"corrupt headers rejected by name ({diagnostics}), {seconds:.0f}s",
    )


# ---- A8: human-demo path over the bridge ----


def _recv_until(ws, kind: str, timeout: float = 5.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        msg = json.loads(ws.recv(timeout=timeout))
        if msg["type"] == kind:
            return msg
    raise AssertionError(f"no {kind} message within {timeout}s")


def test_a8_bridge_demo_path(tmp_path, capsys):
    t0 = time.monotonic()

    # The training stack must not drag the socket stack in.
    probe = subprocess.run(
        [
            sys.executable,
            "-c",
            "import sys, scoop_lfd.experiments, scoop_lfd.cli; assert 'websockets' not in sys.modules",
        ],
        capture_output=True,
    )
    headless_ok = probe.returncode == 0

    record_dir = tmp_path / "recordings"
    srv = BridgeServer(record_dir=record_dir)
    stop = threading.Event()

    def run():
        import asyncio

        import websockets

        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)

        async def main():
            async with websockets.serve(srv.handle, "127.0.0.1", BRIDGE_PORT):
                while not stop.is_set():
                    await asyncio.sleep(0.1)

        loop.run_until_complete(main())

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    try:
        deadline = time.monotonic() + 5.0
        ws = None
        while time.monotonic() < deadline:
            try:
                ws = connect(f"ws://127.0.0.1:{BRIDGE_PORT}")
                break
            except OSError:
                time.sleep(0.1)
        assert ws is not None, "bridge server did not come up"
        info = json.loads(ws.recv(timeout=5))
        assert info["type"] == "info"

        t_rate = time.monotonic()
        states = 0
        while time.monotonic() - t_rate < 2.0:
            if json.loads(ws.recv(timeout=5))["type"] == "state":
                states += 1
        rate = states / 2.0

        target = (0.30, 0.18, -0.4)
        ws.send(json.dumps({"type": "drag", "x": target[0], "y": target[1], "theta": target[2]}))
        t_drag = time.monotonic()
        dist = math.inf
        settle = 3.0
        while time.monotonic() - t_drag < 3.0:
            msg = json.loads(ws.recv(timeout=5))
            if msg["type"] != "state":
                continue
            dist = math.hypot(msg["master"][0] - target[0], msg["master"][1] - target[1])
            if dist < 0.01:
                settle = time.monotonic() - t_drag
                break

        ws.send(json.dumps({"type": "record", "action": "start", "position": 0, "color": "yellow", "fill": "high"}))
        _recv_until(ws, "ack")
        t_rec = time.monotonic()
        while time.monotonic() - t_rec < 3.0:
            ws.recv(timeout=5)
        ws.send(json.dumps({"type": "record", "action": "stop"}))
        saved = _recv_until(ws, "ack", timeout=10.0)
        ws.close()

        seq = load_sequence(record_dir / saved["file"])
        dataset = load_dataset(record_dir)
        frames = len(seq.frames)
        rc = cli_main(
            [
                "train-dcae",
                "--data", str(record_dir),
                "--out", str(tmp_path / "bridge.lfdm"),
                "--seed", "0",
                "--epochs", "1",
                "--stride", "1",
                "--batch-size", "8",
            ]
        )
        accepted = rc == 0 and (tmp_path / "bridge.lfdm").exists()
    finally:
        stop.set()
        thread.join(timeout=3.0)

    seconds = time.monotonic() - t0
    ok = headless_ok and rate >= 10.0 and dist < 0.01 and len(dataset) >= 1 and frames >= 5 and accepted
    _verdict(
        capsys,
        "A8",
        ok,
        f"core imports socket-free ({headless_ok}), {rate:.1f} state msgs/s, drag settled "
        f"{dist * 100:.2f} cm from target in {settle:.1f}s, recorded demo of {frames} frames "
        f"loads and trains (exit {rc}), {seconds:.0f}s",
    )
