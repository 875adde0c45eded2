import struct

import numpy as np
import pytest

from scoop_lfd.errors import StoreFormatError
from scoop_lfd.store import (
    DemoFrame,
    DemoSequence,
    load_dataset,
    load_model,
    load_sequence,
    save_dataset,
    save_model,
    save_sequence,
)


def make_sequence(n_frames=5, seed=0, meta=None):
    rng = np.random.default_rng(seed)
    frames = [
        DemoFrame(
            image=rng.random((3, 8, 8)).astype(np.float32),
            joints=rng.standard_normal(6).astype(np.float32),
            tool_force=rng.standard_normal(3).astype(np.float32),
            material_level=float(np.float32(rng.random())),
        )
        for _ in range(n_frames)
    ]
    return DemoSequence(frames=frames, meta=meta or {})


def test_sequence_roundtrip_values(tmp_path):
    seq = make_sequence()
    path = tmp_path / "a.lfds"
    save_sequence(path, seq)
    back = load_sequence(path)
    assert len(back) == len(seq)
    for f0, f1 in zip(seq.frames, back.frames):
        np.testing.assert_array_equal(f0.image, f1.image)
        np.testing.assert_array_equal(f0.joints, f1.joints)
        np.testing.assert_array_equal(f0.tool_force, f1.tool_force)
        assert f0.material_level == f1.material_level


def test_sequence_roundtrip_bytes_identical(tmp_path):
    p1, p2 = tmp_path / "a.lfds", tmp_path / "b.lfds"
    save_sequence(p1, make_sequence(seed=3))
    save_sequence(p2, load_sequence(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_sequence_bad_magic(tmp_path):
    p = tmp_path / "x.lfds"
    p.write_bytes(b"NOPE" + bytes(24))
    with pytest.raises(StoreFormatError, match="magic"):
        load_sequence(p)


def test_sequence_bad_version(tmp_path):
    p = tmp_path / "x.lfds"
    save_sequence(p, make_sequence(2))
    raw = bytearray(p.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    p.write_bytes(bytes(raw))
    with pytest.raises(StoreFormatError, match="version 9"):
        load_sequence(p)


def test_sequence_truncation(tmp_path):
    p = tmp_path / "x.lfds"
    save_sequence(p, make_sequence(3))
    raw = p.read_bytes()
    p.write_bytes(raw[:-7])
    with pytest.raises(StoreFormatError, match="bytes"):
        load_sequence(p)


def test_sequence_zero_dims_rejected(tmp_path):
    p = tmp_path / "x.lfds"
    p.write_bytes(b"LFDS" + struct.pack("<IIIIII", 1, 1, 0, 8, 8, 6))
    with pytest.raises(StoreFormatError, match="dimensions"):
        load_sequence(p)


def test_sequence_mixed_shapes_rejected(tmp_path):
    seq = make_sequence(2)
    seq.frames[1].joints = np.zeros(5, dtype=np.float32)
    with pytest.raises(StoreFormatError, match="frame 1"):
        save_sequence(tmp_path / "x.lfds", seq)


def test_dataset_roundtrip(tmp_path):
    seqs = [make_sequence(4, seed=i, meta={"position": i, "fill": "high"}) for i in range(3)]
    ds = save_dataset(tmp_path / "demos", seqs)
    back = load_dataset(tmp_path / "demos")
    assert len(back) == 3
    got = back.sequence(1)
    assert got.meta["position"] == 1
    np.testing.assert_array_equal(got.images(), seqs[1].images())


def test_dataset_missing_manifest(tmp_path):
    with pytest.raises(StoreFormatError, match="manifest"):
        load_dataset(tmp_path)


def test_model_roundtrip_values(tmp_path):
    rng = np.random.default_rng(1)
    blocks = {
        "enc.w": rng.standard_normal((4, 3)).astype(np.float32),
        "enc.b": rng.standard_normal(3).astype(np.float32),
        "stats": rng.random(7).astype(np.float32),
    }
    p = tmp_path / "m.lfdm"
    save_model(p, "dcae", {"code_size": 10, "layers": [32, 16]}, blocks)
    kind, config, back = load_model(p)
    assert kind == "dcae"
    assert config == {"code_size": 10, "layers": [32, 16]}
    assert set(back) == set(blocks)
    for name in blocks:
        np.testing.assert_array_equal(back[name], blocks[name])


def test_model_roundtrip_bytes_identical(tmp_path):
    rng = np.random.default_rng(2)
    blocks = {"a": rng.random((5, 5)).astype(np.float32), "b": rng.random(2).astype(np.float32)}
    p1, p2 = tmp_path / "1.lfdm", tmp_path / "2.lfdm"
    save_model(p1, "rnn", {"hidden": 64}, blocks)
    kind, config, loaded = load_model(p1)
    save_model(p2, kind, config, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_model_bad_magic(tmp_path):
    p = tmp_path / "m.lfdm"
    p.write_bytes(b"WHAT" + bytes(8))
    with pytest.raises(StoreFormatError, match="magic"):
        load_model(p)


def test_model_bad_version(tmp_path):
    p = tmp_path / "m.lfdm"
    save_model(p, "dcae", {}, {"a": np.zeros(2, dtype=np.float32)})
    raw = bytearray(p.read_bytes())
    raw[4:8] = struct.pack("<I", 7)
    p.write_bytes(bytes(raw))
    with pytest.raises(StoreFormatError, match="version 7"):
        load_model(p)


def test_model_truncated_blob(tmp_path):
    p = tmp_path / "m.lfdm"
    save_model(p, "dcae", {}, {"a": np.arange(10, dtype=np.float32)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(StoreFormatError, match="block 'a'"):
        load_model(p)


def test_model_corrupt_descriptor(tmp_path):
    p = tmp_path / "m.lfdm"
    desc = b"{not json"
    p.write_bytes(b"LFDM" + struct.pack("<II", 1, len(desc)) + desc)
    with pytest.raises(StoreFormatError, match="descriptor"):
        load_model(p)
