"""On-disk formats for demonstrations and trained models.

Both formats are little-endian with a 4-byte magic and a u32 version so a
reader can say precisely why a file is unusable.  Sequence files hold
fixed-size frames (image, joints, tool force, material level); model
bundles hold a canonical JSON descriptor plus one float32 blob indexed by
named blocks.  Writing what a reader returned reproduces the bytes
exactly, which the tests rely on.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scoop_lfd.errors import StoreFormatError

SEQUENCE_MAGIC = b"LFDS"
MODEL_MAGIC = b"LFDM"
FORMAT_VERSION = 1

# Refuse absurd headers before allocating anything.
_MAX_FRAME_FLOATS = 32 * 1024 * 1024
_MAX_FRAMES = 1_000_000


@dataclass
class DemoFrame:
    image: np.ndarray  # (C, H, W) float32 in [0, 1]
    joints: np.ndarray  # (J,) float32
    tool_force: np.ndarray  # (3,) float32, force applied to the world
    material_level: float  # fraction of the starting grains on the spoon


@dataclass
class DemoSequence:
    frames: list[DemoFrame]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    def images(self) -> np.ndarray:
        return np.stack([f.image for f in self.frames])

    def joint_matrix(self) -> np.ndarray:
        return np.stack([f.joints for f in self.frames])

    def force_matrix(self) -> np.ndarray:
        return np.stack([f.tool_force for f in self.frames])

    def levels(self) -> np.ndarray:
        return np.array([f.material_level for f in self.frames], dtype=np.float32)


def save_sequence(path, seq: DemoSequence) -> None:
    if not seq.frames:
        raise StoreFormatError("refusing to save an empty sequence")
    c, h, w = seq.frames[0].image.shape
    j = seq.frames[0].joints.shape[0]
    rows = []
    for i, f in enumerate(seq.frames):
        if f.image.shape != (c, h, w) or f.joints.shape != (j,) or f.tool_force.shape != (3,):
            raise StoreFormatError(f"frame {i} shape differs from frame 0")
        rows.append(
            np.concatenate(
                [
                    np.asarray(f.image, dtype="<f4").reshape(-1),
                    np.asarray(f.joints, dtype="<f4"),
                    np.asarray(f.tool_force, dtype="<f4"),
                    np.array([f.material_level], dtype="<f4"),
                ]
            )
        )
    header = SEQUENCE_MAGIC + struct.pack("<IIIIII", FORMAT_VERSION, len(rows), c, h, w, j)
    Path(path).write_bytes(header + np.stack(rows).tobytes())


def load_sequence(path) -> DemoSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 28:
        raise StoreFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != SEQUENCE_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {raw[:4]!r}, not a demo sequence file")
    version, count, c, h, w, j = struct.unpack("<IIIIII", raw[4:28])
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported sequence version {version}")
    frame_floats = c * h * w + j + 4
    if min(count, c, h, w, j) == 0 or frame_floats > _MAX_FRAME_FLOATS or count > _MAX_FRAMES:
        raise StoreFormatError(f"{path}: implausible dimensions count={count} c={c} h={h} w={w} j={j}")
    expected = 28 + 4 * frame_floats * count
    if len(raw) != expected:
        raise StoreFormatError(f"{path}: expected {expected} bytes for {count} frames, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4", offset=28).reshape(count, frame_floats)
    frames = []
    img_end = c * h * w
    for row in flat:
        frames.append(
            DemoFrame(
                image=row[:img_end].reshape(c, h, w).copy(),
                joints=row[img_end:img_end + j].copy(),
                tool_force=row[img_end + j:img_end + j + 3].copy(),
                material_level=float(row[-1]),
            )
        )
    return DemoSequence(frames=frames)


# ---- datasets: a directory of sequence files plus a manifest ----


def sequence_filename(index: int) -> str:
    return f"seq_{index:04d}.lfds"


@dataclass
class Dataset:
    root: Path
    entries: list[dict]

    def __len__(self) -> int:
        return len(self.entries)

    def sequence(self, index: int) -> DemoSequence:
        entry = self.entries[index]
        seq = load_sequence(self.root / entry["file"])
        seq.meta = dict(entry.get("meta", {}))
        return seq


def save_dataset(root, sequences: list[DemoSequence]) -> Dataset:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, seq in enumerate(sequences):
        name = sequence_filename(i)
        save_sequence(root / name, seq)
        entries.append({"file": name, "meta": dict(seq.meta)})
    write_manifest(root, entries)
    return Dataset(root=root, entries=entries)


def write_manifest(root, entries: list[dict]) -> None:
    doc = {"version": FORMAT_VERSION, "sequences": entries}
    (Path(root) / "manifest.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = root / "manifest.json"
    if not manifest.exists():
        raise StoreFormatError(f"{root}: no manifest.json, not a dataset directory")
    try:
        doc = json.loads(manifest.read_text())
    except json.JSONDecodeError as e:
        raise StoreFormatError(f"{manifest}: corrupt manifest: {e}") from e
    if doc.get("version") != FORMAT_VERSION:
        raise StoreFormatError(f"{manifest}: unsupported manifest version {doc.get('version')}")
    entries = doc.get("sequences")
    if not isinstance(entries, list):
        raise StoreFormatError(f"{manifest}: manifest has no sequence list")
    return Dataset(root=root, entries=entries)


# ---- model bundles ----


def save_model(path, kind: str, config: dict, blocks: dict[str, np.ndarray]) -> None:
    table = {}
    offset = 0
    parts = []
    for name in sorted(blocks):
        arr = np.ascontiguousarray(blocks[name], dtype="<f4")
        table[name] = {"offset": offset, "shape": list(arr.shape)}
        offset += arr.size
        parts.append(arr.reshape(-1))
    descriptor = {"kind": kind, "config": config, "blocks": table}
    desc_bytes = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode()
    blob = np.concatenate(parts) if parts else np.empty(0, dtype="<f4")
    header = MODEL_MAGIC + struct.pack("<II", FORMAT_VERSION, len(desc_bytes))
    Path(path).write_bytes(header + desc_bytes + blob.tobytes())


def load_model(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise StoreFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != MODEL_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {raw[:4]!r}, not a model bundle")
    version, desc_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported model version {version}")
    if 12 + desc_len > len(raw):
        raise StoreFormatError(f"{path}: descriptor length {desc_len} exceeds file size")
    try:
        descriptor = json.loads(raw[12:12 + desc_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise StoreFormatError(f"{path}: corrupt descriptor: {e}") from e
    for key in ("kind", "config", "blocks"):
        if key not in descriptor:
            raise StoreFormatError(f"{path}: descriptor missing {key!r}")
    blob = np.frombuffer(raw, dtype="<f4", offset=12 + desc_len)
    blocks = {}
    for name, info in descriptor["blocks"].items():
        shape = tuple(info["shape"])
        size = int(np.prod(shape)) if shape else 1
        lo = info["offset"]
        if lo + size > blob.size:
            raise StoreFormatError(f"{path}: block {name!r} extends past the end of the blob")
        blocks[name] = blob[lo:lo + size].reshape(shape).copy()
    return descriptor["kind"], descriptor["config"], blocks
