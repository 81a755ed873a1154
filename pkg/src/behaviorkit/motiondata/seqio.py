"""Sequence files: JSON-lines with a header record.

Line 1 is a header {"version": 1, "joints": K, "frames": n, "dims": 3};
each following line is {"id": ..., "family": ..., "data": [n][K][3]}.
Floats are written with Python's shortest-roundtrip repr, so a save/load
cycle preserves values bit-for-bit.
"""

import json
import os

import numpy as np

from ..errors import ContractError, SequenceFormatError
from ..util import atomic_write_text, write_json
from .dataset import MotionDataset, NormStats, PoseSequence

FORMAT_VERSION = 1


def save_sequences(path, sequences):
    """Write sequences (all with equal frame counts) to a JSONL file."""
    if not sequences:
        raise ContractError("refusing to write an empty sequence file")
    n = sequences[0].frames.shape[0]
    joints = sequences[0].frames.shape[1]
    lines = [json.dumps({"version": FORMAT_VERSION, "joints": joints,
                         "frames": n, "dims": 3}, sort_keys=True)]
    for s in sequences:
        if s.frames.shape != (n, joints, 3):
            raise ContractError(
                f"sequence '{s.source_id}' has shape {s.frames.shape}, "
                f"expected {(n, joints, 3)}")
        lines.append(json.dumps(
            {"id": s.source_id, "family": s.family, "data": s.frames.tolist()},
            sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_sequences(path):
    """Read a JSONL sequence file back into PoseSequence objects."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise SequenceFormatError(f"{path}: line 1: empty file, header expected")
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as e:
        raise SequenceFormatError(f"{path}: line 1: bad header JSON ({e})") from e
    for key in ("version", "joints", "frames", "dims"):
        if key not in header:
            raise SequenceFormatError(f"{path}: line 1: header missing '{key}'")
    if header["version"] != FORMAT_VERSION:
        raise SequenceFormatError(
            f"{path}: line 1: version {header['version']} not supported")
    shape = (header["frames"], header["joints"], header["dims"])

    out = []
    for i, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise SequenceFormatError(f"{path}: line {i}: bad JSON ({e})") from e
        if "data" not in rec:
            raise SequenceFormatError(f"{path}: line {i}: record missing 'data'")
        data = np.array(rec["data"], dtype=float)
        if data.shape != shape:
            raise SequenceFormatError(
                f"{path}: line {i}: data shape {data.shape} does not match "
                f"header {shape}")
        out.append(PoseSequence(frames=data, family=rec.get("family"),
                                source_id=rec.get("id", f"seq-{i - 1}")))
    if not out:
        raise SequenceFormatError(f"{path}: no sequence records after header")
    return out


def save_dataset(out_dir, dataset):
    """Write train/test JSONL plus sidecar norm stats and manifest."""
    os.makedirs(out_dir, exist_ok=True)
    save_sequences(os.path.join(out_dir, "train.jsonl"), dataset.train)
    save_sequences(os.path.join(out_dir, "test.jsonl"), dataset.test)
    write_json(os.path.join(out_dir, "norm_stats.json"), dataset.stats.to_dict())
    write_json(os.path.join(out_dir, "manifest.json"), {
        "config": dataset.config,
        "held_out_families": list(dataset.held_out_families),
        "n_train": len(dataset.train),
        "n_test": len(dataset.test),
    })


def load_dataset(data_dir):
    """Load a directory written by save_dataset."""
    train = load_sequences(os.path.join(data_dir, "train.jsonl"))
    test = load_sequences(os.path.join(data_dir, "test.jsonl"))
    with open(os.path.join(data_dir, "norm_stats.json"), "r", encoding="utf-8") as fh:
        stats = NormStats.from_dict(json.load(fh))
    manifest_path = os.path.join(data_dir, "manifest.json")
    config, held_out = {}, ()
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        config = manifest.get("config", {})
        held_out = tuple(manifest.get("held_out_families", ()))
    return MotionDataset(train=train, test=test, stats=stats,
                         held_out_families=held_out, config=config)
