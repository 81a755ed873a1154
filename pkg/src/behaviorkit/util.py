"""Seed derivation, canonical JSON, and atomic file writes."""

import hashlib
import json
import os

import numpy as np


def make_rng(*keys):
    """Build a Generator from a mix of ints and strings.

    Strings are hashed so that independent streams can be labelled by name
    ("order", "eps", ...) without colliding with numeric keys.  The same keys
    always give the same stream, which is what makes checkpoint resume and
    repeated runs bit-identical: no RNG state is ever carried between steps,
    it is all re-derived from (seed, labels, counters).
    """
    ints = []
    for k in keys:
        if isinstance(k, (int, np.integer)):
            ints.append(int(k) & 0xFFFFFFFF)
        else:
            h = hashlib.sha256(str(k).encode("utf-8")).digest()
            ints.append(int.from_bytes(h[:4], "little"))
    return np.random.default_rng(ints)


def canonical_json(obj):
    """Serialize to deterministic bytes (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(obj):
    """Short stable digest of a JSON-serializable config."""
    return hashlib.sha256(canonical_json(obj)).hexdigest()[:16]


def atomic_write_bytes(path, payload):
    """Write a file via temp-and-rename so readers never see partial output."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj, indent=2):
    """Pretty but deterministic JSON file (sorted keys, trailing newline)."""
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=indent) + "\n")
