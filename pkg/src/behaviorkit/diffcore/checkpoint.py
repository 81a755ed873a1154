"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON header,
then a payload of concatenated float64 little-endian buffers in sorted name
order.  The header records shape, offset and a sha256 digest per entry, so a
truncated or corrupted file fails loudly and names the first bad parameter.
Writing the same arrays and manifest twice produces byte-identical files.
"""

import hashlib
import json
import os
import struct

import numpy as np

from ..errors import CheckpointError
from ..util import atomic_write_bytes

MAGIC = b"BHKCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays, manifest=None):
    """Write name -> float64 array entries plus a JSON manifest atomically."""
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        # asarray (not ascontiguousarray) so 0-d arrays keep their shape
        arr = np.asarray(arrays[name], dtype="<f8", order="C")
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
            "sha256": hashlib.sha256(raw).hexdigest(),
        })
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"format_version": FORMAT_VERSION,
         "manifest": manifest or {},
         "entries": entries},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)
    atomic_write_bytes(path, payload)


def load_checkpoint(path):
    """Read back (arrays, manifest); validates magic, version and digests."""
    if not os.path.exists(path):
        raise CheckpointError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} "
            f"not supported (expected {FORMAT_VERSION})")
    body = blob[16 + header_len:]
    arrays = {}
    for entry in header["entries"]:
        name = entry["name"]
        start, nbytes = entry["offset"], entry["nbytes"]
        raw = body[start:start + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: payload truncated at parameter '{name}'")
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"{path}: checksum mismatch for parameter '{name}'")
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
    return arrays, header["manifest"]
