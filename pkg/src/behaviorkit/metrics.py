"""Deterministic evaluation metrics over sequences and codes.

All distance-based metrics use plain per-pair arithmetic (no algebraic
shortcuts), so a brute-force reimplementation reproduces them exactly.
"""

import numpy as np

from . import diffcore as dc
from .errors import ContractError


def tde(source, generated, timestep):
    """Transfer displacement error at a 1-indexed timestep.

    Mean squared difference between the source posture and the generated
    posture at that frame; both inputs are (n, ...) arrays with matching
    shapes.  A constant offset of 2 per coordinate gives 4.0 at every T.
    """
    src = np.asarray(source, dtype=float)
    gen = np.asarray(generated, dtype=float)
    if src.shape != gen.shape:
        raise ContractError(f"tde: shape mismatch {src.shape} vs {gen.shape}")
    if not 1 <= timestep <= src.shape[0]:
        raise ContractError(
            f"tde: timestep {timestep} out of range 1..{src.shape[0]}")
    diff = src[timestep - 1] - gen[timestep - 1]
    return float(np.mean(diff * diff))


def asd(samples):
    """Average self distance: mean over samples of the L2 distance (over
    flattened sequences) to the nearest *other* sample.

    Higher means more diverse; identical samples give exactly 0.
    """
    flat = _flatten_set(samples)
    n = flat.shape[0]
    if n < 2:
        raise ContractError("asd needs at least 2 samples")
    total = 0.0
    for i in range(n):
        best = None
        for j in range(n):
            if j == i:
                continue
            d = float(np.linalg.norm(flat[i] - flat[j]))
            if best is None or d < best:
                best = d
        total += best
    return total / n


def fsd(samples):
    """Final state distance: like asd, but after finding each sample's
    nearest neighbor over full sequences, measure only the distance between
    their final frames."""
    arr = _as_3d_set(samples)
    flat = arr.reshape(arr.shape[0], -1)
    n = arr.shape[0]
    if n < 2:
        raise ContractError("fsd needs at least 2 samples")
    total = 0.0
    for i in range(n):
        best, best_j = None, None
        for j in range(n):
            if j == i:
                continue
            d = float(np.linalg.norm(flat[i] - flat[j]))
            if best is None or d < best:
                best, best_j = d, j
        total += float(np.linalg.norm(arr[i, -1].ravel() - arr[best_j, -1].ravel()))
    return total / n


def _as_3d_set(samples):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 2:  # list of flat sequences is fine for asd but not fsd
        raise ContractError("need per-frame structure: (N, frames, features)")
    if arr.ndim == 4:  # (N, n, K, 3) -> flatten joints
        arr = arr.reshape(arr.shape[0], arr.shape[1], -1)
    return arr


def _flatten_set(samples):
    arr = np.asarray(samples, dtype=float)
    return arr.reshape(arr.shape[0], -1)


def boundary_displacement(chunks_or_seq, frames_per_segment):
    """Mean per-joint jump across segment boundaries of a chained sequence.

    Input is (segments*n, features); for each boundary the Euclidean norm of
    the feature difference between the last frame of one segment and the
    first frame of the next is averaged.
    """
    seq = np.asarray(chunks_or_seq, dtype=float)
    n = frames_per_segment
    if seq.shape[0] % n != 0 or seq.shape[0] < 2 * n:
        raise ContractError("need at least two whole segments")
    jumps = []
    for b in range(n, seq.shape[0], n):
        jumps.append(float(np.linalg.norm(seq[b] - seq[b - 1])))
    return float(np.mean(jumps))


def nearest_neighbors(query, corpus, k=5, mode="latent", model=None):
    """Indices of the k nearest corpus sequences to the query.

    mode "latent": distance between posterior means (needs a model); inputs
    are normalized (n, pose) sequences.  mode "posture": every joint is
    taken relative to that frame's pelvis, then sequences are ranked by the
    mean per-frame Euclidean posture distance -- so where the subject stands
    never affects the ranking.  Returns (indices, distances) sorted
    ascending.
    """
    if mode == "latent":
        if model is None:
            raise ContractError("latent mode needs a model")
        q = np.asarray(query, dtype=float)
        batch = np.stack([np.asarray(c, dtype=float) for c in corpus])
        with dc.no_grad():
            zq = model.encode(q[None]).mu.data[0]
            zc = model.encode(batch).mu.data
        dists = np.array([float(np.linalg.norm(zq - z)) for z in zc])
    elif mode == "posture":
        q = _pelvis_relative(_to_frames(query))
        dists = []
        for c in corpus:
            cf = _to_frames(c)
            if cf.shape != q.shape:
                raise ContractError("posture mode needs equal-shape sequences")
            rel = _pelvis_relative(cf)
            per_frame = np.linalg.norm(rel - q, axis=-1).mean(axis=-1)
            dists.append(float(per_frame.mean()))
        dists = np.array(dists)
    else:
        raise ContractError(f"unknown mode '{mode}'")
    order = np.argsort(dists, kind="stable")[:k]
    return order, dists[order]


def _to_frames(seq):
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 2:  # (n, K*3) -> (n, K, 3)
        arr = arr.reshape(arr.shape[0], -1, 3)
    return arr


def _pelvis_relative(frames):
    """Subtract each frame's pelvis (joint 0) from all joints of that frame."""
    return frames - frames[:, 0:1, :]
