"""Sequences, normalization statistics, and train/test dataset assembly."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .generator import FAMILIES, sample_family_params, synth_generate
from .skeleton import N_JOINTS

STD_FLOOR = 1e-6


@dataclass
class PoseSequence:
    """One motion clip: frames is (n, 17, 3); family may be None for synthesized data."""

    frames: np.ndarray
    family: str = None
    source_id: str = ""

    @property
    def n_frames(self):
        return self.frames.shape[0]


@dataclass
class NormStats:
    """Per-coordinate mean/std over training frames; shapes (17, 3)."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def fit_norm_stats(sequences):
    """Pool all frames of the given sequences and fit mean/std per coordinate.

    Constant coordinates get their std floored at 1e-6 rather than zero, so
    normalization never divides by zero.
    """
    if not sequences:
        raise ContractError("cannot fit normalization stats on zero sequences")
    stacked = np.concatenate([s.frames for s in sequences], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.maximum(std, STD_FLOOR)
    return NormStats(mean=mean, std=std)


def normalize(frames, stats):
    return (np.asarray(frames, dtype=float) - stats.mean) / stats.std


def denormalize(frames, stats):
    return np.asarray(frames, dtype=float) * stats.std + stats.mean


@dataclass
class MotionDataset:
    train: list
    test: list
    stats: NormStats
    held_out_families: tuple = ()
    config: dict = field(default_factory=dict)

    def train_array(self, normalized=True):
        """Stack the train split into (N, n, 51), optionally normalized."""
        return _stack(self.train, self.stats if normalized else None)

    def test_array(self, normalized=True):
        return _stack(self.test, self.stats if normalized else None)


def _stack(seqs, stats):
    out = np.stack([s.frames for s in seqs], axis=0)
    if stats is not None:
        out = (out - stats.mean) / stats.std
    n = out.shape[0]
    return out.reshape(n, out.shape[1], N_JOINTS * 3)


def make_dataset(seed=7, count_per_family=125, families=None, held_out=(),
                 split_ratio=0.8, frames=50):
    """Generate a labelled train/test dataset of synthetic motion.

    Each family contributes count_per_family sequences with parameters drawn
    from its documented ranges.  Held-out families go entirely to the test
    split (for generalization probes); the rest are split per family by
    split_ratio.  Normalization stats are fit on the train split only.
    The same arguments always produce an identical dataset.
    """
    families = list(families) if families is not None else list(FAMILIES)
    for f in list(held_out):
        if f not in families:
            raise ContractError(f"held-out family '{f}' is not in the family list")
    if not 0.0 < split_ratio < 1.0:
        raise ContractError(f"split_ratio must be in (0, 1), got {split_ratio}")
    if count_per_family < 2:
        raise ContractError("need at least 2 sequences per family")

    train, test = [], []
    for fam_idx, family in enumerate(families):
        seqs = []
        for j in range(count_per_family):
            prng = np.random.default_rng([seed, fam_idx, j, 1])
            params = sample_family_params(family, prng)
            data = synth_generate(family, params, seed=[seed, fam_idx, j, 2],
                                  frames=frames)
            seqs.append(PoseSequence(frames=data, family=family,
                                     source_id=f"{family}-{j:04d}"))
        if family in held_out:
            test.extend(seqs)
            continue
        order = np.random.default_rng([seed, fam_idx, 77]).permutation(count_per_family)
        n_train = int(round(split_ratio * count_per_family))
        train.extend(seqs[i] for i in order[:n_train])
        test.extend(seqs[i] for i in order[n_train:])

    if not train:
        raise ContractError("every family was held out; train split is empty")
    stats = fit_norm_stats(train)
    cfg = {"seed": seed, "count_per_family": count_per_family,
           "families": families, "held_out": list(held_out),
           "split_ratio": split_ratio, "frames": frames}
    return MotionDataset(train=train, test=test, stats=stats,
                         held_out_families=tuple(held_out), config=cfg)
