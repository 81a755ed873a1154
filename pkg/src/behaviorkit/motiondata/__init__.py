"""Synthetic skeletal motion: generation, normalization, datasets, files."""

from .skeleton import (
    JOINT_NAMES,
    BONES,
    BONE_LENGTHS,
    N_JOINTS,
    POSE_DIM,
    AngleFrame,
    base_angles,
    forward_kinematics,
    bone_length_errors,
)
from .generator import FAMILIES, FamilyParams, synth_generate, sample_family_params
from .dataset import (
    PoseSequence,
    NormStats,
    MotionDataset,
    fit_norm_stats,
    normalize,
    denormalize,
    make_dataset,
)
from .seqio import save_sequences, load_sequences, save_dataset, load_dataset

__all__ = [
    "JOINT_NAMES", "BONES", "BONE_LENGTHS", "N_JOINTS", "POSE_DIM",
    "AngleFrame", "base_angles", "forward_kinematics", "bone_length_errors",
    "FAMILIES", "FamilyParams", "synth_generate", "sample_family_params",
    "PoseSequence", "NormStats", "MotionDataset",
    "fit_norm_stats", "normalize", "denormalize", "make_dataset",
    "save_sequences", "load_sequences", "save_dataset", "load_dataset",
]
