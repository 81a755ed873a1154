"""Generator kinematics, normalization, dataset assembly, sequence files."""

import numpy as np
import pytest

from behaviorkit.errors import ContractError, SequenceFormatError
from behaviorkit.motiondata import (
    BONES,
    FAMILIES,
    FamilyParams,
    MotionDataset,
    PoseSequence,
    bone_length_errors,
    fit_norm_stats,
    denormalize,
    load_dataset,
    load_sequences,
    make_dataset,
    normalize,
    sample_family_params,
    save_dataset,
    save_sequences,
    synth_generate,
)
from behaviorkit.motiondata.dataset import STD_FLOOR


def _params(family, amplitude=0.5, frequency=1.5, phase=0.7, posture_id=0):
    if family == "idle-sway":
        amplitude = min(amplitude, 0.15)
    return FamilyParams(amplitude=amplitude, frequency=frequency, phase=phase,
                        posture_id=posture_id)


# ------------------------------------------------------------- synth_generate

@pytest.mark.parametrize("family", FAMILIES)
def test_zero_amplitude_freezes_the_posture(family):
    seq = synth_generate(family, FamilyParams(0.0, 1.0, 0.3, 0), seed=4)
    assert seq.shape == (50, 17, 3)
    assert np.array_equal(seq, np.broadcast_to(seq[0], seq.shape))


@pytest.mark.parametrize("family", FAMILIES)
def test_same_inputs_same_sequence(family):
    a = synth_generate(family, _params(family), seed=123)
    b = synth_generate(family, _params(family), seed=123)
    assert np.array_equal(a, b)
    c = synth_generate(family, _params(family), seed=124)
    assert not np.array_equal(a, c)


def test_generate_rejects_bad_inputs():
    p = _params("wave")
    with pytest.raises(ContractError, match="family"):
        synth_generate("moonwalk", p, seed=0)
    with pytest.raises(ContractError, match="amplitude"):
        synth_generate("wave", FamilyParams(-0.1, 1.0, 0.0, 0), seed=0)
    with pytest.raises(ContractError, match="frequency"):
        synth_generate("wave", FamilyParams(0.5, 0.0, 0.0, 0), seed=0)
    with pytest.raises(ContractError, match="phase"):
        synth_generate("wave", FamilyParams(0.5, 1.0, float("nan"), 0), seed=0)
    with pytest.raises(ContractError, match="frames"):
        synth_generate("wave", p, seed=0, frames=1)


@pytest.mark.parametrize("amplitude", [0.30, 0.55, 0.80])
def test_arm_raise_wrist_rise_equals_amplitude(amplitude):
    # the raise happens on the ramp segment: frames 5 through 45 of 50
    seq = synth_generate("arm-raise", FamilyParams(amplitude, 1.0, 0.0, 0),
                         seed=11)
    wrist_z = seq[:, 10, 2]
    assert wrist_z[45] - wrist_z[5] == pytest.approx(amplitude, abs=1e-9)
    assert np.all(np.diff(wrist_z[5:46]) >= -1e-9)


def test_arm_raise_amplitude_beyond_reach_rejected():
    with pytest.raises(ContractError, match="reach"):
        synth_generate("arm-raise", FamilyParams(5.0, 1.0, 0.0, 0), seed=0)


@pytest.mark.parametrize("family", FAMILIES)
def test_bone_lengths_stay_rigid(family):
    rng = np.random.default_rng(5)
    seq = synth_generate(family, sample_family_params(family, rng), seed=17)
    assert np.max(bone_length_errors(seq)) < 1e-9


@pytest.mark.parametrize("family", FAMILIES)
def test_first_frame_is_a_plain_base_posture(family):
    # the intro blend starts every family from its base posture, so frame 0
    # differs from the frozen (zero-amplitude) posture only by jitter
    p = _params(family)
    moving = synth_generate(family, p, seed=9)
    frozen = synth_generate(
        family, FamilyParams(0.0, p.frequency, p.phase, p.posture_id), seed=9)
    assert np.abs(moving[0] - frozen[0]).max() < 0.02


# -------------------------------------------------------------- normalization

def test_fit_norm_stats_matches_direct_recomputation():
    seqs = [PoseSequence(frames=synth_generate(f, _params(f), seed=i))
            for i, f in enumerate(FAMILIES)]
    stats = fit_norm_stats(seqs)
    stacked = np.concatenate([s.frames for s in seqs], axis=0)
    assert np.allclose(stats.mean, stacked.mean(axis=0), atol=1e-12)
    assert np.allclose(stats.std, np.maximum(stacked.std(axis=0), STD_FLOOR),
                       atol=1e-12)
    normed = normalize(stacked, stats)
    # floored (near-constant) coordinates amplify float cancellation noise
    # by 1/STD_FLOOR, so the bound is looser than machine epsilon
    assert np.abs(normed.mean(axis=0)).max() < 1e-8


def test_fit_norm_stats_floors_constant_coordinates():
    frames = np.zeros((4, 17, 3))
    frames[:, 0, 0] = [1.0, 2.0, 3.0, 4.0]  # one moving coordinate
    stats = fit_norm_stats([PoseSequence(frames=frames)])
    assert stats.std[0, 0] > STD_FLOOR
    assert np.all(stats.std[1:] == STD_FLOOR)
    out = normalize(frames, stats)
    assert np.all(np.isfinite(out))


def test_fit_norm_stats_rejects_empty():
    with pytest.raises(ContractError, match="zero sequences"):
        fit_norm_stats([])


def test_normalize_denormalize_round_trip():
    seq = synth_generate("squat", _params("squat"), seed=2)
    stats = fit_norm_stats([PoseSequence(frames=seq)])
    back = denormalize(normalize(seq, stats), stats)
    assert np.abs(back - seq).max() < 1e-12


# ------------------------------------------------------------------- datasets

def test_make_dataset_split_counts_and_disjointness():
    ds = make_dataset(seed=3, count_per_family=10)
    assert len(ds.train) == 6 * 8
    assert len(ds.test) == 6 * 2
    train_ids = {s.source_id for s in ds.train}
    test_ids = {s.source_id for s in ds.test}
    assert not train_ids & test_ids
    for split in (ds.train, ds.test):
        for s in split:
            assert s.family in FAMILIES
            assert s.frames.shape == (50, 17, 3)


def test_make_dataset_is_deterministic():
    a = make_dataset(seed=3, count_per_family=4)
    b = make_dataset(seed=3, count_per_family=4)
    assert [s.source_id for s in a.train] == [s.source_id for s in b.train]
    assert all(np.array_equal(x.frames, y.frames)
               for x, y in zip(a.train + a.test, b.train + b.test))
    c = make_dataset(seed=4, count_per_family=4)
    assert not np.array_equal(a.train[0].frames, c.train[0].frames)


def test_make_dataset_held_out_family_goes_entirely_to_test():
    ds = make_dataset(seed=3, count_per_family=6, held_out=("wave",))
    assert all(s.family != "wave" for s in ds.train)
    assert sum(s.family == "wave" for s in ds.test) == 6
    # stats must come from the train split only
    recomputed = fit_norm_stats(ds.train)
    assert np.array_equal(ds.stats.mean, recomputed.mean)
    assert np.array_equal(ds.stats.std, recomputed.std)


def test_make_dataset_rejects_unknown_held_out_and_bad_ratio():
    with pytest.raises(ContractError, match="held-out"):
        make_dataset(seed=1, count_per_family=4, held_out=("jog",))
    with pytest.raises(ContractError, match="split_ratio"):
        make_dataset(seed=1, count_per_family=4, split_ratio=1.0)


def test_array_views_are_normalized_and_shaped():
    ds = make_dataset(seed=5, count_per_family=4)
    arr = ds.train_array()
    assert arr.shape == (len(ds.train), 50, 51)
    raw = ds.train_array(normalized=False)
    stats = ds.stats
    again = (raw.reshape(-1, 50, 17, 3) - stats.mean) / stats.std
    assert np.allclose(arr, again.reshape(arr.shape), atol=1e-12)


# ------------------------------------------------------------- sequence files

def test_sequence_file_round_trip_is_bit_exact(tmp_path):
    ds = make_dataset(seed=6, count_per_family=3)
    path = tmp_path / "seqs.jsonl"
    save_sequences(path, ds.test)
    loaded = load_sequences(path)
    assert len(loaded) == len(ds.test)
    for orig, back in zip(ds.test, loaded):
        assert np.array_equal(orig.frames, back.frames)
        assert orig.family == back.family
        assert orig.source_id == back.source_id


def test_sequence_file_saves_are_byte_identical(tmp_path):
    ds = make_dataset(seed=6, count_per_family=3)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_sequences(p1, ds.test)
    save_sequences(p2, ds.test)
    assert p1.read_bytes() == p2.read_bytes()


def test_save_sequences_rejects_empty_and_ragged(tmp_path):
    with pytest.raises(ContractError, match="empty"):
        save_sequences(tmp_path / "x.jsonl", [])
    good = PoseSequence(frames=np.zeros((5, 17, 3)), source_id="good")
    bad = PoseSequence(frames=np.zeros((4, 17, 3)), source_id="short-one")
    with pytest.raises(ContractError, match="short-one"):
        save_sequences(tmp_path / "x.jsonl", [good, bad])


def test_load_sequences_reports_offending_line(tmp_path):
    ds = make_dataset(seed=6, count_per_family=3)
    path = tmp_path / "seqs.jsonl"
    save_sequences(path, ds.test[:3])
    lines = path.read_text().splitlines()

    truncated = tmp_path / "trunc.jsonl"
    truncated.write_text("\n".join(lines[:2] + [lines[2][:40]]) + "\n")
    with pytest.raises(SequenceFormatError, match="line 3"):
        load_sequences(truncated)

    import json
    rec = json.loads(lines[1])
    rec["data"] = [row[:16] for row in rec["data"]]  # drop a joint
    mismatched = tmp_path / "badshape.jsonl"
    mismatched.write_text("\n".join([lines[0], json.dumps(rec)]) + "\n")
    with pytest.raises(SequenceFormatError, match="shape"):
        load_sequences(mismatched)

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(SequenceFormatError, match="header"):
        load_sequences(empty)

    wrong_version = tmp_path / "vers.jsonl"
    wrong_version.write_text(
        '{"version": 99, "joints": 17, "frames": 5, "dims": 3}\n' + lines[1] + "\n")
    with pytest.raises(SequenceFormatError, match="version 99"):
        load_sequences(wrong_version)


def test_dataset_directory_round_trip(tmp_path):
    ds = make_dataset(seed=8, count_per_family=3, held_out=("squat",))
    out = tmp_path / "data"
    save_dataset(out, ds)
    back = load_dataset(out)
    assert isinstance(back, MotionDataset)
    assert back.held_out_families == ("squat",)
    assert back.config["seed"] == 8
    assert np.array_equal(back.stats.mean, ds.stats.mean)
    assert len(back.train) == len(ds.train)
    assert np.array_equal(back.train[0].frames, ds.train[0].frames)
